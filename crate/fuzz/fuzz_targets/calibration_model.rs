#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::calibration::CalibrationModel;

fuzz_target!(|data: &str| {
    let _ = CalibrationModel::from_json(data);
});
