#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::formats::parse_ground_truth_line;

fuzz_target!(|data: &str| {
    if let Ok(rec) = parse_ground_truth_line(data) {
        assert!(rec.gt.iter().all(|v| v.is_finite()));
    }
});
