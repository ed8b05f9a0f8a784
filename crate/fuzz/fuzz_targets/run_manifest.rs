#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::harness::RunManifest;

fuzz_target!(|data: &str| {
    let _ = RunManifest::from_json(data);
});
