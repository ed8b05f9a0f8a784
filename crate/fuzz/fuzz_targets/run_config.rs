#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::config::RunConfig;

fuzz_target!(|data: &str| {
    let _ = RunConfig::from_json(data);
});
