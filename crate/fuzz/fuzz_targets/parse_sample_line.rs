#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::formats::parse_sample_line;

fuzz_target!(|data: &str| {
    if let Ok(s) = parse_sample_line(data) {
        assert!(s.validate().is_ok());
    }
});
