#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::formats::{parse_prediction_line, prediction_to_line};

fuzz_target!(|data: &str| {
    if let Ok(rec) = parse_prediction_line(data) {
        assert_eq!(parse_prediction_line(&prediction_to_line(&rec)).expect("re-encoded line parses"), rec);
    }
});
