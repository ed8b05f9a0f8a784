#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::formats::read_eval_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_eval_csv(data);
});
