#![no_main]

use libfuzzer_sys::fuzz_target;
use trajunc_core::formats::{heatmap_to_line, parse_heatmap_line};

fuzz_target!(|data: &str| {
    if let Ok(rec) = parse_heatmap_line(data) {
        let again = parse_heatmap_line(&heatmap_to_line(&rec.sample_id, &rec.heatmap)).expect("re-encoded line parses");
        assert_eq!(again.heatmap.cells().len(), rec.heatmap.cells().len());
    }
});
