//! Every checked-in fuzz seed is a valid input for its target.

use std::fs;
use std::path::Path;

use trajunc_core::calibration::CalibrationModel;
use trajunc_core::config::RunConfig;
use trajunc_core::formats::{parse_ground_truth_line, parse_heatmap_line, parse_prediction_line, parse_sample_line, read_eval_csv};
use trajunc_core::harness::RunManifest;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("seed-"))
        .map(|p| (p.display().to_string(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn seeds_are_accepted() {
    let checks: [(&str, fn(&str) -> bool); 8] = [
        ("parse_sample_line", |s| parse_sample_line(s).is_ok()),
        ("parse_heatmap_line", |s| parse_heatmap_line(s).is_ok()),
        ("parse_ground_truth_line", |s| parse_ground_truth_line(s).is_ok()),
        ("parse_prediction_line", |s| parse_prediction_line(s).is_ok()),
        ("calibration_model", |s| CalibrationModel::from_json(s).is_ok()),
        ("read_eval_csv", |s| read_eval_csv(s.as_bytes()).is_ok()),
        ("run_config", |s| RunConfig::from_json(s).is_ok()),
        ("run_manifest", |s| RunManifest::from_json(s).is_ok()),
    ];
    for (target, ok) in checks {
        for (path, text) in seeds(target) {
            assert!(ok(&text), "{path} rejected");
        }
    }
}
