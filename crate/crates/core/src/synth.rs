//! Deterministic synthetic scenarios: Gaussian-mixture endpoint
//! distributions rendered to heatmaps, with the ground truth drawn from the
//! same mixture.
//!
//! Each scenario index gets its own ChaCha stream derived from
//! `(seed, index)`, so any subset can be regenerated in any order.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::content_hash;
use crate::formats::{ground_truth_to_line, heatmap_to_line, write_json, write_lines};
use crate::heatmap::{render_mixture, GridSpec, Heatmap, MixtureMode, MixtureSpec};
use crate::{Error, Point2, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Inclusive range of mixture mode counts.
    pub n_modes_range: [usize; 2],
    pub mean_region: Region,
    /// Inclusive range of per-mode standard deviations, meters.
    pub sigma_range: [f64; 2],
    /// Minimum weight of any mode.
    pub weight_floor: f64,
    pub grid: GridSpec,
    pub truncate_sigmas: f64,
    /// Ground truth is drawn with each mode's sigma times this factor;
    /// values above 1 make the heatmaps overconfident.
    pub gt_sigma_scale: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_modes_range: [1, 4],
            mean_region: Region {
                x_min: 0.0,
                x_max: 60.0,
                y_min: -20.0,
                y_max: 20.0,
            },
            sigma_range: [0.5, 6.0],
            weight_floor: 0.1,
            // mean region padded by 4 sigma_max on each side
            grid: GridSpec {
                origin_x: -24.0,
                origin_y: -44.0,
                resolution: 0.5,
                width: 217,
                height: 177,
            },
            truncate_sigmas: 4.0,
            gt_sigma_scale: 1.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.n_modes_range;
        if lo == 0 || lo > hi {
            return Err(Error::InvalidConfig(format!("invalid n_modes_range [{lo}, {hi}]")));
        }
        let r = &self.mean_region;
        if !(r.x_min <= r.x_max && r.y_min <= r.y_max)
            || ![r.x_min, r.x_max, r.y_min, r.y_max].iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidConfig("invalid mean_region".into()));
        }
        let [s0, s1] = self.sigma_range;
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid sigma_range [{s0}, {s1}]")));
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor * hi as f64 <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "weight_floor {} is incompatible with up to {hi} modes",
                self.weight_floor
            )));
        }
        if !(self.truncate_sigmas >= 3.0 && self.truncate_sigmas.is_finite()) {
            return Err(Error::InvalidConfig("truncate_sigmas must be at least 3".into()));
        }
        if !(self.gt_sigma_scale > 0.0 && self.gt_sigma_scale.is_finite()) {
            return Err(Error::InvalidConfig("gt_sigma_scale must be positive".into()));
        }
        self.grid.validate()
    }

    /// Single-mode scenarios near the agent with U spread over roughly
    /// 0..26 m^2, dense enough for per-integer-bin statistics at 10^4
    /// samples. Same values as `configs/desk_scale.json`.
    pub fn desk_scale() -> Self {
        Self {
            n_modes_range: [1, 1],
            mean_region: Region {
                x_min: 15.0,
                x_max: 25.0,
                y_min: -5.0,
                y_max: 5.0,
            },
            sigma_range: [0.3, 3.6],
            grid: GridSpec {
                origin_x: 0.0,
                origin_y: -20.0,
                resolution: 0.5,
                width: 80,
                height: 80,
            },
            ..Self::default()
        }
    }

    /// Config for single-mode scenarios with a fixed sigma.
    pub fn single_mode(sigma: f64) -> Self {
        Self {
            n_modes_range: [1, 1],
            sigma_range: [sigma, sigma],
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub sample_id: String,
    pub heatmap: Heatmap,
    pub gt: Point2,
    pub mixture: MixtureSpec,
}

pub fn scenario_id(index: u64) -> String {
    format!("synth-{index:07}")
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// Draws the mixture and ground truth for one index without rendering.
pub fn draw_mixture(cfg: &ScenarioConfig, index: u64) -> (MixtureSpec, Point2) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);

    let [lo, hi] = cfg.n_modes_range;
    let n = rng.random_range(lo..=hi);
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let raw_total: f64 = raw.iter().sum();
    let free = 1.0 - cfg.weight_floor * n as f64;
    let mut weights: Vec<f64> = raw
        .iter()
        .map(|w| cfg.weight_floor + free * w / raw_total)
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let region = cfg.mean_region;
    let modes: Vec<MixtureMode> = weights
        .into_iter()
        .map(|weight| MixtureMode {
            weight,
            mean: [
                uniform(&mut rng, region.x_min, region.x_max),
                uniform(&mut rng, region.y_min, region.y_max),
            ],
            sigma: uniform(&mut rng, cfg.sigma_range[0], cfg.sigma_range[1]),
        })
        .collect();

    let pick: f64 = rng.random();
    let mut acc = 0.0;
    let mode = modes
        .iter()
        .find(|m| {
            acc += m.weight;
            pick < acc
        })
        .unwrap_or_else(|| modes.last().expect("at least one mode"));
    let gx: f64 = StandardNormal.sample(&mut rng);
    let gy: f64 = StandardNormal.sample(&mut rng);
    let spread = mode.sigma * cfg.gt_sigma_scale;
    let gt = [mode.mean[0] + spread * gx, mode.mean[1] + spread * gy];
    (MixtureSpec { modes }, gt)
}

pub fn sample_scenario(cfg: &ScenarioConfig, index: u64) -> Result<Scenario> {
    cfg.validate()?;
    let (mixture, gt) = draw_mixture(cfg, index);
    let heatmap = render_mixture(&mixture, &cfg.grid, cfg.truncate_sigmas)?;
    Ok(Scenario {
        sample_id: scenario_id(index),
        heatmap,
        gt,
        mixture,
    })
}

/// Scenarios `0..n`, generated in parallel, returned in index order.
pub fn generate(cfg: &ScenarioConfig, n: u64) -> Result<Vec<Scenario>> {
    cfg.validate()?;
    (0..n)
        .into_par_iter()
        .map(|i| sample_scenario(cfg, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: String,
    pub count: u64,
    pub config_hash: String,
    pub config: ScenarioConfig,
    pub heatmaps: String,
    pub ground_truth: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFiles {
    pub heatmaps: PathBuf,
    pub ground_truth: PathBuf,
    pub manifest: PathBuf,
}

pub const HEATMAPS_FILE: &str = "heatmaps.jsonl";
pub const GROUND_TRUTH_FILE: &str = "gt.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Writes `n` scenarios to `out_dir` as heatmap and ground-truth JSON Lines
/// plus a manifest echoing the config.
pub fn generate_dataset(cfg: &ScenarioConfig, n: u64, out_dir: &Path) -> Result<DatasetFiles> {
    if n == 0 {
        return Err(Error::InvalidConfig("dataset size must be at least 1".into()));
    }
    let scenarios = generate(cfg, n)?;
    let files = DatasetFiles {
        heatmaps: out_dir.join(HEATMAPS_FILE),
        ground_truth: out_dir.join(GROUND_TRUTH_FILE),
        manifest: out_dir.join(MANIFEST_FILE),
    };
    write_lines(
        &files.heatmaps,
        scenarios.iter().map(|s| heatmap_to_line(&s.sample_id, &s.heatmap)),
    )?;
    write_lines(
        &files.ground_truth,
        scenarios.iter().map(|s| ground_truth_to_line(&s.sample_id, s.gt)),
    )?;
    write_json(
        &files.manifest,
        &DatasetManifest {
            generator: "gaussian-mixture".into(),
            count: n,
            config_hash: content_hash(cfg),
            config: cfg.clone(),
            heatmaps: HEATMAPS_FILE.into(),
            ground_truth: GROUND_TRUTH_FILE.into(),
        },
    )?;
    Ok(files)
}
