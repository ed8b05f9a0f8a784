//! Affine uncertainty-to-radius calibration.
//!
//! For each calibration case the radius sweep finds the radius whose NMS
//! endpoints give the lowest minFDE; those optimal radii are averaged per
//! integer uncertainty bin and a count-weighted least-squares line is fit
//! through the bin averages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::heatmap::{uncertainty, Heatmap};
use crate::metrics::min_fde;
use crate::numeric::{floor_bin, stable_mean, CompensatedSum};
use crate::sampling::{NmsIndex, PredictionSet};
use crate::{Error, Point2, Result};

/// `r = a * U + b`, fit on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub a: f64,
    pub b: f64,
    pub source_dataset: String,
    #[serde(default)]
    pub bin_count: Option<usize>,
    #[serde(default)]
    pub residual_rms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl CalibrationModel {
    pub fn new(a: f64, b: f64, source_dataset: impl Into<String>) -> Self {
        Self {
            a,
            b,
            source_dataset: source_dataset.into(),
            bin_count: None,
            residual_rms: None,
            fixed_radius: None,
            provenance: None,
        }
    }

    /// Parses and validates a model file.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: CalibrationModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::Malformed("calibration coefficients must be finite".into()));
        }
        if self.b <= 0.0 {
            return Err(Error::NonPositiveIntercept(self.b));
        }
        if let Some(r) = self.fixed_radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Malformed(format!("fixed_radius must be positive, got {r}")));
            }
        }
        Ok(())
    }

    pub fn radius_for(&self, u: f64) -> f64 {
        self.a * u + self.b
    }
}

/// Published per-dataset calibrations, shipped as data files.
pub mod presets {
    use super::CalibrationModel;

    pub const NAMES: [&str; 4] = ["argoverse", "interaction", "nuscenes", "shifts"];

    fn source(name: &str) -> Option<&'static str> {
        Some(match name {
            "argoverse" => include_str!("../presets/argoverse.json"),
            "interaction" => include_str!("../presets/interaction.json"),
            "nuscenes" => include_str!("../presets/nuscenes.json"),
            "shifts" => include_str!("../presets/shifts.json"),
            _ => return None,
        })
    }

    /// Raw JSON of a preset file.
    pub fn json(name: &str) -> Option<&'static str> {
        source(name)
    }

    pub fn get(name: &str) -> Option<CalibrationModel> {
        source(name).map(|s| CalibrationModel::from_json(s).expect("bundled preset is valid"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiusSweepConfig {
    pub r_values: Vec<f64>,
    pub l_for_objective: usize,
}

impl Default for RadiusSweepConfig {
    /// 0.1 m to 5.0 m in 0.1 m steps, scored on minFDE_6.
    fn default() -> Self {
        Self {
            r_values: (1..=50).map(|i| f64::from(i) / 10.0).collect(),
            l_for_objective: 6,
        }
    }
}

impl RadiusSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() {
            return Err(Error::InvalidConfig("radius sweep is empty".into()));
        }
        if !self.r_values.iter().all(|r| *r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidConfig("sweep radii must be positive".into()));
        }
        if self.r_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("sweep radii must be strictly ascending".into()));
        }
        if self.l_for_objective == 0 {
            return Err(Error::InvalidConfig("l_for_objective must be at least 1".into()));
        }
        Ok(())
    }
}

/// minFDE_l at every radius of the sweep, in sweep order.
pub fn sweep_errors(h: &Heatmap, gt: Point2, k: usize, sweep: &RadiusSweepConfig) -> Result<Vec<f64>> {
    sweep.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let index = NmsIndex::new(h)?;
    sweep
        .r_values
        .iter()
        .map(|&r| {
            let set = PredictionSet {
                endpoints: index.sample(k, r),
                radius_used: r,
                uncertainty: None,
            };
            min_fde(&set, gt, sweep.l_for_objective)
        })
        .collect()
}

/// Sweep radius with the lowest minFDE; ties go to the smallest radius.
pub fn optimal_radius(h: &Heatmap, gt: Point2, k: usize, sweep: &RadiusSweepConfig) -> Result<f64> {
    let errors = sweep_errors(h, gt, k, sweep)?;
    let mut best = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = i;
        }
    }
    Ok(sweep.r_values[best])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusBin {
    pub bin_center: f64,
    pub mean_r_opt: f64,
    pub count: usize,
}

/// Floor-bins `(U, r_opt)` pairs on `U` and averages `r_opt` per bin,
/// keeping bins with at least `min_count` entries.
pub fn binned_optimal_radii(records: &[(f64, f64)], bin_width: f64, min_count: usize) -> Result<Vec<RadiusBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!("bin_width must be positive, got {bin_width}")));
    }
    let mut groups = std::collections::BTreeMap::<i64, Vec<f64>>::new();
    for &(u, r) in records {
        groups.entry(floor_bin(u, bin_width)).or_default().push(r);
    }
    let bins: Vec<RadiusBin> = groups
        .into_iter()
        .filter(|(_, v)| v.len() >= min_count.max(1))
        .map(|(bin, v)| RadiusBin {
            bin_center: bin as f64 * bin_width + bin_width / 2.0,
            mean_r_opt: stable_mean(&v).expect("non-empty"),
            count: v.len(),
        })
        .collect();
    if bins.is_empty() {
        return Err(Error::EmptyInput("no radius bin reaches min_count"));
    }
    Ok(bins)
}

/// Weighted least squares line `y = a x + b` minimizing
/// `sum w_i (y_i - a x_i - b)^2`.
pub fn ols_fit(points: &[(f64, f64)], weights: &[f64]) -> Result<(f64, f64)> {
    if points.len() != weights.len() {
        return Err(Error::InvalidConfig(format!(
            "{} points but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if !weights.iter().all(|w| *w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidConfig("weights must be positive".into()));
    }
    if !points.iter().all(|(x, y)| x.is_finite() && y.is_finite()) {
        return Err(Error::InvalidConfig("points must be finite".into()));
    }
    let total: f64 = weights.iter().copied().collect::<CompensatedSum>().value();
    if points.is_empty() {
        return Err(Error::DegenerateFit);
    }
    let weighted = |f: &dyn Fn(f64, f64) -> f64| {
        points
            .iter()
            .zip(weights)
            .map(|(&(x, y), &w)| w * f(x, y))
            .collect::<CompensatedSum>()
            .value()
    };
    let mx = weighted(&|x, _| x) / total;
    let my = weighted(&|_, y| y) / total;
    let sxx = weighted(&|x, _| (x - mx) * (x - mx));
    let sxy = weighted(&|x, y| (x - mx) * (y - my));
    if sxx == 0.0 || points.iter().all(|p| p.0 == points[0].0) {
        return Err(Error::DegenerateFit);
    }
    let a = sxy / sxx;
    Ok((a, my - a * mx))
}

fn weighted_rms_residual(points: &[(f64, f64)], weights: &[f64], a: f64, b: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    let ss = points
        .iter()
        .zip(weights)
        .map(|(&(x, y), &w)| w * (y - a * x - b).powi(2))
        .collect::<CompensatedSum>()
        .value();
    (ss / total).sqrt()
}

/// Settings for an end-to-end calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub k: usize,
    pub sweep: RadiusSweepConfig,
    pub bin_width: f64,
    pub min_count: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            k: 6,
            sweep: RadiusSweepConfig::default(),
            bin_width: 1.0,
            min_count: 100,
        }
    }
}

/// Calibration result with the intermediate tables behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFit {
    pub model: CalibrationModel,
    pub bins: Vec<RadiusBin>,
    /// `(U, r_opt)` per input case, in input order.
    pub cases: Vec<(f64, f64)>,
}

/// Sweep outcome for a whole dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// `(U, r_opt)` per case, in input order.
    pub cases: Vec<(f64, f64)>,
    /// Mean objective per sweep radius over all cases.
    pub mean_error: Vec<f64>,
    pub r_values: Vec<f64>,
}

impl SweepTable {
    /// Single radius with the lowest mean objective (smallest on ties).
    pub fn best_fixed_radius(&self) -> f64 {
        let mut best = 0;
        for (i, &e) in self.mean_error.iter().enumerate() {
            if e < self.mean_error[best] {
                best = i;
            }
        }
        self.r_values[best]
    }
}

/// Runs the radius sweep over every case in parallel. Results follow input
/// order and do not depend on the number of worker threads.
pub fn sweep_dataset(dataset: &[(Heatmap, Point2)], cfg: &CalibrationConfig) -> Result<SweepTable> {
    cfg.sweep.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyInput("calibration dataset"));
    }
    let rows: Vec<(f64, Vec<f64>)> = dataset
        .par_iter()
        .map(|(h, gt)| Ok((uncertainty(h).u, sweep_errors(h, *gt, cfg.k, &cfg.sweep)?)))
        .collect::<Result<_>>()?;
    let cases = rows
        .iter()
        .map(|(u, errors)| {
            let mut best = 0;
            for (i, &e) in errors.iter().enumerate() {
                if e < errors[best] {
                    best = i;
                }
            }
            (*u, cfg.sweep.r_values[best])
        })
        .collect();
    let mean_error = (0..cfg.sweep.r_values.len())
        .map(|j| {
            let column: Vec<f64> = rows.iter().map(|(_, e)| e[j]).collect();
            stable_mean(&column).expect("non-empty")
        })
        .collect();
    Ok(SweepTable {
        cases,
        mean_error,
        r_values: cfg.sweep.r_values.clone(),
    })
}

/// Fits the calibration line from precomputed `(U, r_opt)` cases.
pub fn fit_cases(cases: Vec<(f64, f64)>, cfg: &CalibrationConfig, source_dataset: &str) -> Result<CalibrationFit> {
    let bins = match binned_optimal_radii(&cases, cfg.bin_width, cfg.min_count) {
        Ok(b) => b,
        Err(Error::EmptyInput(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    if bins.len() < 2 {
        return Err(Error::InsufficientBins {
            found: bins.len(),
            min_count: cfg.min_count,
        });
    }
    let points: Vec<(f64, f64)> = bins.iter().map(|b| (b.bin_center, b.mean_r_opt)).collect();
    let weights: Vec<f64> = bins.iter().map(|b| b.count as f64).collect();
    let (a, b) = ols_fit(&points, &weights)?;
    if !(b > 0.0) {
        return Err(Error::NonPositiveIntercept(b));
    }
    let model = CalibrationModel {
        a,
        b,
        source_dataset: source_dataset.to_owned(),
        bin_count: Some(bins.len()),
        residual_rms: Some(weighted_rms_residual(&points, &weights, a, b)),
        fixed_radius: None,
        provenance: None,
    };
    Ok(CalibrationFit { model, bins, cases })
}

/// Sweep, bin and fit. The returned model also records the best single
/// fixed radius on the same data.
pub fn calibrate(dataset: &[(Heatmap, Point2)], cfg: &CalibrationConfig, source_dataset: &str) -> Result<CalibrationFit> {
    let table = sweep_dataset(dataset, cfg)?;
    let best_fixed = table.best_fixed_radius();
    let mut fit = fit_cases(table.cases, cfg, source_dataset)?;
    fit.model.fixed_radius = Some(best_fixed);
    Ok(fit)
}

/// Gaussian negative log-likelihood with predicted log-variance `s` and
/// observed error `e`: `L(s) = e * exp(-s) + s`. Returns the loss and
/// `dL/ds`.
pub fn learned_uncertainty_loss(s: f64, e: f64) -> (f64, f64) {
    let scaled = e * (-s).exp();
    (scaled + s, 1.0 - scaled)
}
