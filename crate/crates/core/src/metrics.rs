//! Multimodal endpoint metrics (minFDE_l, MR_l) and the
//! uncertainty-vs-error binning analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numeric::{floor_bin, stable_mean};
use crate::sampling::PredictionSet;
use crate::{Error, Point2, Result};

/// A prediction counts as a miss when its best top-l endpoint is strictly
/// farther than this from the ground truth.
pub const MISS_THRESHOLD_M: f64 = 2.0;

fn distance(a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Smallest distance from `gt` to any of the first `l` endpoints. `l` is
/// clamped to the number of endpoints available.
pub fn min_fde(p: &PredictionSet, gt: Point2, l: usize) -> Result<f64> {
    if p.endpoints.is_empty() {
        return Err(Error::EmptyPrediction);
    }
    if l == 0 {
        return Err(Error::InvalidConfig("l must be at least 1".into()));
    }
    Ok(p.endpoints
        .iter()
        .take(l)
        .map(|e| distance(e.position(), gt))
        .fold(f64::INFINITY, f64::min))
}

pub fn is_miss(p: &PredictionSet, gt: Point2, l: usize, threshold: f64) -> Result<bool> {
    Ok(min_fde(p, gt, l)? > threshold)
}

/// Per-sample evaluation outcome; index `l - 1` of the vectors holds the
/// value for the top-l endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub uncertainty: f64,
    pub radius_used: f64,
    pub fde_per_l: Vec<f64>,
    pub miss_per_l: Vec<bool>,
}

impl EvalRecord {
    pub fn k(&self) -> usize {
        self.fde_per_l.len()
    }

    pub fn min_fde_1(&self) -> f64 {
        self.fde_per_l[0]
    }
}

/// Evaluates a prediction for `l = 1..=k`.
pub fn evaluate(sample_id: &str, p: &PredictionSet, gt: Point2, k: usize) -> Result<EvalRecord> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let fde_per_l = (1..=k)
        .map(|l| min_fde(p, gt, l))
        .collect::<Result<Vec<_>>>()?;
    let miss_per_l = fde_per_l.iter().map(|&d| d > MISS_THRESHOLD_M).collect();
    Ok(EvalRecord {
        sample_id: sample_id.to_owned(),
        uncertainty: p.uncertainty.map_or(f64::NAN, |u| u.u),
        radius_used: p.radius_used,
        fde_per_l,
        miss_per_l,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub count: usize,
    pub min_fde_l: Vec<f64>,
    pub mr_l: Vec<f64>,
}

impl AggregateReport {
    /// Value for the top-`l` endpoints (1-based).
    pub fn min_fde(&self, l: usize) -> f64 {
        self.min_fde_l[l - 1]
    }

    pub fn miss_rate(&self, l: usize) -> f64 {
        self.mr_l[l - 1]
    }
}

/// Dataset-level means. The result does not depend on record order.
pub fn aggregate(records: &[EvalRecord]) -> Result<AggregateReport> {
    let first = records.first().ok_or(Error::EmptyInput("evaluation records"))?;
    let k = first.k();
    if let Some(bad) = records
        .iter()
        .find(|r| r.fde_per_l.len() != k || r.miss_per_l.len() != k)
    {
        return Err(Error::Malformed(format!(
            "record {} has {} l-values, expected {k}",
            bad.sample_id,
            bad.fde_per_l.len()
        )));
    }
    let n = records.len();
    let mut min_fde_l = Vec::with_capacity(k);
    let mut mr_l = Vec::with_capacity(k);
    let mut column = Vec::with_capacity(n);
    for l in 0..k {
        column.clear();
        column.extend(records.iter().map(|r| r.fde_per_l[l]));
        min_fde_l.push(stable_mean(&column).expect("non-empty"));
        let misses = records.iter().filter(|r| r.miss_per_l[l]).count();
        mr_l.push(misses as f64 / n as f64);
    }
    Ok(AggregateReport {
        count: n,
        min_fde_l,
        mr_l,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBin {
    pub bin_lower: f64,
    pub mean_min_fde_1: f64,
    pub count: usize,
}

pub const DEFAULT_MIN_BIN_COUNT: usize = 100;

/// Floor-bins records on uncertainty and averages minFDE_1 per bin. Bins
/// with fewer than `min_count` records are left out.
pub fn bin_by_uncertainty(
    records: &[EvalRecord],
    bin_width: f64,
    min_count: usize,
) -> Result<Vec<UncertaintyBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!("bin_width must be positive, got {bin_width}")));
    }
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry(floor_bin(r.uncertainty, bin_width))
            .or_default()
            .push(r.min_fde_1());
    }
    Ok(groups
        .into_iter()
        .filter(|(_, v)| v.len() >= min_count.max(1))
        .map(|(bin, v)| UncertaintyBin {
            bin_lower: bin as f64 * bin_width,
            mean_min_fde_1: stable_mean(&v).expect("non-empty"),
            count: v.len(),
        })
        .collect())
}

/// Spearman correlation between bin position and mean minFDE_1.
pub fn binned_trend(bins: &[UncertaintyBin]) -> Option<f64> {
    let x: Vec<f64> = bins.iter().map(|b| b.bin_lower).collect();
    let y: Vec<f64> = bins.iter().map(|b| b.mean_min_fde_1).collect();
    crate::numeric::spearman(&x, &y)
}
