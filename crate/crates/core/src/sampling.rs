//! Endpoint extraction by greedy non-maximum suppression.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationModel;
use crate::heatmap::{uncertainty, Heatmap, UncertaintyEstimate};
use crate::{Error, Point2, Result};

/// Grids up to this many cells get a flat index lookup table for NMS.
const DENSE_LOOKUP_LIMIT: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Endpoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

impl Endpoint {
    pub fn position(&self) -> Point2 {
        [self.x, self.y]
    }
}

impl From<[f64; 3]> for Endpoint {
    fn from([x, y, score]: [f64; 3]) -> Self {
        Self { x, y, score }
    }
}

impl From<Endpoint> for [f64; 3] {
    fn from(e: Endpoint) -> Self {
        [e.x, e.y, e.score]
    }
}

/// Endpoints in emission order (non-increasing score).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub endpoints: Vec<Endpoint>,
    pub radius_used: f64,
    pub uncertainty: Option<UncertaintyEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    Fixed(f64),
    Adaptive(CalibrationModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub k: usize,
    pub radius: RadiusMode,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            k: 6,
            radius: RadiusMode::Fixed(1.5),
            r_min: 0.1,
            r_max: 10.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max && self.r_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < r_min <= r_max, got r_min = {}, r_max = {}",
                self.r_min, self.r_max
            )));
        }
        match &self.radius {
            RadiusMode::Fixed(r) if !(*r > 0.0 && r.is_finite()) => {
                Err(Error::InvalidConfig(format!("fixed radius must be positive, got {r}")))
            }
            RadiusMode::Adaptive(m) if !(m.a.is_finite() && m.b.is_finite()) => {
                Err(Error::InvalidConfig("calibration coefficients must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn with_radius(&self, radius: RadiusMode) -> Self {
        Self {
            radius,
            ..self.clone()
        }
    }
}

enum CellLookup {
    Dense(Vec<u32>),
    Sparse(HashMap<u64, u32>),
}

impl CellLookup {
    fn get(&self, index: u64) -> Option<usize> {
        match self {
            CellLookup::Dense(v) => match v[index as usize] {
                u32::MAX => None,
                slot => Some(slot as usize),
            },
            CellLookup::Sparse(m) => m.get(&index).map(|&s| s as usize),
        }
    }
}

/// Precomputed peak ordering and cell lookup for one heatmap, reusable
/// across radii.
pub struct NmsIndex<'a> {
    heatmap: &'a Heatmap,
    /// Positions of positive-mass cells, by descending probability then
    /// ascending grid index.
    order: Vec<u32>,
    lookup: CellLookup,
}

impl<'a> NmsIndex<'a> {
    pub fn new(heatmap: &'a Heatmap) -> Result<Self> {
        let cells = heatmap.cells();
        if cells.iter().all(|&(_, p)| p <= 0.0) {
            return Err(Error::EmptyHeatmap);
        }
        let mut order: Vec<u32> = (0..cells.len() as u32)
            .filter(|&i| cells[i as usize].1 > 0.0)
            .collect();
        // cells are stored in index order, so a stable sort on probability
        // alone breaks ties by the lowest index
        order.sort_by(|&a, &b| cells[b as usize].1.total_cmp(&cells[a as usize].1));

        let grid = heatmap.grid();
        let lookup = if grid.cell_count() <= DENSE_LOOKUP_LIMIT {
            let mut dense = vec![u32::MAX; grid.cell_count() as usize];
            for (slot, &(idx, _)) in cells.iter().enumerate() {
                dense[idx as usize] = slot as u32;
            }
            CellLookup::Dense(dense)
        } else {
            CellLookup::Sparse(
                cells
                    .iter()
                    .enumerate()
                    .map(|(slot, &(idx, _))| (idx, slot as u32))
                    .collect(),
            )
        };
        Ok(Self {
            heatmap,
            order,
            lookup,
        })
    }

    /// Greedy NMS: pick the heaviest live cell, score it with the live mass
    /// within `r` of its center, suppress that mass, repeat up to `k` times.
    /// The picks are returned stably sorted by descending score, since a
    /// later peak can collect more mass than an earlier isolated one.
    pub fn sample(&self, k: usize, r: f64) -> Vec<Endpoint> {
        let cells = self.heatmap.cells();
        let grid = self.heatmap.grid();
        let r2 = r * r;
        let mut suppressed = vec![false; cells.len()];
        let mut endpoints = Vec::with_capacity(k);
        let mut cursor = 0;

        while endpoints.len() < k {
            while cursor < self.order.len() && suppressed[self.order[cursor] as usize] {
                cursor += 1;
            }
            let Some(&peak) = self.order.get(cursor) else {
                break;
            };
            let [cx, cy] = grid.cell_center(cells[peak as usize].0);
            let mut mass = 0.0;
            let mut visit = |slot: usize| {
                if suppressed[slot] {
                    return;
                }
                let [x, y] = grid.cell_center(cells[slot].0);
                let (dx, dy) = (x - cx, y - cy);
                if dx * dx + dy * dy <= r2 {
                    mass += cells[slot].1;
                    suppressed[slot] = true;
                }
            };

            let cols = axis_window(grid.origin_x, grid.resolution, grid.width, cx, r);
            let rows = axis_window(grid.origin_y, grid.resolution, grid.height, cy, r);
            let window = (u64::from(cols.1 - cols.0) + 1) * (u64::from(rows.1 - rows.0) + 1);
            if window >= cells.len() as u64 {
                (0..cells.len()).for_each(&mut visit);
            } else {
                for row in rows.0..=rows.1 {
                    for col in cols.0..=cols.1 {
                        if let Some(slot) = self.lookup.get(grid.index(row, col)) {
                            visit(slot);
                        }
                    }
                }
            }
            endpoints.push(Endpoint {
                x: cx,
                y: cy,
                score: mass,
            });
        }
        endpoints.sort_by(|a, b| b.score.total_cmp(&a.score));
        endpoints
    }
}

/// Inclusive index range of grid cells along one axis that can lie within
/// `r` of `c`, padded by one cell against rounding.
fn axis_window(origin: f64, res: f64, n: u32, c: f64, r: f64) -> (u32, u32) {
    let lo = ((c - r - origin) / res).floor() - 1.0;
    let hi = ((c + r - origin) / res).ceil() + 1.0;
    let max = f64::from(n) - 1.0;
    (lo.clamp(0.0, max) as u32, hi.clamp(0.0, max) as u32)
}

/// Up to `k` endpoints separated by more than `r`.
pub fn nms_sample(h: &Heatmap, k: usize, r: f64) -> Result<PredictionSet> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidConfig(format!("radius must be positive, got {r}")));
    }
    let index = NmsIndex::new(h)?;
    Ok(PredictionSet {
        endpoints: index.sample(k, r),
        radius_used: r,
        uncertainty: None,
    })
}

/// `clamp(a * U + b, r_min, r_max)`.
pub fn adaptive_radius(u: f64, model: &CalibrationModel, r_min: f64, r_max: f64) -> f64 {
    (model.a * u + model.b).clamp(r_min, r_max)
}

/// Radius the config prescribes for a heatmap with uncertainty `u`.
pub fn resolve_radius(u: f64, cfg: &SamplingConfig) -> f64 {
    match &cfg.radius {
        RadiusMode::Fixed(r) => *r,
        RadiusMode::Adaptive(model) => adaptive_radius(u, model, cfg.r_min, cfg.r_max),
    }
}

/// Computes the heatmap's uncertainty, picks the radius and runs NMS.
pub fn sample_with_uncertainty(h: &Heatmap, cfg: &SamplingConfig) -> Result<PredictionSet> {
    cfg.validate()?;
    let est = uncertainty(h);
    let r = resolve_radius(est.u, cfg);
    let mut set = nms_sample(h, cfg.k, r)?;
    set.uncertainty = Some(est);
    Ok(set)
}
