//! Sparse endpoint heatmaps and their spread-based uncertainty.
//!
//! A heatmap is a probability mass function over the cell centers of a
//! regular grid. The uncertainty of a heatmap is the trace of its spatial
//! covariance, `U = sum_p H(p) |p - E|^2` with `E = sum_p H(p) p`, where `p`
//! is a cell center in meters.

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::{Error, Point2, Result};

/// Upper bound on `width * height`. Heatmaps are sparse, so this only
/// guards index arithmetic and per-grid lookup tables.
pub const MAX_GRID_CELLS: u64 = 1 << 30;

/// Regular grid geometry. Cell `(row, col)` has its center at
/// `(origin_x + col * resolution, origin_y + row * resolution)` and
/// row-major index `row * width + col`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin_x: f64,
    pub origin_y: f64,
    pub resolution: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for GridSpec {
    /// 192 x 192 cells of 0.5 m centered on the agent.
    fn default() -> Self {
        Self::centered(0.5, 192, 192)
    }
}

impl GridSpec {
    /// Grid of `width x height` cells whose extent is centered on the origin.
    pub fn centered(resolution: f64, width: u32, height: u32) -> Self {
        Self {
            origin_x: -(f64::from(width) - 1.0) * resolution / 2.0,
            origin_y: -(f64::from(height) - 1.0) * resolution / 2.0,
            resolution,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.origin_x.is_finite() && self.origin_y.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be positive, got {}",
                self.resolution
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid("width and height must be at least 1".into()));
        }
        if self.cell_count() > MAX_GRID_CELLS {
            return Err(Error::InvalidGrid(format!(
                "{} cells exceeds the limit of {MAX_GRID_CELLS}",
                self.cell_count()
            )));
        }
        // far corner must stay finite
        let far_x = self.origin_x + f64::from(self.width) * self.resolution;
        let far_y = self.origin_y + f64::from(self.height) * self.resolution;
        if !(far_x.is_finite() && far_y.is_finite()) {
            return Err(Error::InvalidGrid("grid extent overflows".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn row_col(&self, index: u64) -> (u32, u32) {
        let w = u64::from(self.width);
        ((index / w) as u32, (index % w) as u32)
    }

    pub fn index(&self, row: u32, col: u32) -> u64 {
        u64::from(row) * u64::from(self.width) + u64::from(col)
    }

    pub fn cell_center(&self, index: u64) -> Point2 {
        let (row, col) = self.row_col(index);
        [
            self.origin_x + f64::from(col) * self.resolution,
            self.origin_y + f64::from(row) * self.resolution,
        ]
    }

    /// Cell center relative to the center of cell (0, 0).
    fn local_center(&self, index: u64) -> Point2 {
        let (row, col) = self.row_col(index);
        [
            f64::from(col) * self.resolution,
            f64::from(row) * self.resolution,
        ]
    }

    /// `[x_min, y_min, x_max, y_max]` of the area covered by the cells.
    pub fn bounds(&self) -> [f64; 4] {
        let half = self.resolution / 2.0;
        [
            self.origin_x - half,
            self.origin_y - half,
            self.origin_x + (f64::from(self.width) - 0.5) * self.resolution,
            self.origin_y + (f64::from(self.height) - 0.5) * self.resolution,
        ]
    }

    /// Inclusive column range whose centers may lie within `[lo, hi]` along x,
    /// clipped to the grid. `None` if the interval misses the grid.
    fn col_range(&self, lo: f64, hi: f64) -> Option<(u32, u32)> {
        axis_range(self.origin_x, self.resolution, self.width, lo, hi)
    }

    fn row_range(&self, lo: f64, hi: f64) -> Option<(u32, u32)> {
        axis_range(self.origin_y, self.resolution, self.height, lo, hi)
    }
}

fn axis_range(origin: f64, res: f64, n: u32, lo: f64, hi: f64) -> Option<(u32, u32)> {
    let first = ((lo - origin) / res).floor().max(0.0);
    let last = ((hi - origin) / res).ceil().min(f64::from(n) - 1.0);
    (first <= last).then(|| (first as u32, last as u32))
}

/// Sparse heatmap. Cells are kept sorted by index with unique indices and
/// non-negative finite mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    grid: GridSpec,
    cells: Vec<(u64, f64)>,
}

impl Heatmap {
    /// Builds a heatmap from raw (not necessarily normalized) cell masses.
    pub fn from_cells(grid: GridSpec, mut cells: Vec<(u64, f64)>) -> Result<Self> {
        grid.validate()?;
        let n = grid.cell_count();
        for &(idx, p) in &cells {
            if idx >= n {
                return Err(Error::InvalidHeatmap(format!(
                    "cell index {idx} outside a grid of {n} cells"
                )));
            }
            if !(p >= 0.0 && p.is_finite()) {
                return Err(Error::InvalidHeatmap(format!(
                    "cell {idx} has invalid probability {p}"
                )));
            }
        }
        cells.sort_unstable_by_key(|&(idx, _)| idx);
        if let Some(w) = cells.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidHeatmap(format!("duplicate cell index {}", w[0].0)));
        }
        Ok(Self { grid, cells })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Cells in ascending index order.
    pub fn cells(&self) -> &[(u64, f64)] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.cells.iter().map(|&(_, p)| p).collect::<CompensatedSum>().value()
    }

    pub fn max_probability(&self) -> f64 {
        self.cells.iter().map(|&(_, p)| p).fold(0.0, f64::max)
    }

    /// Same mass on a grid whose origin is moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        let mut grid = self.grid;
        grid.origin_x += dx;
        grid.origin_y += dy;
        grid.validate()?;
        Ok(Self {
            grid,
            cells: self.cells.clone(),
        })
    }

    /// Cell centers with their mass, in index order.
    pub fn weighted_points(&self) -> impl Iterator<Item = (Point2, f64)> + '_ {
        self.cells
            .iter()
            .map(|&(idx, p)| (self.grid.cell_center(idx), p))
    }
}

/// Divides every probability by the total and drops zero-mass cells.
pub fn normalize(h: &Heatmap) -> Result<Heatmap> {
    let total = h.total_mass();
    if !(total > 0.0) {
        return Err(Error::ZeroMass);
    }
    let cells = h
        .cells
        .iter()
        .filter(|&&(_, p)| p > 0.0)
        .map(|&(idx, p)| (idx, p / total))
        .collect();
    Ok(Heatmap {
        grid: h.grid,
        cells,
    })
}

/// Spread uncertainty `U` (m^2) and expectation `E` of a heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub u: f64,
    pub expectation: Point2,
}

/// Two-pass weighted mean and trace of covariance over arbitrary weighted
/// points. Weights are divided by their total.
pub fn weighted_spread(points: impl Iterator<Item = (Point2, f64)> + Clone) -> UncertaintyEstimate {
    let mut mass = CompensatedSum::new();
    let mut sx = CompensatedSum::new();
    let mut sy = CompensatedSum::new();
    for ([x, y], w) in points.clone() {
        mass.add(w);
        sx.add(w * x);
        sy.add(w * y);
    }
    let m = mass.value();
    if !(m > 0.0) {
        return UncertaintyEstimate {
            u: 0.0,
            expectation: [f64::NAN, f64::NAN],
        };
    }
    let e = [sx.value() / m, sy.value() / m];
    let u = points
        .map(|([x, y], w)| {
            let (dx, dy) = (x - e[0], y - e[1]);
            w * (dx * dx + dy * dy)
        })
        .collect::<CompensatedSum>()
        .value()
        / m;
    UncertaintyEstimate { u, expectation: e }
}

fn local_spread(h: &Heatmap) -> UncertaintyEstimate {
    weighted_spread(
        h.cells
            .iter()
            .map(|&(idx, p)| (h.grid.local_center(idx), p)),
    )
}

/// `E = sum_p H(p) p`.
pub fn expectation(h: &Heatmap) -> Point2 {
    uncertainty(h).expectation
}

/// Spread uncertainty and expectation. Sums run in grid-local coordinates so
/// the result does not depend on where the grid sits in the world frame.
pub fn uncertainty(h: &Heatmap) -> UncertaintyEstimate {
    let local = local_spread(h);
    UncertaintyEstimate {
        u: local.u,
        expectation: [
            h.grid.origin_x + local.expectation[0],
            h.grid.origin_y + local.expectation[1],
        ],
    }
}

/// Full 2x2 spatial covariance `[[xx, xy], [xy, yy]]`.
pub fn covariance(h: &Heatmap) -> [[f64; 2]; 2] {
    let e = local_spread(h).expectation;
    let m = h.total_mass();
    let mut xx = CompensatedSum::new();
    let mut xy = CompensatedSum::new();
    let mut yy = CompensatedSum::new();
    for &(idx, p) in &h.cells {
        let [x, y] = h.grid.local_center(idx);
        let (dx, dy) = (x - e[0], y - e[1]);
        xx.add(p * dx * dx);
        xy.add(p * dx * dy);
        yy.add(p * dy * dy);
    }
    [
        [xx.value() / m, xy.value() / m],
        [xy.value() / m, yy.value() / m],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureMode {
    pub weight: f64,
    pub mean: Point2,
    pub sigma: f64,
}

/// Isotropic Gaussian mixture used as a stand-in for a model's endpoint
/// distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub modes: Vec<MixtureMode>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidConfig("mixture has no modes".into()));
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.weight > 0.0 && m.weight.is_finite()) {
                return Err(Error::InvalidConfig(format!("mode {i}: weight must be positive")));
            }
            if !(m.sigma > 0.0 && m.sigma.is_finite()) {
                return Err(Error::InvalidConfig(format!("mode {i}: sigma must be positive")));
            }
            if !(m.mean[0].is_finite() && m.mean[1].is_finite()) {
                return Err(Error::InvalidConfig(format!("mode {i}: mean must be finite")));
            }
        }
        let total: f64 = self.modes.iter().map(|m| m.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("mode weights sum to {total}, expected 1")));
        }
        Ok(())
    }
}

/// Discretizes a Gaussian mixture onto `grid`: each cell gets the mixture
/// density at its center times the cell area, counting only modes whose mean
/// lies within `truncate_sigmas` standard deviations. The result is
/// normalized.
pub fn render_mixture(m: &MixtureSpec, grid: &GridSpec, truncate_sigmas: f64) -> Result<Heatmap> {
    m.validate()?;
    grid.validate()?;
    if !(truncate_sigmas >= 3.0 && truncate_sigmas.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "truncate_sigmas must be at least 3, got {truncate_sigmas}"
        )));
    }
    let [bx0, by0, bx1, by1] = grid.bounds();
    let area = grid.resolution * grid.resolution;

    let mut windows = Vec::with_capacity(m.modes.len());
    for mode in &m.modes {
        let reach = truncate_sigmas * mode.sigma;
        let [mx, my] = mode.mean;
        if mx - reach < bx0 || mx + reach > bx1 || my - reach < by0 || my + reach > by1 {
            log::warn!(
                "mode at ({mx}, {my}) with sigma {} is not fully covered by the grid",
                mode.sigma
            );
        }
        let cols = grid.col_range(mx - reach, mx + reach);
        let rows = grid.row_range(my - reach, my + reach);
        if let (Some(c), Some(r)) = (cols, rows) {
            windows.push((mode, r, c));
        }
    }
    if windows.is_empty() {
        return Err(Error::EmptyHeatmap);
    }
    let row0 = windows.iter().map(|w| w.1 .0).min().unwrap();
    let row1 = windows.iter().map(|w| w.1 .1).max().unwrap();
    let col0 = windows.iter().map(|w| w.2 .0).min().unwrap();
    let col1 = windows.iter().map(|w| w.2 .1).max().unwrap();
    let span = (col1 - col0 + 1) as usize;
    let mut dense = vec![0.0f64; span * (row1 - row0 + 1) as usize];

    for (mode, (r0, r1), (c0, c1)) in windows {
        let reach2 = (truncate_sigmas * mode.sigma).powi(2);
        let inv_two_var = 1.0 / (2.0 * mode.sigma * mode.sigma);
        let scale = mode.weight * area / (std::f64::consts::TAU * mode.sigma * mode.sigma);
        for row in r0..=r1 {
            let y = grid.origin_y + f64::from(row) * grid.resolution;
            let dy = y - mode.mean[1];
            let base = (row - row0) as usize * span;
            for col in c0..=c1 {
                let x = grid.origin_x + f64::from(col) * grid.resolution;
                let dx = x - mode.mean[0];
                let d2 = dx * dx + dy * dy;
                if d2 <= reach2 {
                    dense[base + (col - col0) as usize] += scale * (-d2 * inv_two_var).exp();
                }
            }
        }
    }

    let mut cells = Vec::new();
    for (i, &p) in dense.iter().enumerate() {
        if p > 0.0 {
            let row = row0 + (i / span) as u32;
            let col = col0 + (i % span) as u32;
            cells.push((grid.index(row, col), p));
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyHeatmap);
    }
    normalize(&Heatmap { grid: *grid, cells })
}

/// Drops cells with probability below `min_prob` and renormalizes. Returns
/// the new heatmap and the mass that was removed (as a fraction of the
/// input's total).
pub fn threshold_sparsify(h: &Heatmap, min_prob: f64) -> Result<(Heatmap, f64)> {
    let max = h.max_probability();
    if !(min_prob >= 0.0 && min_prob < max) {
        return Err(Error::InvalidConfig(format!(
            "min_prob must lie in [0, {max}), got {min_prob}"
        )));
    }
    if h.cells.iter().all(|&(_, p)| p >= min_prob) {
        return Ok((h.clone(), 0.0));
    }
    let total = h.total_mass();
    let dropped = h
        .cells
        .iter()
        .filter(|&&(_, p)| p < min_prob)
        .map(|&(_, p)| p)
        .collect::<CompensatedSum>()
        .value();
    let kept = Heatmap {
        grid: h.grid,
        cells: h.cells.iter().copied().filter(|&(_, p)| p >= min_prob).collect(),
    };
    Ok((normalize(&kept)?, dropped / total))
}
