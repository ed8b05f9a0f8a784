//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajunc_core::heatmap::{normalize, render_mixture, GridSpec, Heatmap, MixtureMode, MixtureSpec};

/// Greedy NMS over a dense copy of the grid, scanning every cell in
/// row-major order at each step. Picks come back sorted by descending
/// score, ties in pick order.
pub fn dense_nms(h: &Heatmap, k: usize, r: f64) -> Vec<[f64; 3]> {
    let g = h.grid();
    let n = g.cell_count() as usize;
    let mut p = vec![0.0; n];
    for &(i, v) in h.cells() {
        p[i as usize] = v;
    }
    let mut live = vec![true; n];
    let mut out: Vec<[f64; 3]> = Vec::new();
    while out.len() < k {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if live[i] && p[i] > 0.0 && best.map_or(true, |b| p[i] > p[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        let [cx, cy] = g.cell_center(b as u64);
        let mut mass = 0.0;
        for i in 0..n {
            if !live[i] {
                continue;
            }
            let [x, y] = g.cell_center(i as u64);
            if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                mass += p[i];
                live[i] = false;
            }
        }
        out.push([cx, cy, mass]);
    }
    out.sort_by(|a, b| b[2].total_cmp(&a[2]));
    out
}

/// Random heatmap on a grid of at most `max_side` cells per side: either a
/// rendered mixture or scattered cells with quantized (often tied) mass.
pub fn random_heatmap(rng: &mut ChaCha8Rng, max_side: u32) -> Heatmap {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let res = [0.1, 0.25, 0.5, 1.0][rng.random_range(0..4)];
    let grid = GridSpec {
        origin_x: rng.random_range(-50.0..50.0),
        origin_y: rng.random_range(-50.0..50.0),
        resolution: res,
        width: w,
        height: h,
    };
    if rng.random_bool(0.5) {
        let n_modes = rng.random_range(1..=3);
        let raw: Vec<f64> = (0..n_modes).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let [x0, y0, x1, y1] = grid.bounds();
        let modes = raw
            .iter()
            .map(|w| MixtureMode {
                weight: w / total,
                mean: [rng.random_range(x0..=x1), rng.random_range(y0..=y1)],
                sigma: rng.random_range(0.5 * res..4.0),
            })
            .collect();
        if let Ok(hm) = render_mixture(&MixtureSpec { modes }, &grid, 4.0) {
            return hm;
        }
    }
    let n = grid.cell_count();
    let count = rng.random_range(1..=n.min(200));
    let mut cells: Vec<(u64, f64)> = (0..count)
        .map(|_| (rng.random_range(0..n), f64::from(rng.random_range(1..6u8))))
        .collect();
    cells.sort_by_key(|c| c.0);
    cells.dedup_by_key(|c| c.0);
    normalize(&Heatmap::from_cells(grid, cells).unwrap()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// minFDE by direct enumeration of the first `l` endpoints.
pub fn brute_min_fde(endpoints: &[[f64; 2]], gt: [f64; 2], l: usize) -> f64 {
    let mut best = f64::INFINITY;
    for e in endpoints.iter().take(l.min(endpoints.len())) {
        let d = ((e[0] - gt[0]).powi(2) + (e[1] - gt[1]).powi(2)).sqrt();
        if d < best {
            best = d;
        }
    }
    best
}

/// Weighted least squares line through the uncentered 2x2 normal equations,
/// solved by Cramer's rule.
pub fn normal_equations_fit(points: &[(f64, f64)], weights: &[f64]) -> (f64, f64) {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&(x, y), &w) in points.iter().zip(weights) {
        sw += w;
        sx += w * x;
        sy += w * y;
        sxx += w * x * x;
        sxy += w * x * y;
    }
    let det = sxx * sw - sx * sx;
    ((sxy * sw - sx * sy) / det, (sxx * sy - sx * sxy) / det)
}

/// Sweep spacing used by the planted calibration set.
pub const PLANT_STEP: f64 = 0.05;

/// One case whose optimal sweep radius (k = 2, l = 2, radii on multiples
/// of `PLANT_STEP`) is exactly `m * PLANT_STEP` and whose spread is close to
/// `u_target`.
///
/// Layout on a 0.025 m grid: a peak at x = 0, a chain of lighter cells at
/// x = (j - 0.5) * PLANT_STEP for j = 1..=m+1 with decreasing mass, and two
/// ballast cells at (0, +-d) that set U. With radius r = n * PLANT_STEP the
/// second endpoint is chain cell n + 1, which sits on the ground truth only
/// when n = m.
pub fn planted_case(m: usize, u_target: f64) -> (Heatmap, [f64; 2]) {
    let res = PLANT_STEP / 2.0;
    let chain_mass = |j: usize| 0.01 * (1.0 - 0.004 * j as f64);
    let ballast = 0.004;
    let chain: f64 = (1..=m + 1).map(chain_mass).sum();
    let peak = 1.0 - chain - 2.0 * ballast;

    // x moments do not depend on d
    let mut xs = vec![(0.0, peak), (0.0, 2.0 * ballast)];
    xs.extend((1..=m + 1).map(|j| ((2 * j - 1) as f64 * res, chain_mass(j))));
    let ex: f64 = xs.iter().map(|(x, w)| x * w).sum();
    let ux: f64 = xs.iter().map(|(x, w)| w * (x - ex).powi(2)).sum();
    let d_cells = (((u_target - ux) / (2.0 * ballast)).sqrt() / res).round() as u32;
    assert!(d_cells as f64 * res > 6.0, "ballast must sit outside every sweep radius");

    let width = 2 * m as u32 + 3;
    let height = 2 * d_cells + 1;
    let grid = GridSpec {
        origin_x: 0.0,
        origin_y: -(d_cells as f64) * res,
        resolution: res,
        width,
        height,
    };
    let mid = d_cells;
    let mut cells = vec![
        (grid.index(mid, 0), peak),
        (grid.index(0, 0), ballast),
        (grid.index(height - 1, 0), ballast),
    ];
    cells.extend((1..=m + 1).map(|j| (grid.index(mid, 2 * j as u32 - 1), chain_mass(j))));
    cells.sort_by_key(|c| c.0);
    let gt = grid.cell_center(grid.index(mid, 2 * m as u32 + 1));
    (Heatmap::from_cells(grid, cells).unwrap(), gt)
}

/// Planted dataset following `r_opt = a * U + b` at bin centers
/// `U = q * 2.5` for odd `q`; `per_bin` cases per bin with U spread over
/// the middle of the bin.
pub fn planted_dataset(a: f64, b: f64, qs: &[u32], per_bin: usize) -> Vec<(Heatmap, [f64; 2])> {
    let mut out = Vec::new();
    for &q in qs {
        let center = q as f64 * 2.5;
        let m = ((a * center + b) / PLANT_STEP).round() as usize;
        for i in 0..per_bin {
            let jitter = 0.6 * (i as f64 / per_bin as f64 - 0.5);
            out.push(planted_case(m, center + jitter));
        }
    }
    out
}

pub mod fixture {
    use std::path::{Path, PathBuf};

    use trajunc_core::config::RunConfig;
    use trajunc_core::synth::{generate_dataset, ScenarioConfig};

    /// Scenario family `tag` ("A": calibrated heatmaps, "B": ground truth
    /// spread 1.6x wider than the heatmaps claim).
    pub fn family(tag: &str, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            gt_sigma_scale: if tag == "A" { 1.0 } else { 1.6 },
            seed,
            ..ScenarioConfig::desk_scale()
        }
    }

    pub fn run_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.calibration.min_count = 30;
        cfg
    }

    /// Writes train/test sets for both families under `dir` and a 2x2
    /// manifest with relative paths. Returns the manifest path.
    pub fn cross_eval_manifest(dir: &Path, n_train: u64, n_test: u64) -> PathBuf {
        for tag in ["A", "B"] {
            generate_dataset(&family(tag, 1), n_train, &dir.join(format!("{tag}-train"))).unwrap();
            generate_dataset(&family(tag, 2), n_test, &dir.join(format!("{tag}-test"))).unwrap();
        }
        let manifest = serde_json::json!({
            "models": [
                {"tag": "A", "train": {"heatmaps": "A-train/heatmaps.jsonl", "ground_truth": "A-train/gt.jsonl"}},
                {"tag": "B", "train": {"heatmaps": "B-train/heatmaps.jsonl", "ground_truth": "B-train/gt.jsonl"}}
            ],
            "test_sets": [
                {"tag": "A", "heatmaps": "A-test/heatmaps.jsonl", "ground_truth": "A-test/gt.jsonl"},
                {"tag": "B", "heatmaps": "B-test/heatmaps.jsonl", "ground_truth": "B-test/gt.jsonl"}
            ]
        });
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
        path
    }

    /// Every regular file under `dir` except run metadata, with contents,
    /// sorted by relative path.
    pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let p = entry.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().unwrap() != "run_meta.json" {
                    let rel = p.strip_prefix(dir).unwrap().display().to_string();
                    out.push((rel, std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }
}
