use proptest::prelude::*;
use trajunc_core::heatmap::{
    covariance, normalize, render_mixture, threshold_sparsify, uncertainty, GridSpec, Heatmap, MixtureMode, MixtureSpec,
};

fn gaussian(sigma: f64, mean: [f64; 2], grid: &GridSpec, truncate: f64) -> Heatmap {
    let m = MixtureSpec {
        modes: vec![MixtureMode {
            weight: 1.0,
            mean,
            sigma,
        }],
    };
    render_mixture(&m, grid, truncate).unwrap()
}

/// Rotates the heatmap by 90 degrees about the center of cell (0, 0): local
/// point (x, y) goes to (-y, x), re-indexed on a transposed grid.
fn rotate_quarter(h: &Heatmap) -> Heatmap {
    let g = h.grid();
    let rotated = GridSpec {
        width: g.height,
        height: g.width,
        ..*g
    };
    let cells = h
        .cells()
        .iter()
        .map(|&(idx, p)| {
            let (row, col) = g.row_col(idx);
            (rotated.index(col, g.height - 1 - row), p)
        })
        .collect();
    Heatmap::from_cells(rotated, cells).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn gaussian_spread_matches_closed_form() {
    for sigma in [1.0, 2.0, 4.0] {
        let cells = (48.0 * sigma) as u32 + 1;
        let grid = GridSpec::centered(0.25, cells, cells);
        let h = gaussian(sigma, [0.0, 0.0], &grid, 6.0);
        let u = uncertainty(&h).u;
        let expected = 2.0 * sigma * sigma;
        assert!(rel(u, expected) < 0.03, "sigma {sigma}: U = {u}");
    }
}

#[test]
fn quarter_rotation_preserves_spread() {
    let grid = GridSpec::centered(0.25, 97, 81);
    let m = MixtureSpec {
        modes: vec![
            MixtureMode {
                weight: 0.7,
                mean: [2.0, -1.0],
                sigma: 1.5,
            },
            MixtureMode {
                weight: 0.3,
                mean: [-4.0, 3.0],
                sigma: 0.8,
            },
        ],
    };
    let h = render_mixture(&m, &grid, 4.0).unwrap();
    let mut r = h.clone();
    for _ in 0..4 {
        r = rotate_quarter(&r);
        assert!(rel(uncertainty(&r).u, uncertainty(&h).u) < 1e-9);
    }
    assert_eq!(r, h);
}

#[test]
fn rendering_shifted_by_whole_cells_preserves_spread() {
    let grid = GridSpec::centered(0.25, 121, 121);
    let a = uncertainty(&gaussian(2.0, [0.0, 0.0], &grid, 4.0)).u;
    let b = uncertainty(&gaussian(2.0, [1.25, -0.75], &grid, 4.0)).u;
    assert!(rel(a, b) < 1e-9, "{a} vs {b}");
}

fn arb_heatmap() -> impl Strategy<Value = Heatmap> {
    (1u32..40, 1u32..40, 0.05f64..2.0, -1e4f64..1e4, -1e4f64..1e4).prop_flat_map(|(w, h, res, ox, oy)| {
        let n = u64::from(w) * u64::from(h);
        prop::collection::vec((0..n, 1e-6f64..1.0), 1..60).prop_map(move |cells| {
            let grid = GridSpec {
                origin_x: ox,
                origin_y: oy,
                resolution: res,
                width: w,
                height: h,
            };
            let mut cells = cells;
            cells.sort_by_key(|c| c.0);
            cells.dedup_by_key(|c| c.0);
            normalize(&Heatmap::from_cells(grid, cells).unwrap()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn normalized_mass_is_one(h in arb_heatmap()) {
        prop_assert!((h.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!(h.cells().iter().all(|&(_, p)| p > 0.0 && p <= 1.0));
    }

    #[test]
    fn spread_is_nonnegative_trace_of_covariance(h in arb_heatmap()) {
        let est = uncertainty(&h);
        let c = covariance(&h);
        prop_assert!(est.u >= 0.0);
        prop_assert!((est.u - (c[0][0] + c[1][1])).abs() <= 1e-9 * est.u.max(1.0));
        prop_assert!(c[0][0] * c[1][1] - c[0][1] * c[0][1] >= -1e-9 * est.u.max(1.0).powi(2));
    }

    #[test]
    fn spread_is_translation_invariant(h in arb_heatmap(), dx in -1e5f64..1e5, dy in -1e5f64..1e5) {
        let a = uncertainty(&h);
        let b = uncertainty(&h.translated(dx, dy).unwrap());
        prop_assert!((a.u - b.u).abs() <= 1e-9 * a.u.max(1e-12));
        let scale = dx.abs().max(dy.abs()).max(1e4);
        prop_assert!((b.expectation[0] - a.expectation[0] - dx).abs() <= 1e-9 * scale);
        prop_assert!((b.expectation[1] - a.expectation[1] - dy).abs() <= 1e-9 * scale);
    }

    #[test]
    fn spread_is_quarter_rotation_invariant(h in arb_heatmap()) {
        let a = uncertainty(&h).u;
        let b = uncertainty(&rotate_quarter(&h)).u;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
    }

    #[test]
    fn storage_order_does_not_matter(h in arb_heatmap(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut cells = h.cells().to_vec();
        cells.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let shuffled = Heatmap::from_cells(*h.grid(), cells).unwrap();
        prop_assert_eq!(uncertainty(&shuffled), uncertainty(&h));
    }

    #[test]
    fn spread_bounded_by_farthest_cell(h in arb_heatmap()) {
        let est = uncertainty(&h);
        let far = h
            .weighted_points()
            .map(|([x, y], _)| (x - est.expectation[0]).powi(2) + (y - est.expectation[1]).powi(2))
            .fold(0.0, f64::max);
        prop_assert!(est.u <= far * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn sparsify_keeps_mass_accounting(h in arb_heatmap(), min_prob in 0.0f64..0.2) {
        match threshold_sparsify(&h, min_prob) {
            Ok((s, dropped)) => {
                prop_assert!((0.0..1.0).contains(&dropped));
                prop_assert!((s.total_mass() - 1.0).abs() < 1e-12);
                prop_assert!(s.len() <= h.len());
                let kept: f64 = h.cells().iter().filter(|c| c.1 >= min_prob).map(|c| c.1).sum();
                prop_assert!((kept + dropped - 1.0).abs() < 1e-9);
            }
            Err(_) => prop_assert!(h.max_probability() <= min_prob),
        }
    }
}
