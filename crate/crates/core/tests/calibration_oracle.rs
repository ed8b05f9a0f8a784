mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trajunc_core::calibration::{
    calibrate, learned_uncertainty_loss, ols_fit, optimal_radius, presets, CalibrationConfig, CalibrationModel,
    RadiusSweepConfig,
};
use trajunc_core::heatmap::uncertainty;
use trajunc_core::sampling::adaptive_radius;
use trajunc_core::Error;

use common::{normal_equations_fit, planted_case, planted_dataset, PLANT_STEP};

fn plant_config(min_count: usize) -> CalibrationConfig {
    CalibrationConfig {
        k: 2,
        sweep: RadiusSweepConfig {
            r_values: (1..=100).map(|i| i as f64 * PLANT_STEP).collect(),
            l_for_objective: 2,
        },
        bin_width: 1.0,
        min_count,
    }
}

#[test]
fn planted_case_has_planted_optimum() {
    let cfg = plant_config(1);
    for (m, u) in [(19, 2.5), (25, 17.5), (40, 52.5)] {
        let (h, gt) = planted_case(m, u);
        assert!((uncertainty(&h).u - u).abs() < 0.05, "U = {}", uncertainty(&h).u);
        let r = optimal_radius(&h, gt, cfg.k, &cfg.sweep).unwrap();
        assert_eq!(r, cfg.sweep.r_values[m - 1]);
    }
}

#[test]
fn planted_line_is_recovered() {
    let qs: Vec<u32> = (1..=21).step_by(2).collect();
    let data = planted_dataset(0.02, 0.9, &qs, 12);
    let fit = calibrate(&data, &plant_config(10), "planted").unwrap();
    assert_eq!(fit.bins.len(), qs.len());
    assert!((fit.model.a - 0.02).abs() / 0.02 < 0.05, "a = {}", fit.model.a);
    assert!((fit.model.b - 0.9).abs() / 0.9 < 0.05, "b = {}", fit.model.b);
}

#[test]
fn constant_uncertainty_cannot_be_fit() {
    let data: Vec<_> = (0..30).map(|_| planted_case(20, 7.5)).collect();
    match calibrate(&data, &plant_config(10), "flat") {
        Err(e @ Error::InsufficientBins { found: 1, .. }) => assert!(e.to_string().contains("found 1")),
        other => panic!("expected insufficient bins, got {other:?}"),
    }
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let n = rng.random_range(2..40);
        let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random_range(-30.0..30.0), rng.random_range(-5.0..5.0))).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..200.0)).collect();
        let Ok((a, b)) = ols_fit(&pts, &w) else { continue };
        let (ea, eb) = normal_equations_fit(&pts, &w);
        assert!((a - ea).abs() <= 1e-8 * ea.abs().max(1.0), "{a} vs {ea}");
        assert!((b - eb).abs() <= 1e-8 * eb.abs().max(1.0), "{b} vs {eb}");
    }
}

#[test]
fn ols_is_unbiased_under_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let xs: Vec<f64> = (0..30).map(|i| i as f64 + 0.5).collect();
    let w = vec![1.0; xs.len()];
    let reps = 2000;
    let (mut sa, mut sb) = (0.0, 0.0);
    for _ in 0..reps {
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, 0.02 * x + 0.9 + noise.sample(&mut rng))).collect();
        let (a, b) = ols_fit(&pts, &w).unwrap();
        sa += a;
        sb += b;
    }
    let (ma, mb) = (sa / reps as f64, sb / reps as f64);
    // standard errors of the means: slope ~ 0.1/sqrt(Sxx)/sqrt(reps)
    let sxx: f64 = xs.iter().map(|x| (x - 15.0).powi(2)).sum();
    let se_a = 0.1 / sxx.sqrt() / (reps as f64).sqrt();
    assert!((ma - 0.02).abs() < 4.0 * se_a, "mean slope {ma}");
    assert!((mb - 0.9).abs() < 4.0 * 0.1 * (1.0 / 30.0 + 225.0 / sxx).sqrt() / (reps as f64).sqrt(), "mean intercept {mb}");
}

#[test]
fn ols_degenerate_inputs() {
    assert!(matches!(ols_fit(&[(1.0, 2.0), (1.0, 3.0)], &[1.0, 1.0]), Err(Error::DegenerateFit)));
    assert!(matches!(ols_fit(&[], &[]), Err(Error::DegenerateFit)));
    let (a, b) = ols_fit(&[(0.0, 1.0), (2.0, 5.0)], &[1.0, 3.0]).unwrap();
    assert!((a - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
}

#[test]
fn loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = 1e-5;
    for _ in 0..100 {
        let s = rng.random_range(-5.0..5.0);
        let e = rng.random_range(0.01..10.0);
        let (_, g) = learned_uncertainty_loss(s, e);
        let fd = (learned_uncertainty_loss(s + h, e).0 - learned_uncertainty_loss(s - h, e).0) / (2.0 * h);
        assert!((g - fd).abs() < 1e-6, "s={s} e={e}: {g} vs {fd}");
    }
}

#[test]
fn loss_minimum_sits_at_log_error() {
    for e in [0.5f64, 1.0, 2.0] {
        let s = e.ln();
        let (l, g) = learned_uncertainty_loss(s, e);
        assert!(g.abs() < 1e-15);
        for d in [1e-3, 0.1, 1.0] {
            assert!(learned_uncertainty_loss(s + d, e).0 > l);
            assert!(learned_uncertainty_loss(s - d, e).0 > l);
        }
    }
}

#[test]
fn presets_match_reference_values() {
    for (name, a, b, fixed) in [
        ("argoverse", 0.020, 0.78, 1.5),
        ("interaction", 0.026, 0.96, 0.6),
        ("nuscenes", 0.014, 1.32, 1.1),
        ("shifts", 0.022, 0.91, 1.5),
    ] {
        let m = presets::get(name).unwrap();
        assert_eq!((m.a, m.b, m.fixed_radius), (a, b, Some(fixed)), "{name}");
    }
    assert_eq!(adaptive_radius(0.0, &presets::get("argoverse").unwrap(), 0.1, 10.0), 0.78);
}

proptest! {
    #[test]
    fn model_json_round_trips(a in -1.0f64..1.0, b in 0.01f64..5.0, n in prop::option::of(0usize..100), rms in prop::option::of(0.0f64..2.0)) {
        let mut m = CalibrationModel::new(a, b, "x");
        m.bin_count = n;
        m.residual_rms = rms;
        let back = CalibrationModel::from_json(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn adaptive_radius_stays_clamped(u in 0.0f64..1e6, a in -1.0f64..1.0, b in 0.01f64..20.0) {
        let r = adaptive_radius(u, &CalibrationModel::new(a, b, "x"), 0.1, 10.0);
        prop_assert!((0.1..=10.0).contains(&r));
    }

    #[test]
    fn exact_lines_are_recovered(a in -2.0f64..2.0, b in -5.0f64..5.0, xs in prop::collection::vec(-50.0f64..50.0, 2..30)) {
        prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
        let pts: Vec<(f64, f64)> = xs.iter().map(|&x| (x, a * x + b)).collect();
        let (fa, fb) = ols_fit(&pts, &vec![1.0; pts.len()]).unwrap();
        prop_assert!((fa - a).abs() < 1e-9 && (fb - b).abs() < 1e-8);
    }
}
