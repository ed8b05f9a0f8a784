use std::f64::consts::PI;

use proptest::prelude::*;
use trajunc_core::trajectory::{
    average_speed, filter_slow_agents, resample_trajectory, rotate_sample, speed_histogram, standardize_sample, Sample,
    StandardizationConfig, TimedPoint, Trajectory,
};

fn arb_track(t0: f64, t1: f64) -> impl Strategy<Value = Trajectory> {
    // strictly increasing times covering [t0, t1] with random gaps
    (prop::collection::vec(0.01f64..0.7, 2..40), prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 80))
        .prop_map(move |(gaps, xy)| {
            let mut t = t0 - gaps[0];
            let mut points = Vec::new();
            let mut i = 0;
            loop {
                let (x, y) = xy[i % xy.len()];
                points.push(TimedPoint::new(t, x, y));
                if t > t1 {
                    break;
                }
                t += gaps[i % gaps.len()];
                i += 1;
            }
            Trajectory::new(points).unwrap()
        })
}

fn split(track: &Trajectory, id: &str, target: bool) -> Sample {
    let cut = track.points().partition_point(|p| p.t <= 0.0);
    Sample {
        id: id.into(),
        dataset: "prop".into(),
        past: Trajectory::new(track.points()[..cut].to_vec()).unwrap(),
        future: Trajectory::new(track.points()[cut..].to_vec()).unwrap(),
        neighbors: vec![],
        is_predefined_target: target,
    }
}

/// Position on the input polyline at `t`, by direct segment search.
fn on_polyline(track: &Trajectory, t: f64) -> [f64; 2] {
    let p = track.points();
    let j = p.windows(2).position(|w| w[0].t <= t && t <= w[1].t).expect("t inside span");
    let (a, b) = (p[j], p[j + 1]);
    let lam = (t - a.t) / (b.t - a.t);
    [a.x + lam * (b.x - a.x), a.y + lam * (b.y - a.y)]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

proptest! {
    #[test]
    fn resampled_points_lie_on_input_segments(track in arb_track(-2.0, 3.0), rate in prop::sample::select(vec![2.0, 5.0, 10.0, 20.0])) {
        let out = resample_trajectory(&track, rate, -1.0, 3.0).unwrap();
        prop_assert_eq!(out.len(), (4.0 * rate) as usize + 1);
        for (i, p) in out.points().iter().enumerate() {
            prop_assert_eq!(p.t, -1.0 + i as f64 / rate);
            prop_assert!(dist(p.position(), on_polyline(&track, p.t)) < 1e-9);
        }
    }

    #[test]
    fn standardization_is_idempotent(track in arb_track(-1.5, 3.5)) {
        let cfg = StandardizationConfig::default();
        let s = split(&track, "a", true);
        let once = standardize_sample(&s, &cfg).unwrap();
        prop_assert_eq!(once.past.len(), 11);
        prop_assert_eq!(once.future.len(), 30);
        prop_assert!(once.past.last().unwrap().t.abs() <= 1e-6);
        prop_assert!((once.future.last().unwrap().t - 3.0).abs() <= 1e-9);
        let twice = standardize_sample(&once, &cfg).unwrap();
        for (a, b) in once.past.points().iter().chain(once.future.points()).zip(twice.past.points().iter().chain(twice.future.points())) {
            prop_assert_eq!(a.t, b.t);
            prop_assert!(dist(a.position(), b.position()) < 1e-9);
        }
    }

    #[test]
    fn rotation_is_an_isometry(track in arb_track(-1.0, 3.0), angle in -10.0f64..10.0) {
        let s = split(&track, "r", true);
        let r = rotate_sample(&s, angle);
        let pts = |x: &Sample| x.past.points().iter().chain(x.future.points()).map(|p| p.position()).collect::<Vec<_>>();
        let (a, b) = (pts(&s), pts(&r));
        for i in 0..a.len() {
            for j in i + 1..a.len() {
                prop_assert!((dist(a[i], a[j]) - dist(b[i], b[j])).abs() < 1e-9);
            }
        }
        prop_assert!((average_speed(&s) - average_speed(&r)).abs() < 1e-9);
    }

    #[test]
    fn half_turn_twice_is_identity(track in arb_track(-1.0, 3.0)) {
        let s = split(&track, "h", true);
        let back = rotate_sample(&rotate_sample(&s, PI), PI);
        for (a, b) in s.future.points().iter().zip(back.future.points()) {
            prop_assert!(dist(a.position(), b.position()) < 1e-9);
        }
    }

    #[test]
    fn speed_fractions_sum_to_one(tracks in prop::collection::vec(arb_track(-1.0, 3.0), 1..20), w in 0.1f64..5.0) {
        let samples: Vec<Sample> = tracks.iter().map(|t| split(t, "s", true)).collect();
        let h = speed_histogram(&samples, w).unwrap();
        let total: f64 = h.bins.iter().map(|b| b.fraction).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert_eq!(h.bins.iter().map(|b| b.count).sum::<usize>(), samples.len());
    }
}

fn straight(id: &str, vx: f64, target: bool) -> Sample {
    let pts: Vec<TimedPoint> = (-10..=30).map(|i| TimedPoint::new(f64::from(i) / 10.0, vx * f64::from(i) / 10.0, 0.0)).collect();
    split(&Trajectory::new(pts).unwrap(), id, target)
}

#[test]
fn uniform_speeds_fill_bins_evenly() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let samples: Vec<Sample> = (0..n).map(|i| straight(&i.to_string(), rng.random_range(0.0..10.0), true)).collect();
    let h = speed_histogram(&samples, 1.0).unwrap();
    assert_eq!(h.bins.len(), 10);
    for b in &h.bins {
        assert!((b.fraction - 0.1).abs() < 0.01, "bin {}: {}", b.index, b.fraction);
    }
}

#[test]
fn inclusion_count_is_binomial() {
    let n = 100_000;
    let samples: Vec<Sample> = (0..n).map(|i| straight(&format!("agent-{i}"), 1.0, false)).collect();
    let p = 0.3;
    let kept = filter_slow_agents(&samples, p, 17).unwrap().len() as f64;
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((kept - mean).abs() <= 3.0 * sd, "kept {kept}, expected {mean} +- {}", 3.0 * sd);
}

#[test]
fn inclusion_extremes() {
    let samples: Vec<Sample> = (0..50).map(|i| straight(&i.to_string(), 1.0, i % 5 == 0)).collect();
    let none = filter_slow_agents(&samples, 0.0, 1).unwrap();
    assert_eq!(none.len(), 10);
    assert!(none.iter().all(|s| s.is_predefined_target));
    assert_eq!(filter_slow_agents(&samples, 1.0, 1).unwrap().len(), 50);
    // selection depends on the id, not the position in the input
    let mut reversed = samples.clone();
    reversed.reverse();
    let mut a: Vec<String> = filter_slow_agents(&samples, 0.5, 4).unwrap().into_iter().map(|s| s.id).collect();
    let mut b: Vec<String> = filter_slow_agents(&reversed, 0.5, 4).unwrap().into_iter().map(|s| s.id).collect();
    a.sort();
    b.sort();
    assert_eq!(a, b);
}
