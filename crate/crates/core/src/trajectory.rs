//! Trajectories, temporal standardization and scene-level transforms.
//!
//! Timestamps are seconds relative to the prediction time (t = 0). A
//! standardized sample has its past on the grid `-history_s ..= 0` and its
//! future on `1/rate_hz ..= horizon_s`, both at `rate_hz`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numeric::Histogram;
use crate::{Error, Point2, Result};

/// Slack allowed when checking that a trajectory covers a time window.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct TimedPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TimedPoint {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, x, y }
    }

    pub fn position(&self) -> Point2 {
        [self.x, self.y]
    }
}

impl From<[f64; 3]> for TimedPoint {
    fn from([t, x, y]: [f64; 3]) -> Self {
        Self { t, x, y }
    }
}

impl From<TimedPoint> for [f64; 3] {
    fn from(p: TimedPoint) -> Self {
        [p.t, p.x, p.y]
    }
}

/// Time-ordered polyline. Construction checks that every coordinate is
/// finite and timestamps strictly increase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<TimedPoint>", into = "Vec<TimedPoint>")]
pub struct Trajectory {
    points: Vec<TimedPoint>,
}

impl TryFrom<Vec<TimedPoint>> for Trajectory {
    type Error = Error;

    fn try_from(points: Vec<TimedPoint>) -> Result<Self> {
        Trajectory::new(points)
    }
}

impl From<Trajectory> for Vec<TimedPoint> {
    fn from(t: Trajectory) -> Self {
        t.points
    }
}

impl Trajectory {
    pub fn new(points: Vec<TimedPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.t.is_finite() && p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::InvalidTrajectory(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
        }
        if let Some(i) = points.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidTrajectory(format!(
                "timestamps not strictly increasing at point {}",
                i + 1
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[TimedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Option<&TimedPoint> {
        self.points.first()
    }

    pub fn last(&self) -> Option<&TimedPoint> {
        self.points.last()
    }

    fn span(&self) -> Option<(f64, f64)> {
        Some((self.points.first()?.t, self.points.last()?.t))
    }

    /// Linear interpolation at `t`. Times up to [`TIME_EPS`] outside the span
    /// are clamped to the nearest endpoint.
    fn position_at(&self, t: f64) -> Point2 {
        let pts = &self.points;
        let hi = pts.partition_point(|p| p.t <= t);
        if hi == 0 {
            return pts[0].position();
        }
        if hi == pts.len() {
            return pts[pts.len() - 1].position();
        }
        let (a, b) = (&pts[hi - 1], &pts[hi]);
        if t == a.t {
            return a.position();
        }
        let alpha = (t - a.t) / (b.t - a.t);
        [a.x + alpha * (b.x - a.x), a.y + alpha * (b.y - a.y)]
    }

    fn covers(&self, t_start: f64, t_end: f64) -> Result<()> {
        let (first, last) = self.span().ok_or(Error::DegenerateTrajectory(0))?;
        if first > t_start + TIME_EPS || last < t_end - TIME_EPS {
            return Err(Error::Coverage {
                have_start: first,
                have_end: last,
                want_start: t_start,
                want_end: t_end,
            });
        }
        Ok(())
    }

    /// Interpolated positions at the given (ascending) times. The caller is
    /// responsible for coverage.
    fn sample_at(&self, times: &[f64]) -> Result<Trajectory> {
        if self.points.len() < 2 {
            return Err(Error::DegenerateTrajectory(self.points.len()));
        }
        Trajectory::new(
            times
                .iter()
                .map(|&t| {
                    let [x, y] = self.position_at(t);
                    TimedPoint::new(t, x, y)
                })
                .collect(),
        )
    }

    fn concat(a: &Trajectory, b: &Trajectory) -> Result<Trajectory> {
        let mut points = a.points.clone();
        points.extend_from_slice(&b.points);
        Trajectory::new(points)
    }

    fn map_positions(&self, f: impl Fn(Point2) -> Point2) -> Trajectory {
        Trajectory {
            points: self
                .points
                .iter()
                .map(|p| {
                    let [x, y] = f(p.position());
                    TimedPoint::new(p.t, x, y)
                })
                .collect(),
        }
    }
}

/// Resample onto the grid `t_start, t_start + 1/rate_hz, ...` ending at
/// `t_end`, interpolating linearly between the bracketing raw points.
pub fn resample_trajectory(
    traj: &Trajectory,
    rate_hz: f64,
    t_start: f64,
    t_end: f64,
) -> Result<Trajectory> {
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidConfig(format!("rate_hz must be positive, got {rate_hz}")));
    }
    if !(t_start.is_finite() && t_end.is_finite() && t_end >= t_start) {
        return Err(Error::InvalidConfig(format!(
            "invalid resampling window [{t_start}, {t_end}]"
        )));
    }
    if traj.len() < 2 {
        return Err(Error::DegenerateTrajectory(traj.len()));
    }
    traj.covers(t_start, t_end)?;
    let steps = ((t_end - t_start) * rate_hz).round() as usize;
    let times: Vec<f64> = (0..=steps)
        .map(|i| t_start + i as f64 / rate_hz)
        .collect();
    traj.sample_at(&times)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StandardizationConfig {
    pub history_s: f64,
    pub horizon_s: f64,
    pub rate_hz: f64,
}

impl Default for StandardizationConfig {
    fn default() -> Self {
        Self {
            history_s: 1.0,
            horizon_s: 3.0,
            rate_hz: 10.0,
        }
    }
}

impl StandardizationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("history_s", self.history_s),
            ("horizon_s", self.horizon_s),
            ("rate_hz", self.rate_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("history_s", self.history_s),
            ("horizon_s", self.horizon_s),
        ] {
            let steps = v * self.rate_hz;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "{name} x rate_hz = {steps} is not an integer step count"
                )));
            }
        }
        Ok(())
    }

    pub fn past_steps(&self) -> usize {
        (self.history_s * self.rate_hz).round() as usize
    }

    pub fn future_steps(&self) -> usize {
        (self.horizon_s * self.rate_hz).round() as usize
    }

    /// `-history_s ..= 0`, built from integer step counts so that t = 0 and
    /// t = -history_s are hit exactly.
    pub fn past_times(&self) -> Vec<f64> {
        let n = self.past_steps();
        (0..=n)
            .map(|i| -((n - i) as f64) / self.rate_hz)
            .collect()
    }

    /// `1/rate_hz ..= horizon_s`.
    pub fn future_times(&self) -> Vec<f64> {
        (1..=self.future_steps())
            .map(|i| i as f64 / self.rate_hz)
            .collect()
    }
}

/// One prediction case: a target agent's past and future, plus optional
/// surrounding agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct Sample {
    pub id: String,
    pub dataset: String,
    pub past: Trajectory,
    pub future: Trajectory,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub neighbors: Vec<Trajectory>,
    pub is_predefined_target: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSample {
    id: String,
    dataset: String,
    past: Trajectory,
    future: Trajectory,
    #[serde(default)]
    neighbors: Option<Vec<Trajectory>>,
    is_predefined_target: bool,
}

impl TryFrom<RawSample> for Sample {
    type Error = Error;

    fn try_from(raw: RawSample) -> Result<Self> {
        let sample = Sample {
            id: raw.id,
            dataset: raw.dataset,
            past: raw.past,
            future: raw.future,
            neighbors: raw.neighbors.unwrap_or_default(),
            is_predefined_target: raw.is_predefined_target,
        };
        sample.validate()?;
        Ok(sample)
    }
}

impl Sample {
    /// Checks the past/future split: past is non-empty with t <= 0, future
    /// is non-empty with t > 0.
    pub fn validate(&self) -> Result<()> {
        match self.past.last() {
            None => return Err(Error::InvalidTrajectory(format!("sample {}: empty past", self.id))),
            Some(p) if p.t > TIME_EPS => {
                return Err(Error::InvalidTrajectory(format!(
                    "sample {}: past point at t = {} > 0",
                    self.id, p.t
                )))
            }
            _ => {}
        }
        match self.future.first() {
            None => Err(Error::InvalidTrajectory(format!("sample {}: empty future", self.id))),
            Some(p) if p.t <= 0.0 => Err(Error::InvalidTrajectory(format!(
                "sample {}: future point at t = {} <= 0",
                self.id, p.t
            ))),
            _ => Ok(()),
        }
    }

    /// Target position at prediction time (the last past point).
    pub fn current_position(&self) -> Point2 {
        self.past.last().map_or([0.0, 0.0], TimedPoint::position)
    }

    /// Ground-truth endpoint at the horizon (the last future point).
    pub fn final_position(&self) -> Point2 {
        self.future.last().map_or([0.0, 0.0], TimedPoint::position)
    }

    /// Past and future as one track.
    pub fn full_track(&self) -> Result<Trajectory> {
        Trajectory::concat(&self.past, &self.future)
    }
}

/// Resample a sample's past, future and neighbors onto the standard grid.
/// Neighbors that do not span the whole window are dropped.
pub fn standardize_sample(s: &Sample, cfg: &StandardizationConfig) -> Result<Sample> {
    cfg.validate()?;
    let segment_err = |segment: &'static str, source: Error| Error::SegmentCoverage {
        id: s.id.clone(),
        segment,
        source: Box::new(source),
    };
    let track = s.full_track()?;
    if track.len() < 2 {
        return Err(Error::DegenerateTrajectory(track.len()));
    }
    let past_times = cfg.past_times();
    let future_times = cfg.future_times();
    let (track_start, track_end) = track.span().expect("non-empty track");

    let past_start = s.past.first().map_or(f64::INFINITY, |p| p.t);
    if past_start > -cfg.history_s + TIME_EPS {
        return Err(segment_err(
            "past",
            Error::Coverage {
                have_start: past_start,
                have_end: s.past.last().map_or(f64::NAN, |p| p.t),
                want_start: -cfg.history_s,
                want_end: 0.0,
            },
        ));
    }
    if track_end < cfg.horizon_s - TIME_EPS {
        return Err(segment_err(
            "future",
            Error::Coverage {
                have_start: s.future.first().map_or(f64::NAN, |p| p.t),
                have_end: track_end,
                want_start: future_times[0],
                want_end: cfg.horizon_s,
            },
        ));
    }
    debug_assert!(track_start <= -cfg.history_s + TIME_EPS);

    let past = track.sample_at(&past_times)?;
    let future = track.sample_at(&future_times)?;

    let all_times: Vec<f64> = past_times.iter().chain(&future_times).copied().collect();
    let mut neighbors = Vec::with_capacity(s.neighbors.len());
    for (i, n) in s.neighbors.iter().enumerate() {
        if n.len() < 2 || n.covers(-cfg.history_s, cfg.horizon_s).is_err() {
            log::debug!("sample {}: dropping neighbor {i}, span too short", s.id);
            continue;
        }
        neighbors.push(n.sample_at(&all_times)?);
    }

    Ok(Sample {
        id: s.id.clone(),
        dataset: s.dataset.clone(),
        past,
        future,
        neighbors,
        is_predefined_target: s.is_predefined_target,
    })
}

/// Straight-line displacement from the t = 0 position to the final future
/// position, divided by the elapsed time.
pub fn average_speed(s: &Sample) -> f64 {
    let (Some(start), Some(end)) = (s.past.last(), s.future.last()) else {
        return 0.0;
    };
    let dt = end.t - start.t;
    if dt <= 0.0 {
        return 0.0;
    }
    let (dx, dy) = (end.x - start.x, end.y - start.y);
    (dx * dx + dy * dy).sqrt() / dt
}

pub fn speed_histogram(samples: &[Sample], bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!("bin_width must be positive, got {bin_width}")));
    }
    let speeds: Vec<f64> = samples.iter().map(average_speed).collect();
    Histogram::from_values(&speeds, bin_width).ok_or(Error::EmptyInput("speed histogram"))
}

/// Rotate every position (target and neighbors) by `angle` radians about the
/// target's t = 0 position.
pub fn rotate_sample(s: &Sample, angle: f64) -> Sample {
    let [cx, cy] = s.current_position();
    let (sin, cos) = angle.sin_cos();
    let rot = |[x, y]: Point2| {
        let (dx, dy) = (x - cx, y - cy);
        [cx + cos * dx - sin * dy, cy + sin * dx + cos * dy]
    };
    Sample {
        id: s.id.clone(),
        dataset: s.dataset.clone(),
        past: s.past.map_positions(rot),
        future: s.future.map_positions(rot),
        neighbors: s.neighbors.iter().map(|n| n.map_positions(rot)).collect(),
        is_predefined_target: s.is_predefined_target,
    }
}

/// Neighbors that have both past (t <= 0) and future (t > 0) points, split
/// into non-target samples with ids `<scene>/n<index>`.
pub fn promote_neighbors(s: &Sample) -> Vec<Sample> {
    s.neighbors
        .iter()
        .enumerate()
        .filter_map(|(i, n)| {
            let split = n.points().partition_point(|p| p.t <= 0.0);
            if split == 0 || split == n.len() {
                return None;
            }
            Some(Sample {
                id: format!("{}/n{i}", s.id),
                dataset: s.dataset.clone(),
                past: Trajectory {
                    points: n.points()[..split].to_vec(),
                },
                future: Trajectory {
                    points: n.points()[split..].to_vec(),
                },
                neighbors: Vec::new(),
                is_predefined_target: false,
            })
        })
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Uniform draw in [0, 1) keyed by (seed, agent id), independent of the
/// order in which agents are visited.
fn keyed_uniform(seed: u64, id: &str) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(id.as_bytes()));
    rng.random::<f64>()
}

/// Keeps every predefined target and includes each non-target agent with
/// probability `include_non_targets`. Non-target agents are both input
/// samples flagged as such and neighbors promoted via [`promote_neighbors`].
pub fn filter_slow_agents(samples: &[Sample], include_non_targets: f64, seed: u64) -> Result<Vec<Sample>> {
    if !(0.0..=1.0).contains(&include_non_targets) {
        return Err(Error::InvalidConfig(format!(
            "include_non_targets must lie in [0, 1], got {include_non_targets}"
        )));
    }
    let keep = |id: &str| keyed_uniform(seed, id) < include_non_targets;
    let mut out = Vec::new();
    for s in samples {
        if s.is_predefined_target || keep(&s.id) {
            out.push(s.clone());
        }
        out.extend(promote_neighbors(s).into_iter().filter(|n| keep(&n.id)));
    }
    Ok(out)
}
