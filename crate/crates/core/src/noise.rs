//! Perception-noise estimate: forward constant-velocity Kalman filtering of
//! a raw track, scored by the largest raw-to-filtered displacement.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::numeric::Histogram;
use crate::trajectory::{Sample, TimedPoint, Trajectory};
use crate::{Error, Result};

/// Tolerance on the spacing of timestamps.
pub const UNIFORM_STEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// White-acceleration process noise, m/s^2.
    pub process_accel_std: f64,
    /// Position measurement noise, m.
    pub obs_std: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            process_accel_std: 1.0,
            obs_std: 0.5,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("process_accel_std", self.process_accel_std),
            ("obs_std", self.obs_std),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Filter state after each update, exposed for inspection in tests.
#[derive(Debug, Clone)]
pub struct FilterStep {
    pub state: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

fn uniform_step(traj: &Trajectory) -> Result<f64> {
    let pts = traj.points();
    if pts.len() < 3 {
        return Err(Error::InvalidTrajectory(format!(
            "Kalman filtering needs at least 3 points, got {}",
            pts.len()
        )));
    }
    let dt = pts[1].t - pts[0].t;
    for (i, w) in pts.windows(2).enumerate() {
        let step = w[1].t - w[0].t;
        if (step - dt).abs() > UNIFORM_STEP_TOL {
            return Err(Error::NonUniformSampling {
                index: i + 1,
                step,
                expected: dt,
            });
        }
    }
    Ok(dt)
}

/// Runs the filter and returns the posterior after every point. State is
/// `[x, y, vx, vy]`; it starts at point 0 with the velocity of the first
/// difference, so the first entry is that initial state.
pub fn kalman_steps(traj: &Trajectory, cfg: &KalmanConfig) -> Result<Vec<FilterStep>> {
    cfg.validate()?;
    let dt = uniform_step(traj)?;
    let pts = traj.points();

    let f = Matrix4::new(
        1.0, 0.0, dt, 0.0, //
        0.0, 1.0, 0.0, dt, //
        0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    let h = Matrix2x4::new(
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0,
    );
    let qa = cfg.process_accel_std.powi(2);
    let (q_pp, q_pv, q_vv) = (dt.powi(4) / 4.0 * qa, dt.powi(3) / 2.0 * qa, dt * dt * qa);
    let q = Matrix4::new(
        q_pp, 0.0, q_pv, 0.0, //
        0.0, q_pp, 0.0, q_pv, //
        q_pv, 0.0, q_vv, 0.0, //
        0.0, q_pv, 0.0, q_vv,
    );
    let r_var = cfg.obs_std.powi(2);
    let r = Matrix2::from_diagonal_element(r_var);

    let mut x = Vector4::new(
        pts[0].x,
        pts[0].y,
        (pts[1].x - pts[0].x) / dt,
        (pts[1].y - pts[0].y) / dt,
    );
    // velocity from differencing two measurements carries 2 R / dt^2
    let v_var = 2.0 * r_var / (dt * dt);
    let mut p = Matrix4::from_diagonal(&Vector4::new(r_var, r_var, v_var, v_var));

    let mut steps = Vec::with_capacity(pts.len());
    steps.push(FilterStep {
        state: x,
        covariance: p,
    });
    for pt in &pts[1..] {
        x = f * x;
        p = f * p * f.transpose() + q;

        let innovation = Vector2::new(pt.x, pt.y) - h * x;
        let s = h * p * h.transpose() + r;
        let s_inv = s
            .try_inverse()
            .ok_or_else(|| Error::InvalidConfig("singular innovation covariance".into()))?;
        let gain: Matrix4x2<f64> = p * h.transpose() * s_inv;
        x += gain * innovation;
        // Joseph form keeps P symmetric positive-definite
        let i_kh = Matrix4::identity() - gain * h;
        p = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();
        p = (p + p.transpose()) * 0.5;
        steps.push(FilterStep {
            state: x,
            covariance: p,
        });
    }
    Ok(steps)
}

/// Filtered positions at the input timestamps.
pub fn kalman_filter_cv(traj: &Trajectory, cfg: &KalmanConfig) -> Result<Trajectory> {
    let steps = kalman_steps(traj, cfg)?;
    Trajectory::new(
        traj.points()
            .iter()
            .zip(&steps)
            .map(|(p, s)| TimedPoint::new(p.t, s.state[0], s.state[1]))
            .collect(),
    )
}

/// Largest distance between a raw point and its filtered counterpart.
pub fn perception_noise(traj: &Trajectory, cfg: &KalmanConfig) -> Result<f64> {
    let filtered = kalman_filter_cv(traj, cfg)?;
    Ok(traj
        .points()
        .iter()
        .zip(filtered.points())
        .map(|(a, b)| {
            let (dx, dy) = (a.x - b.x, a.y - b.y);
            (dx * dx + dy * dy).sqrt()
        })
        .fold(0.0, f64::max))
}

/// Noise of each sample's past and future taken as one track.
pub fn sample_noise(s: &Sample, cfg: &KalmanConfig) -> Result<f64> {
    perception_noise(&s.full_track()?, cfg)
}

pub fn noise_histogram(samples: &[Sample], cfg: &KalmanConfig, bin_width: f64) -> Result<Histogram> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidConfig(format!("bin_width must be positive, got {bin_width}")));
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput("noise histogram"));
    }
    let noise = samples
        .iter()
        .map(|s| sample_noise(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    Histogram::from_values(&noise, bin_width).ok_or(Error::EmptyInput("noise histogram"))
}
