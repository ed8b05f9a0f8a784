//! Heatmap-based uncertainty estimation and uncertainty-adaptive endpoint
//! sampling for trajectory prediction, with the metrics, calibration and
//! dataset analyses needed to evaluate it.
//!
//! The crate never trains a model. Heatmaps come either from exchange files
//! produced elsewhere or from the deterministic Gaussian-mixture generator in
//! [`synth`].

pub mod calibration;
pub mod config;
pub mod error;
pub mod formats;
pub mod harness;
pub mod heatmap;
pub mod metrics;
pub mod noise;
pub mod numeric;
pub mod sampling;
pub mod svg;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};

/// A point in the plane, meters.
pub type Point2 = [f64; 2];
