use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("trajectory has {0} points, at least 2 are required")]
    DegenerateTrajectory(usize),

    #[error("trajectory spans [{have_start}, {have_end}] s but [{want_start}, {want_end}] s was requested")]
    Coverage {
        have_start: f64,
        have_end: f64,
        want_start: f64,
        want_end: f64,
    },

    #[error("sample {id}: {segment} does not cover the standard window: {source}")]
    SegmentCoverage {
        id: String,
        segment: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid heatmap: {0}")]
    InvalidHeatmap(String),

    #[error("heatmap has no positive mass")]
    ZeroMass,

    #[error("heatmap is empty")]
    EmptyHeatmap,

    #[error("prediction set has no endpoints")]
    EmptyPrediction,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("trajectory is not uniformly sampled: step {index} is {step} s, expected {expected} s")]
    NonUniformSampling {
        index: usize,
        step: f64,
        expected: f64,
    },

    #[error("least squares is degenerate: all x values are equal")]
    DegenerateFit,

    #[error("calibration needs at least 2 uncertainty bins with >= {min_count} samples, found {found}")]
    InsufficientBins { found: usize, min_count: usize },

    #[error("calibrated intercept {0} is not positive")]
    NonPositiveIntercept(f64),

    #[error("{count} sample ids do not match between heatmaps and ground truth, first offenders: {first:?}")]
    IdMismatch { count: usize, first: Vec<String> },

    #[error("duplicate sample id {0}")]
    DuplicateId(String),

    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
