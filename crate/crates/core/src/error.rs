use thiserror::Error;

/// Errors raised by the geometry kernel, the integrator and the monitors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("singular induced metric at point {index} (det g = {det:e})")]
    SingularMetric { index: usize, det: f64 },

    #[error("non-finite value after step {step} at t = {time}")]
    NonFinite { step: usize, time: f64 },

    #[error("found only {found} of {needed} independent normal directions")]
    FrameDegeneracy { found: usize, needed: usize },

    #[error("plane frame is not orthonormal (defect {defect:e})")]
    NonOrthonormalFrame { defect: f64 },

    #[error("sample {index} is {distance} away from every center (limit {limit})")]
    CoverageFailure {
        index: usize,
        distance: f64,
        limit: f64,
    },

    #[error("point lies outside the support of every cutoff")]
    EmptyCover,

    #[error("no admissible threshold below 1 for n = {n}, m = {m}")]
    InfeasibleConstants { n: usize, m: usize },

    #[error("monitor needs at least {needed} snapshots, trajectory has {found}")]
    InsufficientSnapshots { needed: usize, found: usize },

    #[error("precondition lost: {0}")]
    PreconditionLost(String),

    #[error("localization window closed at t = {0}")]
    WindowClosed(f64),

    #[error("condition violated at t = {time}, point {index}: {detail}")]
    ConditionViolated {
        time: f64,
        index: usize,
        detail: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for the failures that end a flow run as a numerical halt.
    pub fn is_numerical_halt(&self) -> bool {
        matches!(self, Error::SingularMetric { .. } | Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
