use thiserror::Error;

pub type Result<T> = std::result::Result<T, FlycapError>;

/// Errors raised by the model, the analysis tools and the scenario engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlycapError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("switch state {value} at position {position} is not binary")]
    NonBinarySwitch { position: usize, value: u8 },

    #[error("inputs {0:?} do not correspond to any binary switch vector")]
    InconsistentInputs(Vec<i8>),

    #[error("operation requires a {required}-cell converter, got {got} cells")]
    UnsupportedCellCount { required: usize, got: usize },

    #[error("hybrid time trajectory is empty")]
    EmptyTrajectory,

    #[error("invalid hybrid time trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("degenerate time window [{start}, {end}]")]
    DegenerateWindow { start: f64, end: f64 },

    #[error("the load current I is always measured and cannot be part of the observed function z")]
    CurrentInObservedFunction,

    #[error("state coordinate {0} does not exist for this converter")]
    UnknownCoordinate(String),

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },

    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),

    #[error("excitation window {window} s is longer than the trajectory span {span} s")]
    WindowTooLong { window: f64, span: f64 },

    #[error("record lacks the observer accumulators needed for the Lyapunov function")]
    MissingAccumulators,

    #[error("time series is empty")]
    EmptySeries,

    #[error("numerical abort at step {step} (t = {time:e} s): {detail}")]
    NumericalAbort { step: usize, time: f64, detail: String },
}

impl FlycapError {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        FlycapError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }
}
