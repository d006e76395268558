use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VmcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coefficient is not positive ({value}) at point ({x}, {y})")]
    EllipticityViolation { x: f64, y: f64, value: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    /// Cholesky breakdown that survived the diagonal jitter retry.
    #[error("ill-conditioned operator: non-positive pivot {pivot} at row {row}")]
    Conditioning { row: usize, pivot: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("index {index} out of range for mode {mode} of size {size}")]
    IndexOutOfRange {
        mode: usize,
        index: usize,
        size: usize,
    },

    #[error("unsupported dimension {requested}; at most {supported} available")]
    UnsupportedDimension { requested: usize, supported: usize },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("relative error undefined: reference norm is zero")]
    UndefinedRelativeError,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl VmcError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        VmcError::InvalidArgument(msg.into())
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            VmcError::InvalidArgument(_)
                | VmcError::DimensionMismatch { .. }
                | VmcError::UnsupportedDimension { .. }
                | VmcError::Parse(_)
        )
    }
}

impl From<std::io::Error> for VmcError {
    fn from(e: std::io::Error) -> Self {
        VmcError::Io(e.to_string())
    }
}

impl From<csv::Error> for VmcError {
    fn from(e: csv::Error) -> Self {
        VmcError::Io(e.to_string())
    }
}

pub type Result<T, E = VmcError> = std::result::Result<T, E>;
