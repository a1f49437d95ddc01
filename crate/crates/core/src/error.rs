use std::io;
use std::path::PathBuf;

use crate::domain::ProductionState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("no state information in log")]
    NoStateInformation,

    #[error("degenerate dimension {0}: all values are equal")]
    DegenerateDimension(usize),

    #[error("value {0} must be strictly positive")]
    NonPositive(f64),

    #[error("normalized value {0} lies outside [0, 1]")]
    OutOfUnitRange(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("layer {layer}: expected input width {expected}, got {got}")]
    LayerMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("forward cache does not belong to the current network parameters")]
    StaleCache,

    #[error("need at least 2 episodes, got {0}")]
    TooFewEpisodes(usize),

    #[error("transition count from {0} to itself must be zero")]
    NonZeroDiagonal(ProductionState),

    #[error("state {0} has no outgoing transitions")]
    DeadState(ProductionState),

    #[error("no jumping-time samples for {from} -> {to}")]
    EmptyJumpingSet {
        from: ProductionState,
        to: ProductionState,
    },

    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("row {0} does not carry a valid one-hot state condition")]
    InvalidOneHot(usize),

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error("file is truncated: {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Malformed(String),

    #[error("model kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: String, found: String },

    #[error("histogram bin edges differ")]
    EdgeMismatch,

    #[error("empty sample set")]
    EmptySamples,

    #[error("missing model for cell {row} / {state}")]
    MissingModel { row: String, state: ProductionState },

    #[error("no packet model for state {0}")]
    NoModelForState(ProductionState),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::NonFiniteGradient | Error::NoConvergence(_)
        )
    }
}
