use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("partition points are not strictly increasing (index {index})")]
    NotSorted { index: usize },
    #[error(
        "partition must start at 0 and end at a horizon T > 0 (got first={first}, last={last})"
    )]
    WrongEndpoints { first: f64, last: f64 },
    #[error("a partition needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("operands are defined on different partitions")]
    PartitionMismatch,
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("direction has zero L2 norm")]
    ZeroDirection,
    #[error("direction knot t={0} is not a fine-grid node")]
    DirectionMisaligned(f64),
    #[error("fine-grid resolution must be at least 1 sub-step per subinterval")]
    BadResolution,
    #[error("time {0} is not a node of the fine grid")]
    GridMisaligned(f64),
    #[error("non-finite solver state on path {path} at t={time}")]
    NonFiniteState { path: usize, time: f64 },
    #[error("closed-form directional derivative requires sigma == 1 on every subinterval")]
    SigmaUnsupported,
    #[error("D_h Y vanishes identically for this initial condition and direction")]
    DegenerateInit,
    #[error("direction is not admissible (non-zero mean on subinterval {0})")]
    NotAdmissible(usize),
    #[error("finite-difference step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("ensemble carries no derivative samples")]
    NoDerivatives,
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("{0}")]
    InsufficientData(String),
    #[error("no bin holds at least {min_count} samples")]
    EmptyBins { min_count: usize },
    #[error("test function support must lie strictly inside ({start}, {end})")]
    UnsupportedTestFunction { start: f64, end: f64 },
    #[error("bump support out of range: {0}")]
    SupportOutOfRange(String),
    #[error("operation requires zero drift and a deterministic initial condition")]
    WrongModel,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn out_of_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::OutOfRange {
            what,
            value,
            lo,
            hi,
        }
    }
}
