use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("example index {index} out of range for {len} examples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dataset has no examples")]
    EmptyDataset,
    #[error("negative entry {value} at coordinate {index}")]
    NegativeEntry { index: usize, value: f64 },
    #[error("data rows are linearly dependent (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },
    #[error("linear program solver failed: {0}")]
    Solver(&'static str),
    #[error("insufficient data: need at least {need}, have {have}")]
    InsufficientData { need: usize, have: usize },
    #[error("iterate became non-finite or exceeded the divergence limit")]
    Diverged,
    #[error("quadrature did not reach tolerance on [{lo}, {hi}]")]
    Quadrature { lo: f64, hi: f64 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
