use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid mode index {0}: modes are numbered 1 and 2")]
    InvalidMode(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("degenerate gap {gap:.3e} between subspaces {from} and {to}")]
    DegenerateGap { from: usize, to: usize, gap: f64 },
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown gate target `{0}`")]
    UnknownTarget(String),
    #[error("trajectory format: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
