use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Core(#[from] ufo_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("optimizer diverged at iteration {iteration}: cost {cost:e}")]
    Divergence { iteration: usize, cost: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, LearnError>;
