use thiserror::Error;
use ufo_learn::LearnError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Core(#[from] ufo_core::Error),
}

impl CliError {
    /// 2 for configuration and input errors, 3 for divergence or non-finite
    /// values, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use ufo_core::Error as E;
        let core = |e: &E| match e {
            E::NonFinite(_) => 3,
            E::UnknownTarget(_) | E::Format(_) => 2,
            _ => 1,
        };
        match self {
            Self::Config(_) => 2,
            Self::Io(_) => 1,
            Self::Learn(LearnError::Config(_) | LearnError::Checkpoint(_)) => 2,
            Self::Learn(LearnError::Divergence { .. }) => 3,
            Self::Learn(LearnError::Core(e)) | Self::Core(e) => core(e),
            Self::Learn(LearnError::Shape(_)) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Learn(LearnError::Divergence { iteration: 3, cost: f64::NAN }).exit_code(), 3);
        assert_eq!(CliError::Core(ufo_core::Error::NonFinite("h".into())).exit_code(), 3);
        assert_eq!(CliError::Learn(LearnError::Core(ufo_core::Error::NonFinite("h".into()))).exit_code(), 3);
        assert_eq!(CliError::Io("disk".into()).exit_code(), 1);
    }
}
