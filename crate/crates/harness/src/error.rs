use rowgossip_core::Error;
use thiserror::Error;

pub type HarnessResult<T> = Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("invariant failure: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit status: 1 invariant failure, 2 bad configuration,
    /// 3 numerical breakdown.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Invariant(_) => 1,
            HarnessError::Core(e) if e.is_numerical() => 3,
            HarnessError::Core(Error::InvariantViolation(_)) => 1,
            HarnessError::Core(_) | HarnessError::Config(_) | HarnessError::Io(_) => 2,
        }
    }
}
