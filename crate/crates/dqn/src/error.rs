use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DqnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iter} (seed {seed}): {msg}")]
    Training { iter: u64, seed: u64, msg: String },
    #[error(transparent)]
    Core(#[from] ipd_core::Error),
}

pub type Result<T> = std::result::Result<T, DqnError>;
