use thiserror::Error;

use crate::nn::Checkpoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid scenario, topology or learner configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an interface contract (arity, shape, range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A metric was requested over an empty UE set.
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    /// Non-finite loss or gradient during training.
    #[error("training diverged: {0}")]
    Training(String),

    /// Training hit a non-finite value and stopped; carries the last good
    /// parameters.
    #[error("training diverged in episode {}: {}", .0.episode, .0.message)]
    Diverged(Box<Divergence>),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

#[derive(Debug)]
pub struct Divergence {
    pub episode: usize,
    pub message: String,
    pub checkpoint: Checkpoint,
}
