use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: {0}")]
    InputShape(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("could not place entities without overlap after {0} attempts")]
    Placement(usize),
    #[error("action {action} out of range for agent {agent} (n_actions = {n_actions})")]
    Action {
        agent: usize,
        action: usize,
        n_actions: usize,
    },
    #[error("policy mode error: {0}")]
    Mode(String),
    #[error("replay buffer not ready: {have} transitions, need {need}")]
    NotReady { have: usize, need: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("distribution error: {0}")]
    Distribution(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
