use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),

    #[error("trajectory {name}: {reason}")]
    Trajectory { name: String, reason: String },

    #[error("level-4 motion requested but the trajectory library is empty")]
    EmptyLibrary,

    #[error("planner produced a non-finite cost: {0}")]
    NonFiniteCost(String),

    #[error("innovation covariance is singular")]
    SingularInnovation,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("{0}")]
    Empty(&'static str),

    #[error("episode log: {0}")]
    Log(String),

    #[error("bridge: {0}")]
    Bridge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
