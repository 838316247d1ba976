use thiserror::Error;

use crate::geometry::Validity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("action id {id} out of range for {modules} modules (max {max})")]
    ActionOutOfRange { id: usize, modules: usize, max: usize },

    #[error("invalid rotation angle {0} degrees (expected one of 90, -90, 180, -180)")]
    InvalidAngle(i32),

    #[error("invalid edge sign {0} (expected -1 or +1)")]
    InvalidSign(i32),

    #[error("module index {module} is not movable in a {modules}-module system")]
    ModuleOutOfRange { module: usize, modules: usize },

    #[error("cell set must not be empty")]
    EmptyCellSet,

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid goal: {0}")]
    InvalidGoal(String),

    #[error("rotation is not applicable to this configuration ({0:?})")]
    InvalidMove(Validity),

    #[error("action {0} is masked out in the current state")]
    MaskedAction(usize),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("cost matrix entry ({row}, {col}) = {value} is negative or not finite")]
    BadCost { row: usize, col: usize, value: f64 },

    #[error("brute force limited to {max} modules, got {got}")]
    TooLarge { max: usize, got: usize },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("future state does not belong to the transition's episode")]
    CrossEpisode,

    #[error("non-finite value in {what}: {detail}")]
    NonFinite { what: String, detail: String },

    #[error("forward cache does not match the network ({0})")]
    StaleCache(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
