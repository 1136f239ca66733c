use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model has no states")]
    EmptyModel,
    #[error("gamma: discount factor {0} is outside [0, 1)")]
    BadDiscount(f64),
    #[error("num_states: declared {declared} but {found} states were given")]
    StateCountMismatch { declared: usize, found: usize },
    #[error("states[{state}].actions: state has no actions")]
    NoActions { state: usize },
    #[error("states[{state}].actions[{action}].cost: {cost} is not finite")]
    NonFiniteCost { state: usize, action: usize, cost: f64 },
    #[error("states[{state}].actions[{action}].transitions: row is empty")]
    EmptyRow { state: usize, action: usize },
    #[error(
        "states[{state}].actions[{action}].transitions[{entry}]: destination {dest} is out of range (num_states = {num_states})"
    )]
    BadDestination { state: usize, action: usize, entry: usize, dest: usize, num_states: usize },
    #[error("states[{state}].actions[{action}].transitions[{entry}]: probability {prob} is not in (0, 1]")]
    BadProbability { state: usize, action: usize, entry: usize, prob: f64 },
    #[error("states[{state}].actions[{action}].transitions[{entry}]: duplicate destination {dest}")]
    DuplicateDestination { state: usize, action: usize, entry: usize, dest: usize },
    #[error("states[{state}].actions[{action}].transitions: probabilities sum to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("initial_dist: {0}")]
    BadInitialDist(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("partition: {0}")]
    BadPartition(String),
    #[error("{what} did not converge within {iters} iterations (last change {change:e})")]
    NotConverged { what: &'static str, iters: usize, change: f64 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
