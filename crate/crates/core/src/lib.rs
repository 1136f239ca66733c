//! Value iteration with adaptive state aggregation for tabular MDPs.
//!
//! The solver alternates exact synchronous Bellman sweeps with cheap
//! stochastic updates over "mega-states" formed by bucketing the current
//! cost-to-go values. Alongside it live the benchmark environments (standard
//! and terrain mazes, a discretized CartPole) and the seeded experiment
//! runners used to measure error, efficiency, scaling and robustness.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod cartpole;
pub mod envs;
pub mod error;
pub mod experiments;
pub mod io;
pub mod mdp;
pub mod par;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{ActionEntry, MdpModel, Policy, Solution, ValueFunction};
pub use par::Execution;
pub use rng::StreamKey;
