use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size rule for aggregated updates, evaluated at the aggregated-iteration
/// counter (which starts at 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StepSizeSchedule {
    /// `α_t = c`
    Constant(f64),
    /// `α_t = 1/√t`
    InverseSqrt,
    /// `α_t = t^(−β)`
    Polynomial(f64),
}

impl StepSizeSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSizeSchedule::Constant(c) if !(c > 0.0 && c <= 1.0) => {
                Err(Error::invalid("alpha", format!("constant step {c} is not in (0, 1]")))
            }
            StepSizeSchedule::Polynomial(b) if !(b > 0.0 && b.is_finite()) => {
                Err(Error::invalid("alpha", format!("exponent {b} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn at(&self, t_sa: u64) -> f64 {
        step_size(self, t_sa)
    }
}

/// `α` at aggregated iteration `t_sa ≥ 1`.
pub fn step_size(schedule: &StepSizeSchedule, t_sa: u64) -> f64 {
    let t = t_sa.max(1) as f64;
    match *schedule {
        StepSizeSchedule::Constant(c) => c,
        StepSizeSchedule::InverseSqrt => 1.0 / t.sqrt(),
        StepSizeSchedule::Polynomial(beta) => t.powf(-beta),
    }
}

/// Constant step just under the stable-field threshold `ε / ((1−γ)·|A|)`.
pub fn prop2_alpha(eps: f64, gamma: f64, agg_len: usize) -> f64 {
    0.99 * eps / ((1.0 - gamma) * agg_len.max(1) as f64)
}

impl FromStr for StepSizeSchedule {
    type Err = Error;

    /// Accepts `const:C`, `invsqrt` or `poly:B`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let parse = |x: &str| {
            x.parse::<f64>().map_err(|_| Error::invalid("alpha", format!("cannot parse number in {s:?}")))
        };
        let sched = if s == "invsqrt" {
            StepSizeSchedule::InverseSqrt
        } else if let Some(c) = s.strip_prefix("const:") {
            StepSizeSchedule::Constant(parse(c)?)
        } else if let Some(b) = s.strip_prefix("poly:") {
            StepSizeSchedule::Polynomial(parse(b)?)
        } else {
            return Err(Error::invalid("alpha", format!("{s:?} is not one of const:C, invsqrt, poly:B")));
        };
        sched.validate()?;
        Ok(sched)
    }
}

impl fmt::Display for StepSizeSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepSizeSchedule::Constant(c) => write!(f, "const:{c}"),
            StepSizeSchedule::InverseSqrt => f.write_str("invsqrt"),
            StepSizeSchedule::Polynomial(b) => write!(f, "poly:{b}"),
        }
    }
}

impl TryFrom<String> for StepSizeSchedule {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StepSizeSchedule> for String {
    fn from(s: StepSizeSchedule) -> String {
        s.to_string()
    }
}

/// Interval lengths: either constant, or a sequence whose last entry repeats.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lengths {
    Constant(usize),
    Sequence(Vec<usize>),
}

impl Lengths {
    /// Length of interval `i` (0-based).
    pub fn get(&self, i: usize) -> usize {
        match self {
            Lengths::Constant(n) => *n,
            Lengths::Sequence(v) => v.get(i).or(v.last()).copied().unwrap_or(0),
        }
    }

    fn min(&self) -> Option<usize> {
        match self {
            Lengths::Constant(n) => Some(*n),
            Lengths::Sequence(v) => v.iter().copied().min(),
        }
    }

    pub fn max(&self) -> usize {
        match self {
            Lengths::Constant(n) => *n,
            Lengths::Sequence(v) => v.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Lengths of the alternating global (`B_i`) and aggregated (`A_i`) intervals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub global_len: Lengths,
    pub agg_len: Lengths,
}

impl PhaseSchedule {
    pub fn constant(global_len: usize, agg_len: usize) -> Self {
        PhaseSchedule { global_len: Lengths::Constant(global_len), agg_len: Lengths::Constant(agg_len) }
    }

    pub fn validate(&self) -> Result<()> {
        match self.global_len.min() {
            Some(g) if g >= 1 => {}
            _ => return Err(Error::invalid("global_len", "every global interval needs at least one sweep")),
        }
        if self.agg_len.min().is_none() {
            return Err(Error::invalid("agg_len", "sequence is empty"));
        }
        Ok(())
    }
}
