//! Sparse tabular MDPs and the exact dynamic-programming primitives.
//!
//! Costs are minimized. A model stores its actions in compressed rows: each
//! state owns a contiguous run of actions, and each action a contiguous run of
//! `(destination, probability)` pairs.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};
use crate::par::Execution;

const ROW_SUM_TOL: f64 = 1e-9;

/// One action of a state as supplied by a builder: immediate cost plus a
/// sparse transition row.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionEntry {
    pub cost: f64,
    pub transitions: Vec<(usize, f64)>,
}

impl ActionEntry {
    pub fn new(cost: f64, transitions: Vec<(usize, f64)>) -> Self {
        ActionEntry { cost, transitions }
    }

    /// Deterministic move to `dest`.
    pub fn to(dest: usize, cost: f64) -> Self {
        ActionEntry { cost, transitions: vec![(dest, 1.0)] }
    }
}

/// A validated tabular MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct MdpModel {
    gamma: f64,
    /// `action_start[s]..action_start[s + 1]` are the actions of state `s`.
    action_start: Vec<usize>,
    costs: Vec<f64>,
    /// `row_start[a]..row_start[a + 1]` is the transition row of global action `a`.
    row_start: Vec<usize>,
    dest: Vec<u32>,
    prob: Vec<f64>,
    initial_dist: Option<Vec<f64>>,
}

impl MdpModel {
    /// Build and validate a model from per-state action lists.
    pub fn new(gamma: f64, states: Vec<Vec<ActionEntry>>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyModel);
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::BadDiscount(gamma));
        }
        let num_states = states.len();
        if num_states > u32::MAX as usize {
            return Err(Error::invalid("num_states", "exceeds u32 range"));
        }
        let total_actions: usize = states.iter().map(Vec::len).sum();
        let mut model = MdpModel {
            gamma,
            action_start: Vec::with_capacity(num_states + 1),
            costs: Vec::with_capacity(total_actions),
            row_start: Vec::with_capacity(total_actions + 1),
            dest: Vec::new(),
            prob: Vec::new(),
            initial_dist: None,
        };
        model.action_start.push(0);
        model.row_start.push(0);
        let mut seen = vec![usize::MAX; num_states];
        let mut stamp = 0usize;
        for (s, actions) in states.into_iter().enumerate() {
            if actions.is_empty() {
                return Err(Error::NoActions { state: s });
            }
            for (a, entry) in actions.into_iter().enumerate() {
                if !entry.cost.is_finite() {
                    return Err(Error::NonFiniteCost { state: s, action: a, cost: entry.cost });
                }
                if entry.transitions.is_empty() {
                    return Err(Error::EmptyRow { state: s, action: a });
                }
                let mut sum = 0.0;
                for (k, &(d, p)) in entry.transitions.iter().enumerate() {
                    if d >= num_states {
                        return Err(Error::BadDestination {
                            state: s,
                            action: a,
                            entry: k,
                            dest: d,
                            num_states,
                        });
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::BadProbability { state: s, action: a, entry: k, prob: p });
                    }
                    if seen[d] == stamp {
                        return Err(Error::DuplicateDestination { state: s, action: a, entry: k, dest: d });
                    }
                    seen[d] = stamp;
                    sum += p;
                    model.dest.push(d as u32);
                    model.prob.push(p);
                }
                stamp += 1;
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::RowSum { state: s, action: a, sum });
                }
                model.costs.push(entry.cost);
                model.row_start.push(model.dest.len());
            }
            model.action_start.push(model.costs.len());
        }
        Ok(model)
    }

    /// Attach an initial-state distribution. The solvers never read it.
    pub fn with_initial_dist(mut self, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != self.num_states() {
            return Err(Error::BadInitialDist(format!(
                "length {} does not match num_states {}",
                rho.len(),
                self.num_states()
            )));
        }
        if let Some((i, p)) = rho.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::BadInitialDist(format!("entry {i} = {p} is not a probability")));
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::BadInitialDist(format!("sums to {sum}, expected 1")));
        }
        self.initial_dist = Some(rho);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.action_start.len() - 1
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_dist(&self) -> Option<&[f64]> {
        self.initial_dist.as_deref()
    }

    pub fn num_actions(&self, s: usize) -> usize {
        self.action_start[s + 1] - self.action_start[s]
    }

    pub fn total_actions(&self) -> usize {
        self.costs.len()
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.costs[self.action_start[s] + a]
    }

    /// Transition row of action `a` at state `s`.
    pub fn transitions(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let g = self.action_start[s] + a;
        let range = self.row_start[g]..self.row_start[g + 1];
        self.dest[range.clone()].iter().map(|&d| d as usize).zip(self.prob[range].iter().copied())
    }

    /// Largest absolute immediate cost.
    pub fn max_abs_cost(&self) -> f64 {
        self.costs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `r(s,a) + γ Σ_{s'} P(s'|s,a) value(s')`, with `value` given per state.
    #[inline]
    pub fn q_with<F: Fn(usize) -> f64>(&self, s: usize, a: usize, value: F) -> f64 {
        let g = self.action_start[s] + a;
        let (lo, hi) = (self.row_start[g], self.row_start[g + 1]);
        let mut ev = 0.0;
        for k in lo..hi {
            ev += self.prob[k] * value(self.dest[k] as usize);
        }
        self.costs[g] + self.gamma * ev
    }

    /// Minimum of [`MdpModel::q_with`] over actions; ties go to the lowest index.
    #[inline]
    pub fn backup_with<F: Fn(usize) -> f64>(&self, s: usize, value: F) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for a in 0..self.num_actions(s) {
            let q = self.q_with(s, a, &value);
            if q < best {
                best = q;
                arg = a;
            }
        }
        (best, arg)
    }

    /// Per-state action lists, the inverse of [`MdpModel::new`].
    pub fn to_entries(&self) -> Vec<Vec<ActionEntry>> {
        (0..self.num_states())
            .map(|s| {
                (0..self.num_actions(s))
                    .map(|a| ActionEntry::new(self.cost(s, a), self.transitions(s, a).collect()))
                    .collect()
            })
            .collect()
    }

    /// Apply `f(state, action, cost)` to every cost. Structure is untouched.
    pub fn map_costs<F: FnMut(usize, usize, f64) -> f64>(&self, mut f: F) -> Result<Self> {
        let mut out = self.clone();
        for s in 0..self.num_states() {
            for a in 0..self.num_actions(s) {
                let g = self.action_start[s] + a;
                let c = f(s, a, self.costs[g]);
                if !c.is_finite() {
                    return Err(Error::NonFiniteCost { state: s, action: a, cost: c });
                }
                out.costs[g] = c;
            }
        }
        Ok(out)
    }
}

/// Dense cost-to-go vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValueFunction(Vec<f64>);

impl ValueFunction {
    pub fn zeros(n: usize) -> Self {
        ValueFunction(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `‖v‖∞`
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        ValueFunction(self.0.iter().map(|x| c * x).collect())
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(v: Vec<f64>) -> Self {
        ValueFunction(v)
    }
}

impl Deref for ValueFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ValueFunction {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Deterministic policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(model: &MdpModel, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != model.num_states() {
            return Err(Error::LengthMismatch { left: actions.len(), right: model.num_states() });
        }
        if let Some(s) = (0..actions.len()).find(|&s| actions[s] >= model.num_actions(s)) {
            return Err(Error::invalid("policy", format!("action {} at state {s} does not exist", actions[s])));
        }
        Ok(Policy(actions))
    }

    pub fn action(&self, s: usize) -> usize {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// Outcome of an iterative fixed-point solve.
#[derive(Clone, Debug)]
pub struct Solution {
    pub values: ValueFunction,
    pub iters: usize,
    /// Update units spent (one per single-state backup).
    pub updates: u64,
    pub converged: bool,
    /// ℓ∞ change of the final sweep.
    pub last_change: f64,
}

fn check_len(model: &MdpModel, v: &[f64]) -> Result<()> {
    if v.len() != model.num_states() {
        return Err(Error::LengthMismatch { left: v.len(), right: model.num_states() });
    }
    Ok(())
}

/// `T_s(v)` and the minimizing action.
pub fn bellman_backup(model: &MdpModel, v: &[f64], s: usize) -> (f64, usize) {
    model.backup_with(s, |d| v[d])
}

/// One synchronous application of the Bellman operator.
pub fn bellman_sweep(model: &MdpModel, v: &[f64]) -> Result<ValueFunction> {
    let mut out = ValueFunction::zeros(model.num_states());
    bellman_sweep_into(model, v, &mut out, Execution::default())?;
    Ok(out)
}

/// [`bellman_sweep`] writing into a caller buffer with an explicit execution mode.
pub fn bellman_sweep_into(model: &MdpModel, v: &[f64], out: &mut [f64], exec: Execution) -> Result<()> {
    check_len(model, v)?;
    check_len(model, out)?;
    exec.fill(out, |s| bellman_backup(model, v, s).0);
    Ok(())
}

/// Repeated synchronous sweeps from `v0` until the ℓ∞ change drops to `tol`
/// or `max_iters` sweeps have run.
pub fn value_iteration(model: &MdpModel, v0: &[f64], max_iters: usize, tol: f64) -> Result<Solution> {
    check_len(model, v0)?;
    if !(tol > 0.0) && max_iters == usize::MAX {
        return Err(Error::invalid("tol", "must be positive when max_iters is unbounded"));
    }
    let exec = Execution::default();
    let n = model.num_states();
    let mut cur = v0.to_vec();
    let mut next = vec![0.0; n];
    let mut iters = 0;
    let mut change = f64::INFINITY;
    while iters < max_iters {
        bellman_sweep_into(model, &cur, &mut next, exec)?;
        iters += 1;
        change = linf(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        if change <= tol {
            break;
        }
    }
    Ok(Solution {
        values: cur.into(),
        iters,
        updates: iters as u64 * n as u64,
        converged: change <= tol,
        last_change: change,
    })
}

/// Relative gap below which two Q-values count as tied when extracting a policy.
pub const GREEDY_TIE_TOL: f64 = 1e-10;

/// Greedy policy with respect to `v`, lowest-index tie-break. Q-values within
/// `GREEDY_TIE_TOL·(1 + |q|)` of the minimum are ties, so rounding noise in
/// the expectations does not pick the action.
pub fn greedy_policy(model: &MdpModel, v: &[f64]) -> Result<Policy> {
    check_len(model, v)?;
    let actions = Execution::default().map(model.num_states(), |s| {
        let (best, _) = model.backup_with(s, |d| v[d]);
        let slack = GREEDY_TIE_TOL * (1.0 + best.abs());
        (0..model.num_actions(s))
            .find(|&a| model.q_with(s, a, |d| v[d]) <= best + slack)
            .expect("the minimizing action is within the slack")
    });
    Ok(Policy(actions))
}

/// Iterative evaluation of a fixed policy from zero.
pub fn policy_evaluation(model: &MdpModel, pi: &Policy, tol: f64, max_iters: usize) -> Result<Solution> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("{tol} must be positive")));
    }
    if pi.as_slice().len() != model.num_states() {
        return Err(Error::LengthMismatch { left: pi.as_slice().len(), right: model.num_states() });
    }
    let exec = Execution::default();
    let n = model.num_states();
    let mut cur = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut iters = 0;
    let mut change = f64::INFINITY;
    while iters < max_iters {
        exec.fill(&mut next, |s| model.q_with(s, pi.action(s), |d| cur[d]));
        iters += 1;
        change = linf(&cur, &next);
        std::mem::swap(&mut cur, &mut next);
        if change <= tol {
            break;
        }
    }
    Ok(Solution {
        values: cur.into(),
        iters,
        updates: iters as u64 * n as u64,
        converged: change <= tol,
        last_change: change,
    })
}

#[inline]
pub(crate) fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// `max_s |a(s) − b(s)|`
pub fn linf_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    Ok(linf(a, b))
}

/// Multiply every immediate cost by `c > 0`.
pub fn scale_costs(model: &MdpModel, c: f64) -> Result<MdpModel> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("scale", format!("{c} must be a positive finite number")));
    }
    model.map_costs(|_, _, r| r * c)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// One state, one self-loop of cost `cost`.
    pub fn self_loop(cost: f64, gamma: f64) -> MdpModel {
        MdpModel::new(gamma, vec![vec![ActionEntry::to(0, cost)]]).unwrap()
    }

    /// State 0 moves to state 1 at cost 1; state 1 is absorbing at cost 0.
    pub fn chain(gamma: f64) -> MdpModel {
        MdpModel::new(gamma, vec![vec![ActionEntry::to(1, 1.0)], vec![ActionEntry::to(1, 0.0)]]).unwrap()
    }
}
