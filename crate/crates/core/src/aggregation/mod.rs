//! State aggregation: value-based partitioning, stochastic aggregated updates,
//! the adaptive alternating solver and a deterministic fixed-point oracle.

mod partition;
mod schedule;
mod solver;
mod trace;

pub use partition::{AggValues, Partition};
pub use schedule::{prop2_alpha, step_size, Lengths, PhaseSchedule, StepSizeSchedule};
pub use solver::{avia, AdaptiveSolver, AviaConfig};
pub use trace::{Phase, SolveTrace, TraceRecord};

use crate::error::{Error, Result};
use crate::mdp::{linf, MdpModel, ValueFunction};
use crate::par::Execution;
use crate::rng::StreamKey;

/// Bucket count above which bucket ids are deduplicated by sorting instead of
/// a dense table.
const DENSE_BUCKET_FACTOR: u64 = 8;

/// Group states whose values fall in the same width-`eps` bucket above the
/// minimum.
///
/// Bucket `i` (0-based) covers `[b1 + i·eps, b1 + (i+1)·eps)`; the last bucket
/// is also closed on the right so the maximum is always covered. Empty buckets
/// are dropped in order, and each surviving block starts at its bucket's
/// midpoint `b1 + (i + ½)·eps`, computed from the original bucket index. When
/// every value is equal the result is one block valued at that common value.
pub fn value_based_aggregation(eps: f64, v: &[f64]) -> Result<(Partition, AggValues)> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("{eps} must be positive")));
    }
    if v.is_empty() {
        return Err(Error::invalid("values", "empty value vector"));
    }
    if let Some(s) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::invalid("values", format!("entry {s} is not finite")));
    }
    let (b1, b2) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if b1 == b2 {
        return Ok((Partition::single(v.len()), AggValues(vec![b1])));
    }
    let delta = (b2 - b1) / eps;
    if !(delta < 1e15) {
        return Err(Error::invalid("eps", format!("{eps} is too small for a value range of {}", b2 - b1)));
    }
    let num_buckets = (delta.ceil() as u64).max(1);
    let bucket = |x: f64| (((x - b1) / eps).floor() as u64).min(num_buckets - 1);
    let buckets: Vec<u64> = v.iter().map(|&x| bucket(x)).collect();

    // Surviving bucket ids in ascending order.
    let survivors: Vec<u64> = if num_buckets <= DENSE_BUCKET_FACTOR * v.len() as u64 {
        let mut used = vec![false; num_buckets as usize];
        for &b in &buckets {
            used[b as usize] = true;
        }
        (0..num_buckets).filter(|&b| used[b as usize]).collect()
    } else {
        let mut ids = buckets.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let labels: Vec<usize> = buckets
        .iter()
        .map(|b| survivors.binary_search(b).expect("bucket id is a survivor"))
        .collect();
    let w = survivors.iter().map(|&i| b1 + (i as f64 + 0.5) * eps).collect();
    Ok((Partition::from_labels(labels)?, AggValues(w)))
}

fn check_sizes(p: &Partition, w: &AggValues) -> Result<()> {
    if w.len() != p.num_blocks() {
        return Err(Error::LengthMismatch { left: w.len(), right: p.num_blocks() });
    }
    Ok(())
}

/// Piecewise-constant value function: every state takes its block's value.
pub fn lift(p: &Partition, w: &AggValues) -> Result<ValueFunction> {
    check_sizes(p, w)?;
    Ok(p.labels().iter().map(|&j| w[j]).collect::<Vec<_>>().into())
}

/// `T_s` applied to the lifted values of `w`, without materializing the lift.
#[inline]
pub(crate) fn lifted_backup(model: &MdpModel, p: &Partition, w: &[f64], s: usize) -> f64 {
    model.backup_with(s, |d| w[p.block_of(d)]).0
}

/// One synchronous aggregated update.
///
/// Block `j` draws a representative `s` uniformly from its members and moves
/// to `(1 − α)·W(j) + α·T_s(lift(W))`. All backups read the input `w`. The
/// draw for block `j` is a pure function of `(stream, round, j)`, so serial
/// and parallel execution agree. Costs `K` update units.
pub fn aggregated_sweep(
    model: &MdpModel,
    p: &Partition,
    w: &AggValues,
    alpha: f64,
    stream: StreamKey,
    round: u64,
) -> Result<AggValues> {
    let mut out = AggValues::zeros(w.len());
    aggregated_sweep_into(model, p, w, alpha, stream, round, &mut out, Execution::default())?;
    Ok(out)
}

/// [`aggregated_sweep`] into a caller buffer with an explicit execution mode.
#[allow(clippy::too_many_arguments)]
pub fn aggregated_sweep_into(
    model: &MdpModel,
    p: &Partition,
    w: &AggValues,
    alpha: f64,
    stream: StreamKey,
    round: u64,
    out: &mut AggValues,
    exec: Execution,
) -> Result<()> {
    check_sizes(p, w)?;
    if p.num_states() != model.num_states() {
        return Err(Error::LengthMismatch { left: p.num_states(), right: model.num_states() });
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} is not in (0, 1]")));
    }
    out.0.resize(w.len(), 0.0);
    let wv = w.as_slice();
    exec.fill(&mut out.0, |j| {
        let members = p.members(j);
        let s = members[stream.index(round, j as u64, members.len())];
        (1.0 - alpha) * wv[j] + alpha * lifted_backup(model, p, wv, s)
    });
    Ok(())
}

/// Random value iteration over a fixed partition, from `W = 0`.
pub fn rvia(
    model: &MdpModel,
    p: &Partition,
    steps: &StepSizeSchedule,
    n: usize,
    stream: StreamKey,
) -> Result<(AggValues, SolveTrace)> {
    steps.validate()?;
    let k = p.num_blocks();
    let mut w = AggValues::zeros(k);
    let mut next = AggValues::zeros(k);
    let mut trace = SolveTrace::default();
    let exec = Execution::default();
    let mut cum = 0u64;
    for t in 1..=n {
        let alpha = step_size(steps, t as u64);
        aggregated_sweep_into(model, p, &w, alpha, stream, t as u64, &mut next, exec)?;
        cum += k as u64;
        trace.push(TraceRecord {
            iter: t,
            phase: Phase::Aggregated,
            cum_updates: cum,
            blocks: k,
            linf_error: None,
            sup_norm: next.0.iter().fold(0.0, |m, x| m.max(x.abs())),
            step_change: linf(&w.0, &next.0),
            alpha: Some(alpha),
        });
        std::mem::swap(&mut w, &mut next);
    }
    Ok((w, trace))
}

/// Result of [`aggregate_fixed_point`].
#[derive(Clone, Debug)]
pub struct AggregateFixedPoint {
    pub w: AggValues,
    pub iters: usize,
    pub converged: bool,
}

/// Solve `W(j) = mean_{s ∈ S_j} T_s(lift(W))` by deterministic iteration from zero.
///
/// The block-averaged operator is a γ-contraction, so this is the limit that
/// [`rvia`] approaches under diminishing steps.
pub fn aggregate_fixed_point(
    model: &MdpModel,
    p: &Partition,
    tol: f64,
    max_iters: usize,
) -> Result<AggregateFixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("{tol} must be positive")));
    }
    if p.num_states() != model.num_states() {
        return Err(Error::LengthMismatch { left: p.num_states(), right: model.num_states() });
    }
    let k = p.num_blocks();
    let exec = Execution::default();
    let mut w = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut iters = 0;
    let mut change = f64::INFINITY;
    while iters < max_iters && change > tol {
        exec.fill(&mut next, |j| {
            let members = p.members(j);
            members.iter().map(|&s| lifted_backup(model, p, &w, s)).sum::<f64>() / members.len() as f64
        });
        change = linf(&w, &next);
        std::mem::swap(&mut w, &mut next);
        iters += 1;
    }
    Ok(AggregateFixedPoint { w: AggValues(w), iters, converged: change <= tol })
}

/// Per-block spread `max_{s1,s2 ∈ S_j} |v(s1) − v(s2)|`.
pub fn aggregation_error_vector(p: &Partition, v_star: &[f64]) -> Result<Vec<f64>> {
    if v_star.len() != p.num_states() {
        return Err(Error::LengthMismatch { left: v_star.len(), right: p.num_states() });
    }
    Ok(p.blocks()
        .map(|members| {
            let (lo, hi) = members
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(v_star[s]), hi.max(v_star[s])));
            hi - lo
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::fixtures::chain;
    use crate::mdp::{bellman_sweep, value_iteration, ActionEntry};

    #[test]
    fn aggregation_examples() {
        let (p, w) = value_based_aggregation(0.5, &[0.0, 0.3, 0.6, 1.0]).unwrap();
        assert_eq!(p.labels(), &[0, 0, 1, 1]);
        assert_eq!(w.0, vec![0.25, 0.75]);

        let (p, w) = value_based_aggregation(0.5, &[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(p.num_blocks(), 1);
        assert_eq!(w.0, vec![5.0]);

        let (p, w) = value_based_aggregation(0.5, &[0.0, 10.0]).unwrap();
        assert_eq!(p.labels(), &[0, 1]);
        assert_eq!(w.0, vec![0.25, 9.75]);

        assert!(value_based_aggregation(0.0, &[1.0]).is_err());
        assert!(value_based_aggregation(-1.0, &[1.0]).is_err());
        assert!(value_based_aggregation(0.5, &[]).is_err());
    }

    #[test]
    fn sparse_buckets_use_the_sort_path() {
        // 2e6 buckets for 3 states.
        let (p, w) = value_based_aggregation(1e-6, &[0.0, 2.0, 1.0]).unwrap();
        assert_eq!(p.labels(), &[0, 2, 1]);
        assert!((w[1] - 1.0).abs() <= 0.5e-6 + 1e-12);
    }

    #[test]
    fn lift_examples() {
        let v = lift(&Partition::single(3), &AggValues(vec![7.0])).unwrap();
        assert_eq!(&*v, &[7.0, 7.0, 7.0]);
        let v = lift(&Partition::identity(3), &AggValues(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(&*v, &[1.0, 2.0, 3.0]);
        assert!(lift(&Partition::identity(3), &AggValues(vec![1.0])).is_err());
    }

    #[test]
    fn unit_step_on_identity_is_a_bellman_sweep() {
        let m = MdpModel::new(
            0.8,
            vec![
                vec![ActionEntry::new(1.0, vec![(1, 0.5), (2, 0.5)]), ActionEntry::to(2, 2.0)],
                vec![ActionEntry::to(0, 0.5)],
                vec![ActionEntry::to(2, 0.0), ActionEntry::to(1, -0.5)],
            ],
        )
        .unwrap();
        let w = AggValues(vec![3.0, -1.0, 2.0]);
        let agg = aggregated_sweep(&m, &Partition::identity(3), &w, 1.0, StreamKey::new(1), 1).unwrap();
        let exact = bellman_sweep(&m, &w.0).unwrap();
        assert_eq!(agg.0, exact.into_inner());
    }

    #[test]
    fn tiny_step_leaves_values_in_place() {
        let m = chain(0.5);
        let w = AggValues(vec![0.7, 0.1]);
        let out = aggregated_sweep(&m, &Partition::identity(2), &w, 1e-12, StreamKey::new(3), 1).unwrap();
        assert!(linf(&out.0, &w.0) < 1e-9);
    }

    #[test]
    fn single_block_chain_both_branches() {
        // W' = 0.5·0 + 0.5·T_s(0): T_0 = 1, T_1 = 0.
        let m = chain(0.5);
        let p = Partition::single(2);
        let w = AggValues(vec![0.0]);
        let key = StreamKey::new(11);
        let mut seen = [false; 2];
        for round in 0..64 {
            let s = p.members(0)[key.index(round, 0, 2)];
            let out = aggregated_sweep(&m, &p, &w, 0.5, key, round).unwrap();
            let expected = if s == 0 { 0.5 } else { 0.0 };
            assert_eq!(out.0, vec![expected]);
            seen[s] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn rejects_bad_alpha() {
        let m = chain(0.5);
        let p = Partition::single(2);
        assert!(aggregated_sweep(&m, &p, &AggValues(vec![0.0]), 0.0, StreamKey::new(0), 0).is_err());
        assert!(aggregated_sweep(&m, &p, &AggValues(vec![0.0]), 1.5, StreamKey::new(0), 0).is_err());
    }

    #[test]
    fn rvia_unit_step_identity_matches_value_iteration() {
        let m = chain(0.5);
        let (w, trace) =
            rvia(&m, &Partition::identity(2), &StepSizeSchedule::Constant(1.0), 3, StreamKey::new(5)).unwrap();
        let vi = value_iteration(&m, &[0.0, 0.0], 3, 0.0).unwrap();
        assert_eq!(w.0, vi.values.into_inner());
        assert_eq!(trace.total_updates(), 6);

        let (w, trace) = rvia(&m, &Partition::single(2), &StepSizeSchedule::InverseSqrt, 0, StreamKey::new(5)).unwrap();
        assert_eq!(w.0, vec![0.0]);
        assert!(trace.is_empty());
    }

    #[test]
    fn fixed_point_examples() {
        // Two self-looping states with costs 1 and 3 in one block, γ = 0.5:
        // W = ½[(1 + W/2) + (3 + W/2)]  ⇒  W = 4.
        let m = MdpModel::new(0.5, vec![vec![ActionEntry::to(0, 1.0)], vec![ActionEntry::to(1, 3.0)]]).unwrap();
        let fp = aggregate_fixed_point(&m, &Partition::single(2), 1e-13, 10_000).unwrap();
        assert!(fp.converged);
        assert!((fp.w[0] - 4.0).abs() < 1e-11);

        let m = chain(0.5);
        let fp = aggregate_fixed_point(&m, &Partition::identity(2), 1e-13, 10_000).unwrap();
        assert_eq!(fp.w.0, vec![1.0, 0.0]);

        // Single block over the chain: W = ½[(1 + W/2) + W/2] ⇒ W = 1.
        let fp = aggregate_fixed_point(&m, &Partition::single(2), 1e-13, 10_000).unwrap();
        assert!((fp.w[0] - 1.0).abs() < 1e-11);

        let capped = aggregate_fixed_point(&m, &Partition::single(2), 1e-13, 3).unwrap();
        assert!(!capped.converged);
    }

    #[test]
    fn error_vector_examples() {
        assert_eq!(aggregation_error_vector(&Partition::identity(3), &[1.0, 5.0, 2.0]).unwrap(), vec![0.0; 3]);
        assert_eq!(aggregation_error_vector(&Partition::single(3), &[0.0, 3.0, 7.0]).unwrap(), vec![7.0]);
    }
}
