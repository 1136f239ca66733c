use super::{
    aggregated_sweep_into, step_size, value_based_aggregation, AggValues, Partition, Phase, PhaseSchedule,
    SolveTrace, StepSizeSchedule, TraceRecord,
};
use crate::error::{Error, Result};
use crate::mdp::{bellman_sweep_into, linf, MdpModel, ValueFunction};
use crate::par::Execution;
use crate::rng::StreamKey;

#[derive(Clone, Debug, PartialEq)]
pub struct AviaConfig {
    /// Bucket width for value-based aggregation.
    pub eps: f64,
    pub phases: PhaseSchedule,
    pub steps: StepSizeSchedule,
    pub exec: Execution,
}

impl AviaConfig {
    pub fn new(eps: f64, phases: PhaseSchedule, steps: StepSizeSchedule) -> Self {
        AviaConfig { eps, phases, steps, exec: Execution::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps", format!("{} must be positive", self.eps)));
        }
        self.phases.validate()?;
        self.steps.validate()
    }
}

/// Value iteration with adaptive aggregation, advanced one iteration at a time.
///
/// Iterations run through intervals `B_1, A_1, B_2, A_2, …`. A global
/// iteration is one synchronous Bellman sweep over all states; the first one
/// after an aggregated interval starts from the lifted aggregate values. The
/// first iteration of each aggregated interval re-partitions the latest global
/// vector and takes the bucket midpoints as the previous aggregate values;
/// every aggregated iteration is then one [`aggregated_sweep`] with the step
/// size at the aggregated-iteration counter, which is never reset.
///
/// [`aggregated_sweep`]: super::aggregated_sweep
pub struct AdaptiveSolver<'a> {
    model: &'a MdpModel,
    cfg: AviaConfig,
    stream: StreamKey,
    ground_truth: Option<&'a [f64]>,
    iter: usize,
    /// Next aggregated-iteration counter, starting at 1.
    t_sa: u64,
    phase: Phase,
    interval: usize,
    left_in_interval: usize,
    last_phase: Option<Phase>,
    v: Vec<f64>,
    v_next: Vec<f64>,
    partition: Option<Partition>,
    w: AggValues,
    w_next: AggValues,
    cum_updates: u64,
}

impl<'a> AdaptiveSolver<'a> {
    /// Start from the zero vector. `ground_truth`, when given, is used only to
    /// fill the error column of the trace.
    pub fn new(
        model: &'a MdpModel,
        cfg: AviaConfig,
        stream: StreamKey,
        ground_truth: Option<&'a [f64]>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = model.num_states();
        if let Some(gt) = ground_truth {
            if gt.len() != n {
                return Err(Error::LengthMismatch { left: gt.len(), right: n });
            }
        }
        let first = cfg.phases.global_len.get(0);
        Ok(AdaptiveSolver {
            model,
            cfg,
            stream,
            ground_truth,
            iter: 0,
            t_sa: 1,
            phase: Phase::Global,
            interval: 0,
            left_in_interval: first,
            last_phase: None,
            v: vec![0.0; n],
            v_next: vec![0.0; n],
            partition: None,
            w: AggValues::default(),
            w_next: AggValues::default(),
            cum_updates: 0,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iter
    }

    pub fn cum_updates(&self) -> u64 {
        self.cum_updates
    }

    /// Number of blocks of the current partition, if one has been formed.
    pub fn num_blocks(&self) -> Option<usize> {
        self.partition.as_ref().map(Partition::num_blocks)
    }

    pub fn partition(&self) -> Option<&Partition> {
        self.partition.as_ref()
    }

    /// Phase of the most recent iteration.
    pub fn last_phase(&self) -> Option<Phase> {
        self.last_phase
    }

    /// Move to the next nonempty interval if the current one is used up.
    fn advance_schedule(&mut self) {
        while self.left_in_interval == 0 {
            match self.phase {
                Phase::Global => {
                    self.phase = Phase::Aggregated;
                    self.left_in_interval = self.cfg.phases.agg_len.get(self.interval);
                }
                Phase::Aggregated => {
                    self.phase = Phase::Global;
                    self.interval += 1;
                    self.left_in_interval = self.cfg.phases.global_len.get(self.interval);
                }
            }
        }
    }

    /// Run one iteration and report it.
    pub fn step(&mut self) -> Result<TraceRecord> {
        self.advance_schedule();
        self.left_in_interval -= 1;
        self.iter += 1;
        let record = match self.phase {
            Phase::Global => self.global_step()?,
            Phase::Aggregated => self.aggregated_step()?,
        };
        self.last_phase = Some(self.phase);
        Ok(record)
    }

    fn global_step(&mut self) -> Result<TraceRecord> {
        if self.last_phase == Some(Phase::Aggregated) {
            let p = self.partition.as_ref().expect("aggregated phase formed a partition");
            for (s, x) in self.v.iter_mut().enumerate() {
                *x = self.w[p.block_of(s)];
            }
        }
        bellman_sweep_into(self.model, &self.v, &mut self.v_next, self.cfg.exec)?;
        let step_change = linf(&self.v, &self.v_next);
        std::mem::swap(&mut self.v, &mut self.v_next);
        let n = self.model.num_states();
        self.cum_updates += n as u64;
        Ok(TraceRecord {
            iter: self.iter,
            phase: Phase::Global,
            cum_updates: self.cum_updates,
            blocks: n,
            linf_error: self.ground_truth.map(|gt| linf(&self.v, gt)),
            sup_norm: self.v.iter().fold(0.0, |m, x| m.max(x.abs())),
            step_change,
            alpha: None,
        })
    }

    fn aggregated_step(&mut self) -> Result<TraceRecord> {
        if self.last_phase != Some(Phase::Aggregated) {
            let (p, w) = value_based_aggregation(self.cfg.eps, &self.v)?;
            self.partition = Some(p);
            self.w = w;
        }
        let p = self.partition.as_ref().expect("partition formed at interval entry");
        let alpha = step_size(&self.cfg.steps, self.t_sa);
        aggregated_sweep_into(self.model, p, &self.w, alpha, self.stream, self.t_sa, &mut self.w_next, self.cfg.exec)?;
        let step_change = linf(&self.w.0, &self.w_next.0);
        std::mem::swap(&mut self.w, &mut self.w_next);
        self.t_sa += 1;
        let k = p.num_blocks();
        self.cum_updates += k as u64;
        let linf_error = self.ground_truth.map(|gt| {
            gt.iter().enumerate().fold(0.0, |m: f64, (s, &x)| m.max((self.w[p.block_of(s)] - x).abs()))
        });
        Ok(TraceRecord {
            iter: self.iter,
            phase: Phase::Aggregated,
            cum_updates: self.cum_updates,
            blocks: k,
            linf_error,
            sup_norm: self.w.0.iter().fold(0.0, |m, x| m.max(x.abs())),
            step_change,
            alpha: Some(alpha),
        })
    }

    /// The current iterate `V_t`: the global vector, or the lifted aggregate
    /// values while inside an aggregated interval.
    pub fn current_values(&self) -> ValueFunction {
        match (self.last_phase, &self.partition) {
            (Some(Phase::Aggregated), Some(p)) => p.labels().iter().map(|&j| self.w[j]).collect::<Vec<_>>().into(),
            _ => self.v.clone().into(),
        }
    }
}

/// Run [`AdaptiveSolver`] for `n` iterations from zero and return the final
/// iterate with the full trace.
pub fn avia(
    model: &MdpModel,
    cfg: &AviaConfig,
    n: usize,
    stream: StreamKey,
    ground_truth: Option<&[f64]>,
) -> Result<(ValueFunction, SolveTrace)> {
    if n == 0 {
        return Err(Error::invalid("iters", "need at least one iteration"));
    }
    let mut solver = AdaptiveSolver::new(model, cfg.clone(), stream, ground_truth)?;
    let mut trace = SolveTrace { records: Vec::with_capacity(n) };
    for _ in 0..n {
        trace.push(solver.step()?);
    }
    Ok((solver.current_values(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::aggregate_fixed_point;
    use crate::mdp::fixtures::chain;
    use crate::mdp::value_iteration;

    #[test]
    fn empty_aggregated_intervals_reduce_to_value_iteration() {
        let m = chain(0.5);
        let cfg = AviaConfig::new(0.5, PhaseSchedule::constant(2, 0), StepSizeSchedule::InverseSqrt);
        let (v, trace) = avia(&m, &cfg, 7, StreamKey::new(1), None).unwrap();
        let vi = value_iteration(&m, &[0.0, 0.0], 7, 0.0).unwrap();
        assert_eq!(v, vi.values);
        assert!(trace.records.iter().all(|r| r.phase == Phase::Global));
        assert_eq!(trace.total_updates(), 14);
    }

    #[test]
    fn phase_pattern_and_update_accounting() {
        let m = chain(0.5);
        let cfg = AviaConfig::new(0.1, PhaseSchedule::constant(2, 3), StepSizeSchedule::InverseSqrt);
        let (_, trace) = avia(&m, &cfg, 11, StreamKey::new(1), None).unwrap();
        let phases: String = trace
            .records
            .iter()
            .map(|r| if r.phase == Phase::Global { 'B' } else { 'A' })
            .collect();
        assert_eq!(phases, "BBAAABBAAAB");
        let mut expect = 0;
        for r in &trace.records {
            expect += r.blocks as u64;
            assert_eq!(r.cum_updates, expect);
        }
        // t_sa runs 1..=6 across both aggregated intervals.
        let alphas: Vec<f64> = trace.records.iter().filter_map(|r| r.alpha).collect();
        let expected: Vec<f64> = (1..=6).map(|t| 1.0 / (t as f64).sqrt()).collect();
        assert_eq!(alphas, expected);
    }

    #[test]
    fn sequence_schedules_are_followed() {
        let m = chain(0.5);
        let phases = PhaseSchedule { global_len: Lengths::Sequence(vec![1, 3]), agg_len: Lengths::Sequence(vec![2, 0, 1]) };
        let cfg = AviaConfig::new(0.1, phases, StepSizeSchedule::InverseSqrt);
        let (_, trace) = avia(&m, &cfg, 12, StreamKey::new(1), None).unwrap();
        let phases: String = trace
            .records
            .iter()
            .map(|r| if r.phase == Phase::Global { 'B' } else { 'A' })
            .collect();
        assert_eq!(phases, "BAABBBBBBABB");
    }

    use crate::aggregation::Lengths;

    #[test]
    fn coarse_eps_collapses_to_one_block() {
        // After two global sweeps V = (1, 0); with eps = 10 both states share
        // one block and the aggregated values head for the single-block fixed point.
        let m = chain(0.5);
        let cfg = AviaConfig::new(10.0, PhaseSchedule::constant(2, 5), StepSizeSchedule::InverseSqrt);
        let mut solver = AdaptiveSolver::new(&m, cfg, StreamKey::new(9), None).unwrap();
        for _ in 0..3 {
            solver.step().unwrap();
        }
        assert_eq!(solver.num_blocks(), Some(1));
        let (v, _) = avia(
            &m,
            &AviaConfig::new(10.0, PhaseSchedule::constant(2, 5), StepSizeSchedule::InverseSqrt),
            700,
            StreamKey::new(9),
            None,
        )
        .unwrap();
        let fp = aggregate_fixed_point(&m, &Partition::single(2), 1e-12, 10_000).unwrap();
        let v_star = [1.0, 0.0];
        let bound = 2.0 * 10.0 / (1.0 - 0.5);
        assert!(linf(&v, &v_star) <= bound);
        // The last iteration (700 = 100·7) is aggregated, so the result is piecewise constant.
        assert_eq!(v[0], v[1]);
        // Re-aggregation restarts above W* (at b1 + 5), and the damped updates
        // only drift down toward it.
        assert!(v[0] > fp.w[0]);
    }

    #[test]
    fn serial_and_parallel_runs_agree() {
        let m = chain(0.9);
        let mut cfg = AviaConfig::new(0.05, PhaseSchedule::constant(2, 5), StepSizeSchedule::InverseSqrt);
        cfg.exec = Execution::Serial;
        let (a, ta) = avia(&m, &cfg, 50, StreamKey::new(4), Some(&[1.0, 0.0])).unwrap();
        cfg.exec = Execution::Parallel;
        let (b, tb) = avia(&m, &cfg, 50, StreamKey::new(4), Some(&[1.0, 0.0])).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
    }

    #[test]
    fn rejects_bad_config() {
        let m = chain(0.5);
        let bad = AviaConfig::new(0.0, PhaseSchedule::constant(2, 5), StepSizeSchedule::InverseSqrt);
        assert!(avia(&m, &bad, 5, StreamKey::new(0), None).is_err());
        let ok = AviaConfig::new(0.5, PhaseSchedule::constant(2, 5), StepSizeSchedule::InverseSqrt);
        assert!(avia(&m, &ok, 0, StreamKey::new(0), None).is_err());
        assert!(avia(&m, &ok, 3, StreamKey::new(0), Some(&[0.0])).is_err());
    }
}
