//! Discretized CartPole: continuous dynamics, equidistant binning, a tabular
//! model built from the binning, and policy rollouts scored by accumulated
//! reward.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AdaptiveSolver, AviaConfig, PhaseSchedule, StepSizeSchedule};
use crate::error::{Error, Result};
use crate::experiments::{summarize, Summary};
use crate::mdp::{bellman_sweep_into, greedy_policy, ActionEntry, MdpModel, Policy};
use crate::par::Execution;
use crate::rng::StreamKey;

/// Physical constants and episode limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    /// Integration step in seconds.
    pub dt: f64,
    /// Failure angle in radians.
    pub fail_angle: f64,
    pub fail_position: f64,
    pub max_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            fail_angle: 12.0_f64.to_radians(),
            fail_position: 2.4,
            max_steps: 200,
        }
    }
}

impl CartPoleParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be at least 1"));
        }
        let positive = [
            ("gravity", self.gravity),
            ("cart_mass", self.cart_mass),
            ("pole_mass", self.pole_mass),
            ("half_length", self.half_length),
            ("force", self.force),
            ("dt", self.dt),
            ("fail_angle", self.fail_angle),
            ("fail_position", self.fail_position),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::invalid(name, format!("{x} must be positive")));
            }
        }
        Ok(())
    }

    pub fn failed(&self, s: &ContState) -> bool {
        s.x.abs() > self.fail_position || s.theta.abs() > self.fail_angle
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl ContState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ContState { x: a[0], x_dot: a[1], theta: a[2], theta_dot: a[3] }
    }
}

impl std::ops::Neg for ContState {
    type Output = ContState;
    fn neg(self) -> ContState {
        ContState { x: -self.x, x_dot: -self.x_dot, theta: -self.theta, theta_dot: -self.theta_dot }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Push {
    Left = 0,
    Right = 1,
}

impl Push {
    pub const ALL: [Push; 2] = [Push::Left, Push::Right];
}

/// One explicit-Euler step of the cart-pole equations of motion.
pub fn cartpole_step(params: &CartPoleParams, s: &ContState, a: Push) -> (ContState, bool) {
    let force = match a {
        Push::Left => -params.force,
        Push::Right => params.force,
    };
    let total_mass = params.cart_mass + params.pole_mass;
    let pole_moment = params.pole_mass * params.half_length;
    let (sin, cos) = s.theta.sin_cos();
    let temp = (force + pole_moment * s.theta_dot * s.theta_dot * sin) / total_mass;
    let theta_acc = (params.gravity * sin - cos * temp)
        / (params.half_length * (4.0 / 3.0 - params.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
    let next = ContState {
        x: s.x + params.dt * s.x_dot,
        x_dot: s.x_dot + params.dt * x_acc,
        theta: s.theta + params.dt * s.theta_dot,
        theta_dot: s.theta_dot + params.dt * theta_acc,
    };
    (next, params.failed(&next))
}

/// One axis of an equidistant binning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.bins as f64
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|i| self.lo + i as f64 * self.width()).collect()
    }

    /// Bin of `x`, clamped to the edge bins outside `[lo, hi]`.
    pub fn bin(&self, x: f64) -> usize {
        let i = ((x - self.lo) / self.width()).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.bins - 1)
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }
}

/// Equidistant product binning plus one absorbing terminal bin (the last index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    axes: Vec<Axis>,
}

impl Discretization {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("bounds", "need at least one dimension"));
        }
        for a in &axes {
            if a.bins < 2 {
                return Err(Error::invalid("bins_per_dim", format!("{} is below 2", a.bins)));
            }
            if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
                return Err(Error::invalid("bounds", format!("[{}, {}] is not a finite increasing range", a.lo, a.hi)));
            }
        }
        Ok(Discretization { axes })
    }

    /// `bins_per_dim` bins on each of `bounds`.
    pub fn uniform(bounds: &[(f64, f64)], bins_per_dim: usize) -> Result<Self> {
        Self::new(bounds.iter().map(|&(lo, hi)| Axis { lo, hi, bins: bins_per_dim }).collect())
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Product bins, excluding the terminal bin.
    pub fn num_cells(&self) -> usize {
        self.axes.iter().map(|a| a.bins).product()
    }

    pub fn total_bins(&self) -> usize {
        self.num_cells() + 1
    }

    pub fn terminal(&self) -> usize {
        self.num_cells()
    }

    /// Product bin of a point (axis 0 varies fastest), clamping every axis.
    pub fn cell_of(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        let mut stride = 1;
        for (a, &xi) in self.axes.iter().zip(x) {
            idx += a.bin(xi) * stride;
            stride *= a.bins;
        }
        idx
    }

    pub fn center_of(&self, cell: usize) -> Vec<f64> {
        let mut rest = cell;
        self.axes
            .iter()
            .map(|a| {
                let i = rest % a.bins;
                rest /= a.bins;
                a.center(i)
            })
            .collect()
    }
}

/// Standard CartPole binning: position and angle span the failure thresholds,
/// velocities are clamped to `[−3, 3]` and `[−3.5, 3.5]`.
pub fn cartpole_discretization(params: &CartPoleParams, bins_per_dim: usize) -> Result<Discretization> {
    Discretization::uniform(
        &[
            (-params.fail_position, params.fail_position),
            (-3.0, 3.0),
            (-params.fail_angle, params.fail_angle),
            (-3.5, 3.5),
        ],
        bins_per_dim,
    )
}

/// Bin of a continuous state; failed states map to the terminal bin.
pub fn state_bin(params: &CartPoleParams, d: &Discretization, s: &ContState) -> usize {
    if params.failed(s) {
        d.terminal()
    } else {
        d.cell_of(&s.to_array())
    }
}

/// Tabular model over the bins built from bin centers: each (bin, push)
/// moves deterministically to the bin reached by one step from the center.
/// Each step costs −1 (reward 1 as a negative cost); the terminal bin is
/// absorbing at cost 0.
pub fn build_tabular_mdp(params: &CartPoleParams, d: &Discretization, gamma: f64) -> Result<MdpModel> {
    build_sampled_mdp(params, d, gamma, 1)
}

/// Like [`build_tabular_mdp`], but each bin is represented by a stratified
/// grid of `samples_per_axis^4` points (cell centers of an even subdivision
/// of the bin). A row holds the fraction of points landing in each bin, so
/// one sample per axis gives the bin-center model.
pub fn build_sampled_mdp(
    params: &CartPoleParams,
    d: &Discretization,
    gamma: f64,
    samples_per_axis: usize,
) -> Result<MdpModel> {
    params.validate()?;
    if d.axes().len() != 4 {
        return Err(Error::invalid("discretization", "CartPole needs four axes"));
    }
    if samples_per_axis == 0 {
        return Err(Error::invalid("samples_per_axis", "need at least one sample per axis"));
    }
    let m = samples_per_axis;
    let points = m.pow(4);
    let states: Vec<Vec<ActionEntry>> = Execution::default().map(d.total_bins(), |cell| {
        if cell == d.terminal() {
            return vec![ActionEntry::to(cell, 0.0)];
        }
        let lo: Vec<f64> = d.center_of(cell).iter().zip(d.axes()).map(|(c, a)| c - 0.5 * a.width()).collect();
        Push::ALL
            .iter()
            .map(|&a| {
                let mut dests: Vec<usize> = (0..points)
                    .map(|k| {
                        let mut rest = k;
                        let x: [f64; 4] = std::array::from_fn(|i| {
                            let j = rest % m;
                            rest /= m;
                            lo[i] + (j as f64 + 0.5) / m as f64 * d.axes()[i].width()
                        });
                        let (next, done) = cartpole_step(params, &ContState::from_array(x), a);
                        if done {
                            d.terminal()
                        } else {
                            d.cell_of(&next.to_array())
                        }
                    })
                    .collect();
                dests.sort_unstable();
                let mut counts: Vec<(usize, usize)> = Vec::new();
                for dest in dests {
                    match counts.last_mut() {
                        Some((last, c)) if *last == dest => *c += 1,
                        _ => counts.push((dest, 1)),
                    }
                }
                let transitions = counts.into_iter().map(|(dest, c)| (dest, c as f64 / points as f64)).collect();
                ActionEntry::new(-1.0, transitions)
            })
            .collect()
    });
    MdpModel::new(gamma, states)
}

/// Reward of one episode from `start`: +1 per step taken, stopping on failure
/// or at `max_steps`.
pub fn run_episode(params: &CartPoleParams, d: &Discretization, pi: &Policy, start: ContState) -> usize {
    let mut s = start;
    let mut reward = 0;
    while reward < params.max_steps && !params.failed(&s) {
        let a = if pi.action(state_bin(params, d, &s)) == 0 { Push::Left } else { Push::Right };
        s = cartpole_step(params, &s, a).0;
        reward += 1;
    }
    reward
}

/// Average reward of `pi` over `episodes` episodes started uniformly in
/// `[−0.05, 0.05]^4`. Episode `i` draws from its own substream of `stream`.
pub fn rollout_policy(
    params: &CartPoleParams,
    d: &Discretization,
    pi: &Policy,
    episodes: usize,
    stream: StreamKey,
) -> Result<Summary> {
    if episodes == 0 {
        return Err(Error::invalid("episodes", "need at least one episode"));
    }
    if pi.as_slice().len() != d.total_bins() {
        return Err(Error::LengthMismatch { left: pi.as_slice().len(), right: d.total_bins() });
    }
    let rewards = Execution::default().map_jobs(episodes, |i| {
        let mut rng = stream.child("episode", i as u64).rng();
        let mut draw = || rng.random_range(-0.05..=0.05);
        let start = ContState { x: draw(), x_dot: draw(), theta: draw(), theta_dot: draw() };
        run_episode(params, d, pi, start) as f64
    });
    summarize(&rewards)
}

/// Which solver produced a curve point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Plain synchronous value iteration.
    Vi,
    /// Adaptive aggregation.
    Agg,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Vi => "vi",
            Variant::Agg => "agg",
        })
    }
}

/// Benchmark settings. Fields missing from a JSON config take the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleBenchConfig {
    pub params: CartPoleParams,
    pub bins_per_dim: usize,
    /// Stratified samples per axis and bin when building the model.
    pub samples_per_axis: usize,
    pub gamma: f64,
    pub eps: f64,
    pub steps: StepSizeSchedule,
    /// Interval lengths of the aggregated variant.
    pub phases: PhaseSchedule,
    /// Value-iteration sweeps; the aggregated variant gets the same update budget.
    pub iters: usize,
    pub episodes: usize,
    /// Evaluate the greedy policy every this many iterations.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for CartPoleBenchConfig {
    fn default() -> Self {
        CartPoleBenchConfig {
            params: CartPoleParams::default(),
            bins_per_dim: 7,
            samples_per_axis: 3,
            gamma: 0.99,
            eps: 0.2,
            steps: StepSizeSchedule::InverseSqrt,
            phases: PhaseSchedule::constant(1, 5),
            iters: 100,
            episodes: 100,
            eval_every: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub variant: Variant,
    pub iter: usize,
    pub cum_updates: u64,
    pub mean_reward: f64,
    pub ci95: f64,
}

/// Reward-versus-updates curves of plain value iteration and the adaptive
/// solver on the tabulated CartPole, both started from zero. Every
/// evaluation rolls out the greedy policy of the current values on the same
/// episode starts.
pub fn run_cartpole_benchmark(cfg: &CartPoleBenchConfig) -> Result<Vec<CurvePoint>> {
    if cfg.iters == 0 {
        return Err(Error::invalid("iters", "need at least one iteration"));
    }
    if cfg.eval_every == 0 {
        return Err(Error::invalid("eval_every", "must be at least 1"));
    }
    let d = cartpole_discretization(&cfg.params, cfg.bins_per_dim)?;
    let model = build_sampled_mdp(&cfg.params, &d, cfg.gamma, cfg.samples_per_axis)?;
    let root = StreamKey::new(cfg.seed);
    let eval_stream = root.child("rollout", 0);
    let evaluate = |variant, iter, cum_updates, v: &[f64]| -> Result<CurvePoint> {
        let pi = greedy_policy(&model, v)?;
        let stats = rollout_policy(&cfg.params, &d, &pi, cfg.episodes, eval_stream)?;
        Ok(CurvePoint { variant, iter, cum_updates, mean_reward: stats.mean, ci95: stats.ci95 })
    };

    let n = model.num_states();
    let mut out = Vec::new();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut budget = 0;
    for t in 1..=cfg.iters {
        bellman_sweep_into(&model, &v, &mut next, Execution::default())?;
        std::mem::swap(&mut v, &mut next);
        budget += n as u64;
        if t % cfg.eval_every == 0 || t == cfg.iters {
            out.push(evaluate(Variant::Vi, t, budget, &v)?);
        }
    }

    let avia_cfg = AviaConfig::new(cfg.eps, cfg.phases.clone(), cfg.steps);
    let mut solver = AdaptiveSolver::new(&model, avia_cfg, root.child("avia", 0), None)?;
    while solver.cum_updates() < budget {
        let r = solver.step()?;
        if r.iter % cfg.eval_every == 0 || r.cum_updates >= budget {
            out.push(evaluate(Variant::Agg, r.iter, r.cum_updates, &solver.current_values())?);
        }
    }
    Ok(out)
}

/// Updates spent when a curve first reaches `threshold`.
pub fn updates_to_reward(points: &[CurvePoint], variant: Variant, threshold: f64) -> Option<u64> {
    points.iter().find(|p| p.variant == variant && p.mean_reward >= threshold).map(|p| p.cum_updates)
}

/// Final reward of a curve.
pub fn final_reward(points: &[CurvePoint], variant: Variant) -> Option<f64> {
    points.iter().rev().find(|p| p.variant == variant).map(|p| p.mean_reward)
}

/// Write curves as CSV with header `variant,cum_updates,mean_reward,ci95`.
pub fn write_curves_csv<W: std::io::Write>(points: &[CurvePoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "variant,cum_updates,mean_reward,ci95")?;
    for p in points {
        writeln!(w, "{},{},{},{}", p.variant, p.cum_updates, p.mean_reward, p.ci95)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::value_iteration;

    #[test]
    fn balanced_start_does_not_fail() {
        let p = CartPoleParams::default();
        let (s, done) = cartpole_step(&p, &ContState::from_array([0.0; 4]), Push::Right);
        assert!(!done);
        assert!(s.x_dot > 0.0);
        assert!(s.to_array().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn tilted_past_threshold_fails() {
        let p = CartPoleParams::default();
        let s = ContState { theta: 13.0_f64.to_radians(), ..ContState::from_array([0.0; 4]) };
        assert!(cartpole_step(&p, &s, Push::Left).1);
        assert!(cartpole_step(&p, &s, Push::Right).1);
    }

    #[test]
    fn dynamics_are_mirror_symmetric() {
        let p = CartPoleParams::default();
        let mut rng = StreamKey::new(17).rng();
        for _ in 0..200 {
            let s = ContState::from_array(std::array::from_fn(|_| rng.random_range(-0.5..0.5)));
            let (a, _) = cartpole_step(&p, &-s, Push::Left);
            let (b, _) = cartpole_step(&p, &s, Push::Right);
            let (a, b) = (a.to_array(), (-b).to_array());
            for k in 0..4 {
                assert!((a[k] - b[k]).abs() <= 1e-12 * (1.0 + b[k].abs()));
            }
        }
    }

    #[test]
    fn one_dimensional_binning() {
        let d = Discretization::uniform(&[(0.0, 1.0)], 4).unwrap();
        assert_eq!(d.axes()[0].edges(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(d.cell_of(&[0.6]), 2);
        assert_eq!(d.cell_of(&[-3.0]), 0);
        assert_eq!(d.cell_of(&[1.0]), 3);
        assert_eq!(d.cell_of(&[7.0]), 3);
        for cell in 0..4 {
            assert_eq!(d.cell_of(&d.center_of(cell)), cell);
        }
        assert!(Discretization::uniform(&[(0.0, 1.0)], 1).is_err());
        assert!(Discretization::uniform(&[(1.0, 0.0)], 3).is_err());
    }

    #[test]
    fn four_dims_seven_bins() {
        let p = CartPoleParams::default();
        let d = cartpole_discretization(&p, 7).unwrap();
        assert_eq!(d.total_bins(), 2402);
        for cell in (0..d.num_cells()).step_by(37) {
            assert_eq!(d.cell_of(&d.center_of(cell)), cell);
        }
    }

    #[test]
    fn tabular_model_shape() {
        let p = CartPoleParams::default();
        let d = cartpole_discretization(&p, 5).unwrap();
        let m = build_tabular_mdp(&p, &d, 0.99).unwrap();
        assert_eq!(m.num_states(), d.total_bins());
        let t = d.terminal();
        assert_eq!(m.num_actions(t), 1);
        assert_eq!(m.cost(t, 0), 0.0);
        for s in 0..m.num_states() {
            for a in 0..m.num_actions(s) {
                assert_eq!(m.transitions(s, a).count(), 1);
            }
        }
        let sol = value_iteration(&m, &vec![0.0; m.num_states()], 100_000, 1e-9).unwrap();
        assert!(sol.values.iter().all(|&v| (-100.0 - 1e-6..=0.0).contains(&v)));
    }

    #[test]
    fn rollout_bounds() {
        let p = CartPoleParams::default();
        let d = cartpole_discretization(&p, 5).unwrap();
        let m = build_tabular_mdp(&p, &d, 0.99).unwrap();
        let v = vec![0.0; m.num_states()];
        let pi = greedy_policy(&m, &v).unwrap();
        let failed = ContState { theta: 0.5, ..ContState::from_array([0.0; 4]) };
        assert_eq!(run_episode(&p, &d, &pi, failed), 0);
        let stats = rollout_policy(&p, &d, &pi, 20, StreamKey::new(1)).unwrap();
        assert!((0.0..=200.0).contains(&stats.mean));
        assert_eq!(stats, rollout_policy(&p, &d, &pi, 20, StreamKey::new(1)).unwrap());
    }

    #[test]
    fn sampled_model_rows_are_distributions() {
        let p = CartPoleParams::default();
        let d = cartpole_discretization(&p, 4).unwrap();
        let center = build_tabular_mdp(&p, &d, 0.99).unwrap();
        assert_eq!(build_sampled_mdp(&p, &d, 0.99, 1).unwrap(), center);
        let m = build_sampled_mdp(&p, &d, 0.99, 3).unwrap();
        for s in 0..d.num_cells() {
            for a in 0..2 {
                let total: f64 = m.transitions(s, a).map(|(_, q)| q).sum();
                assert!((total - 1.0).abs() < 1e-9);
                assert!(m.transitions(s, a).all(|(_, q)| (q * 81.0 - (q * 81.0).round()).abs() < 1e-9));
            }
        }
        assert!(build_sampled_mdp(&p, &d, 0.99, 0).is_err());
    }

    #[test]
    fn benchmark_curves_are_bounded_and_seeded() {
        let cfg = CartPoleBenchConfig { bins_per_dim: 4, samples_per_axis: 2, iters: 6, episodes: 10, ..Default::default() };
        let pts = run_cartpole_benchmark(&cfg).unwrap();
        assert!(pts.iter().all(|p| (0.0..=200.0).contains(&p.mean_reward) && p.ci95 >= 0.0));
        let vi: Vec<_> = pts.iter().filter(|p| p.variant == Variant::Vi).collect();
        assert_eq!(vi.len(), 6);
        assert_eq!(vi[5].cum_updates, 6 * 257);
        let agg = pts.iter().rfind(|p| p.variant == Variant::Agg).unwrap();
        assert!(agg.cum_updates >= 6 * 257);
        assert_eq!(pts, run_cartpole_benchmark(&cfg).unwrap());
        let mut csv = Vec::new();
        write_curves_csv(&pts, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("variant,cum_updates,mean_reward,ci95\nvi,257,"));
        assert_eq!(text.lines().count(), pts.len() + 1);
    }
}
