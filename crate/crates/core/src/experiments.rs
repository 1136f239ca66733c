//! Seeded experiment runners: ε sweeps, efficiency curves against plain
//! value iteration, scaling over grid sizes and robustness to slip and cost
//! noise. Every repetition draws from `derive_seed(master, experiment, rep)`,
//! repetitions run as parallel jobs, and rows come out in a fixed order, so
//! identical configurations give identical CSV bytes.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::aggregation::{avia, AviaConfig, PhaseSchedule, StepSizeSchedule};
use crate::envs::{Grid, MazeInstance, MazeKind, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::mdp::{bellman_sweep_into, linf};
use crate::par::Execution;
use crate::rng::{derive_seed, StreamKey};

/// Grid sizes of the scaling experiment under `--full`.
pub const FULL_SIZES: [[usize; 2]; 5] = [[100, 100], [200, 200], [300, 300], [500, 500], [1000, 1000]];
/// Grid used by the other experiments under `--full`.
pub const FULL_DIMS: [usize; 2] = [500, 500];

/// Parameters shared by all experiment families. Fields missing from a JSON
/// config take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub gamma: f64,
    pub eps: f64,
    /// Bucket widths for `sweep-eps`.
    pub eps_list: Vec<f64>,
    pub global_len: usize,
    pub agg_len: usize,
    pub alpha: StepSizeSchedule,
    pub iters: usize,
    pub reps: usize,
    pub kinds: Vec<MazeKind>,
    pub dims: Vec<usize>,
    /// Grid sizes for `scaling`.
    pub sizes: Vec<Vec<usize>>,
    pub p: f64,
    pub p_list: Vec<f64>,
    pub sigma: f64,
    pub sigma_list: Vec<f64>,
    /// Error level for the updates-to-threshold statistic of `efficiency`.
    pub threshold: f64,
    /// Reuse the instance of repetition 0 for every repetition.
    pub fixed_instance: bool,
    /// Large grids instead of the desk-scale defaults.
    pub full: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            gamma: DEFAULT_GAMMA,
            eps: 0.5,
            eps_list: vec![0.05, 0.1, 0.5],
            global_len: 2,
            agg_len: 5,
            alpha: StepSizeSchedule::InverseSqrt,
            iters: 1000,
            reps: 20,
            kinds: MazeKind::ALL.to_vec(),
            dims: vec![100, 100],
            sizes: vec![vec![50, 50], vec![100, 100], vec![200, 200]],
            p: 0.95,
            p_list: vec![0.92, 0.95, 0.98],
            sigma: 0.0,
            sigma_list: vec![0.0, 0.01, 0.05, 0.1],
            threshold: 10.0,
            fixed_instance: false,
            full: false,
        }
    }
}

fn positive(name: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{x} must be positive")))
    }
}

fn nonempty<T>(name: &'static str, xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        Err(Error::invalid(name, "list is empty"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::BadDiscount(self.gamma));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps", "need at least one repetition"));
        }
        if self.iters == 0 {
            return Err(Error::invalid("iters", "need at least one iteration"));
        }
        positive("eps", self.eps)?;
        positive("threshold", self.threshold)?;
        nonempty("eps_list", &self.eps_list)?;
        for &e in &self.eps_list {
            positive("eps_list", e)?;
        }
        nonempty("kinds", &self.kinds)?;
        nonempty("sizes", &self.sizes)?;
        nonempty("p_list", &self.p_list)?;
        nonempty("sigma_list", &self.sigma_list)?;
        for &p in self.p_list.iter().chain([&self.p]) {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid("p", format!("{p} is not in (0, 1]")));
            }
        }
        for &s in self.sigma_list.iter().chain([&self.sigma]) {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid("sigma", format!("{s} must be nonnegative")));
            }
        }
        Grid::new(&self.dims)?;
        for d in &self.sizes {
            Grid::new(d)?;
        }
        self.phases().validate()?;
        self.alpha.validate()
    }

    pub fn phases(&self) -> PhaseSchedule {
        PhaseSchedule::constant(self.global_len, self.agg_len)
    }

    pub fn avia_config(&self, eps: f64) -> AviaConfig {
        AviaConfig::new(eps, self.phases(), self.alpha)
    }

    /// Grid of the single-size experiments.
    pub fn grid_dims(&self) -> Vec<usize> {
        if self.full {
            FULL_DIMS.to_vec()
        } else {
            self.dims.clone()
        }
    }

    /// Grid sizes of the scaling experiment.
    pub fn scaling_sizes(&self) -> Vec<Vec<usize>> {
        if self.full {
            FULL_SIZES.iter().map(|d| d.to_vec()).collect()
        } else {
            self.sizes.clone()
        }
    }

    /// Instance seed and solver stream of repetition `rep`.
    pub fn rep_streams(&self, experiment: &str, rep: usize) -> (u64, StreamKey) {
        let key = StreamKey::new(derive_seed(self.seed, experiment, rep as u64));
        let inst_rep = if self.fixed_instance { 0 } else { rep };
        let inst = StreamKey::new(derive_seed(self.seed, experiment, inst_rep as u64)).child("instance", 0);
        (inst.seed(), key.child("solver", 0))
    }
}

/// Outcome of one solver run on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub rep: usize,
    /// Instance seed.
    pub seed: u64,
    pub final_error: f64,
    pub cum_updates: u64,
    pub max_blocks: usize,
    pub wall_secs: f64,
}

/// Mean with a normal-approximation 95% half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

/// Mean and `1.96·sd/√n` with the sample standard deviation; a single value
/// has half-width 0.
pub fn summarize(xs: &[f64]) -> Result<Summary> {
    if xs.is_empty() {
        return Err(Error::invalid("records", "nothing to summarize"));
    }
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Summary { mean, ci95: 0.0, n });
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(Summary { mean, ci95: 1.96 * var.sqrt() / (n as f64).sqrt(), n })
}

/// One summary line of the error tables.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub kind: MazeKind,
    pub dims: Vec<usize>,
    pub p: f64,
    pub sigma: f64,
    pub eps: f64,
    pub mean_error: f64,
    pub ci95: f64,
    pub reps: usize,
}

impl SummaryRow {
    fn from_records(kind: MazeKind, dims: &[usize], p: f64, sigma: f64, eps: f64, runs: &[RunRecord]) -> Result<Self> {
        let errors: Vec<f64> = runs.iter().map(|r| r.final_error).collect();
        let s = summarize(&errors)?;
        Ok(SummaryRow { kind, dims: dims.to_vec(), p, sigma, eps, mean_error: s.mean, ci95: s.ci95, reps: s.n })
    }
}

pub fn format_dims(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub const SUMMARY_HEADER: &str = "type,dims,p,sigma,eps,mean_error,ci95,reps";

pub fn write_summary_row<W: Write>(mut w: W, r: &SummaryRow) -> std::io::Result<()> {
    writeln!(w, "{},{},{},{},{},{},{},{}", r.kind, format_dims(&r.dims), r.p, r.sigma, r.eps, r.mean_error, r.ci95, r.reps)
}

pub fn write_summary_csv<W: Write>(mut w: W, rows: &[SummaryRow]) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        write_summary_row(&mut w, r)?;
    }
    w.flush()
}

/// Run the adaptive solver for `cfg.iters` iterations and score the result
/// against the instance's noiseless optimum.
pub fn solve_instance(inst: &MazeInstance, cfg: &ExperimentConfig, eps: f64, rep: usize, stream: StreamKey) -> Result<RunRecord> {
    let start = Instant::now();
    let (v, trace) = avia(&inst.model, &cfg.avia_config(eps), cfg.iters, stream, None)?;
    Ok(RunRecord {
        rep,
        seed: inst.meta.seed,
        final_error: linf(&v, &inst.v_star),
        cum_updates: trace.total_updates(),
        max_blocks: trace.records.iter().filter(|r| r.alpha.is_some()).map(|r| r.blocks).max().unwrap_or(0),
        wall_secs: start.elapsed().as_secs_f64(),
    })
}

/// Run `reps` jobs in parallel, each returning one record per setting, and
/// regroup the records by setting.
fn by_setting<F>(reps: usize, settings: usize, job: F) -> Result<Vec<Vec<RunRecord>>>
where
    F: Fn(usize) -> Result<Vec<RunRecord>> + Sync + Send,
{
    let results = Execution::default().map_jobs(reps, job);
    let mut grouped = vec![Vec::with_capacity(reps); settings];
    for rep in results {
        for (k, r) in rep?.into_iter().enumerate() {
            grouped[k].push(r);
        }
    }
    Ok(grouped)
}

/// Final error per ε on fresh instances. Each repetition solves one instance
/// for every ε; `sink` receives one row per (kind, ε).
pub fn run_eps_sweep(cfg: &ExperimentConfig, sink: &mut dyn FnMut(SummaryRow) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let dims = cfg.grid_dims();
    for &kind in &cfg.kinds {
        let grouped = by_setting(cfg.reps, cfg.eps_list.len(), |rep| {
            let (seed, stream) = cfg.rep_streams("sweep-eps", rep);
            let inst = kind.generate(&dims, cfg.p, cfg.sigma, cfg.gamma, seed)?;
            cfg.eps_list.iter().map(|&eps| solve_instance(&inst, cfg, eps, rep, stream)).collect()
        })?;
        for (&eps, runs) in cfg.eps_list.iter().zip(&grouped) {
            sink(SummaryRow::from_records(kind, &dims, cfg.p, cfg.sigma, eps, runs)?)?;
        }
    }
    Ok(())
}

/// Final error per grid size.
pub fn run_scaling(cfg: &ExperimentConfig, sink: &mut dyn FnMut(SummaryRow) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    for &kind in &cfg.kinds {
        for dims in cfg.scaling_sizes() {
            let label = format!("scaling/{}", format_dims(&dims));
            let grouped = by_setting(cfg.reps, 1, |rep| {
                let (seed, stream) = cfg.rep_streams(&label, rep);
                let inst = kind.generate(&dims, cfg.p, cfg.sigma, cfg.gamma, seed)?;
                Ok(vec![solve_instance(&inst, cfg, cfg.eps, rep, stream)?])
            })?;
            sink(SummaryRow::from_records(kind, &dims, cfg.p, cfg.sigma, cfg.eps, &grouped[0])?)?;
        }
    }
    Ok(())
}

/// Final error over the (p, σ) grid, scored against the noiseless optimum.
/// Within a repetition every σ perturbs the same base instance with the same
/// standard-normal draws, scaled by σ.
pub fn run_robustness(cfg: &ExperimentConfig, sink: &mut dyn FnMut(SummaryRow) -> Result<()>) -> Result<()> {
    cfg.validate()?;
    let dims = cfg.grid_dims();
    for &kind in &cfg.kinds {
        for &p in &cfg.p_list {
            let grouped = by_setting(cfg.reps, cfg.sigma_list.len(), |rep| {
                let (seed, stream) = cfg.rep_streams("robustness", rep);
                let base = kind.generate(&dims, p, 0.0, cfg.gamma, seed)?;
                cfg.sigma_list
                    .iter()
                    .map(|&sigma| solve_instance(&base.with_noise(sigma)?, cfg, cfg.eps, rep, stream))
                    .collect()
            })?;
            for (&sigma, runs) in cfg.sigma_list.iter().zip(&grouped) {
                sink(SummaryRow::from_records(kind, &dims, p, sigma, cfg.eps, runs)?)?;
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    Vi,
    Avia,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Vi => "vi",
            Solver::Avia => "avia",
        })
    }
}

/// Error after each iteration of one solver on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCurve {
    /// `(cumulative updates, error)` per iteration.
    pub points: Vec<(u64, f64)>,
}

impl ErrorCurve {
    /// Updates spent when the error first drops to `threshold`.
    pub fn updates_to(&self, threshold: f64) -> Option<u64> {
        self.points.iter().find(|p| p.1 <= threshold).map(|p| p.0)
    }
}

/// Paired efficiency run: both solvers on the same instance.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyRun {
    pub kind: MazeKind,
    pub rep: usize,
    pub seed: u64,
    pub vi: ErrorCurve,
    pub avia: ErrorCurve,
}

/// Mean curve point across repetitions at one iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub kind: MazeKind,
    pub solver: Solver,
    pub iter: usize,
    pub mean_updates: f64,
    pub mean_error: f64,
    pub ci95: f64,
    pub reps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyResult {
    pub runs: Vec<EfficiencyRun>,
    pub curves: Vec<CurveRow>,
}

/// Plain value iteration from zero for `iters` sweeps, recording the error
/// after each sweep.
pub fn vi_error_curve(inst: &MazeInstance, iters: usize) -> Result<ErrorCurve> {
    let n = inst.model.num_states();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut points = Vec::with_capacity(iters);
    for t in 1..=iters {
        bellman_sweep_into(&inst.model, &v, &mut next, Execution::default())?;
        std::mem::swap(&mut v, &mut next);
        points.push(((t * n) as u64, linf(&v, &inst.v_star)));
    }
    Ok(ErrorCurve { points })
}

pub fn avia_error_curve(inst: &MazeInstance, cfg: &AviaConfig, iters: usize, stream: StreamKey) -> Result<ErrorCurve> {
    let (_, trace) = avia(&inst.model, cfg, iters, stream, Some(&inst.v_star))?;
    let points = trace
        .records
        .iter()
        .map(|r| (r.cum_updates, r.linf_error.expect("ground truth supplied")))
        .collect();
    Ok(ErrorCurve { points })
}

fn mean_curve(kind: MazeKind, solver: Solver, curves: &[&ErrorCurve]) -> Result<Vec<CurveRow>> {
    let len = curves[0].points.len();
    (0..len)
        .map(|i| {
            let updates: Vec<f64> = curves.iter().map(|c| c.points[i].0 as f64).collect();
            let errors: Vec<f64> = curves.iter().map(|c| c.points[i].1).collect();
            let e = summarize(&errors)?;
            Ok(CurveRow {
                kind,
                solver,
                iter: i + 1,
                mean_updates: summarize(&updates)?.mean,
                mean_error: e.mean,
                ci95: e.ci95,
                reps: e.n,
            })
        })
        .collect()
}

/// Error-versus-updates curves of plain value iteration and the adaptive
/// solver on identical instances, checkpointed every iteration.
pub fn run_efficiency(cfg: &ExperimentConfig) -> Result<EfficiencyResult> {
    cfg.validate()?;
    let dims = cfg.grid_dims();
    let mut runs = Vec::new();
    let mut curves = Vec::new();
    for &kind in &cfg.kinds {
        let kind_runs = Execution::default()
            .map_jobs(cfg.reps, |rep| {
                let (seed, stream) = cfg.rep_streams("efficiency", rep);
                let inst = kind.generate(&dims, cfg.p, cfg.sigma, cfg.gamma, seed)?;
                Ok(EfficiencyRun {
                    kind,
                    rep,
                    seed,
                    vi: vi_error_curve(&inst, cfg.iters)?,
                    avia: avia_error_curve(&inst, &cfg.avia_config(cfg.eps), cfg.iters, stream)?,
                })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        curves.extend(mean_curve(kind, Solver::Vi, &kind_runs.iter().map(|r| &r.vi).collect::<Vec<_>>())?);
        curves.extend(mean_curve(kind, Solver::Avia, &kind_runs.iter().map(|r| &r.avia).collect::<Vec<_>>())?);
        runs.extend(kind_runs);
    }
    Ok(EfficiencyResult { runs, curves })
}

pub fn write_curves_csv<W: Write>(mut w: W, rows: &[CurveRow]) -> std::io::Result<()> {
    writeln!(w, "type,solver,iter,mean_cum_updates,mean_error,ci95,reps")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{},{},{}", r.kind, r.solver, r.iter, r.mean_updates, r.mean_error, r.ci95, r.reps)?;
    }
    w.flush()
}

/// Per-run updates needed to reach `threshold`; blank when never reached.
pub fn write_threshold_csv<W: Write>(mut w: W, runs: &[EfficiencyRun], threshold: f64) -> std::io::Result<()> {
    let cell = |x: Option<u64>| x.map(|u| u.to_string()).unwrap_or_default();
    writeln!(w, "type,rep,seed,threshold,vi_updates,avia_updates")?;
    for r in runs {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.kind,
            r.rep,
            r.seed,
            threshold,
            cell(r.vi.updates_to(threshold)),
            cell(r.avia.updates_to(threshold))
        )?;
    }
    w.flush()
}
