use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggvi::aggregation::{avia, AviaConfig, PhaseSchedule, StepSizeSchedule};
use aggvi::cartpole::{run_cartpole_benchmark, write_curves_csv as write_cartpole_csv, CartPoleBenchConfig};
use aggvi::envs::{ground_truth, MazeKind};
use aggvi::experiments::{
    run_efficiency, run_eps_sweep, run_robustness, run_scaling, write_curves_csv, write_summary_row,
    write_threshold_csv, ExperimentConfig, SummaryRow, SUMMARY_HEADER,
};
use aggvi::io::{load_model, write_model};
use aggvi::mdp::linf_distance;
use aggvi::StreamKey;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Value iteration with adaptive state aggregation: solvers, benchmark
/// generators and the seeded experiment suite.
///
/// Defaults: γ=0.95, ε=0.5, |A|=5 aggregated and |B|=2 global iterations per
/// cycle, α=invsqrt, 1000 iterations, 20 repetitions, on 100x100 grids
/// (500x500 and up with --full). The cartpole command uses its own defaults
/// (γ=0.99, ε=0.2, |B|=1, |A|=5).
#[derive(Parser, Debug)]
#[command(name = "aggvi", version, about, long_about)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct GlobalOpts {
    /// Master seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Discount factor [default: 0.95; cartpole 0.99]
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Aggregation bucket width ε [default: 0.5; cartpole 0.2]
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Aggregated iterations per cycle, |A| [default: 5]
    #[arg(long, global = true)]
    agg_len: Option<usize>,
    /// Global sweeps per cycle, |B| [default: 2; cartpole 1]
    #[arg(long, global = true)]
    global_len: Option<usize>,
    /// Step-size rule: const:C, invsqrt or poly:B [default: invsqrt]
    #[arg(long, global = true)]
    alpha: Option<StepSizeSchedule>,
    /// Iterations per run [default: 1000; cartpole 100 VI sweeps]
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Repetitions per setting [default: 20]
    #[arg(long, global = true)]
    reps: Option<usize>,
    /// Output file (CSV, or JSON for gen-maze); stdout when omitted
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Large grids (500x500; scaling up to 1000x1000)
    #[arg(long, global = true)]
    full: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a model in the JSON interchange format and write the trace CSV
    Solve(SolveArgs),
    /// Generate a maze model (JSON) with a `.meta.json` sidecar
    GenMaze(GenMazeArgs),
    /// Final error as a function of ε
    SweepEps(SweepEpsArgs),
    /// Error-versus-updates curves against plain value iteration
    Efficiency(EfficiencyArgs),
    /// Final error across grid sizes
    Scaling(ScalingArgs),
    /// Final error across slip probabilities and cost-noise levels
    Robustness(RobustnessArgs),
    /// Reward-versus-updates curves on the discretized CartPole
    Cartpole(CartpoleArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Avia,
    Vi,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "avia")]
    method: Method,
    /// Fill the linf_error column against the optimum (computed by value iteration)
    #[arg(long)]
    with_error: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Standard,
    Terrain,
    Both,
}

impl KindArg {
    fn kinds(self) -> Vec<MazeKind> {
        match self {
            KindArg::Standard => vec![MazeKind::Standard],
            KindArg::Terrain => vec![MazeKind::Terrain],
            KindArg::Both => MazeKind::ALL.to_vec(),
        }
    }
}

#[derive(Args, Debug)]
struct GenMazeArgs {
    #[arg(long, value_enum, default_value = "standard")]
    kind: KindArg,
    /// Grid size, e.g. 100x100 or 20x20x20
    #[arg(long, default_value = "100x100", value_parser = parse_dims)]
    dims: Dims,
    /// Probability of moving in the intended direction
    #[arg(long, default_value_t = 0.95)]
    p: f64,
    /// Standard deviation of the cost noise
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
}

#[derive(Args, Debug, Default)]
struct MazeOpts {
    /// Maze kinds to run [default: both]
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Grid size, e.g. 100x100 [default: 100x100]
    #[arg(long, value_parser = parse_dims)]
    dims: Option<Dims>,
    /// Intended-move probability [default: 0.95]
    #[arg(long)]
    p: Option<f64>,
    /// Cost-noise standard deviation [default: 0]
    #[arg(long)]
    sigma: Option<f64>,
    /// Reuse one instance for every repetition
    #[arg(long)]
    fixed_instance: bool,
}

#[derive(Args, Debug)]
struct SweepEpsArgs {
    #[command(flatten)]
    maze: MazeOpts,
    /// Comma-separated ε values [default: 0.05,0.1,0.5]
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct EfficiencyArgs {
    #[command(flatten)]
    maze: MazeOpts,
    /// Error level for the per-run updates-to-threshold file [default: 10]
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[command(flatten)]
    maze: MazeOpts,
    /// Comma-separated grid sizes [default: 50x50,100x100,200x200]
    #[arg(long, value_delimiter = ',', value_parser = parse_dims)]
    sizes: Option<Vec<Dims>>,
}

#[derive(Args, Debug)]
struct RobustnessArgs {
    #[command(flatten)]
    maze: MazeOpts,
    /// Comma-separated intended-move probabilities [default: 0.92,0.95,0.98]
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<f64>>,
    /// Comma-separated noise levels [default: 0,0.01,0.05,0.1]
    #[arg(long, value_delimiter = ',')]
    sigma_list: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct CartpoleArgs {
    /// Bins per state dimension (four dimensions plus one terminal bin) [default: 7]
    #[arg(long)]
    bins_per_dim: Option<usize>,
    /// Stratified samples per axis used to tabulate each bin [default: 3]
    #[arg(long)]
    samples_per_axis: Option<usize>,
    /// Rollout episodes per evaluation [default: 100]
    #[arg(long)]
    episodes: Option<usize>,
    /// Evaluate the greedy policy every this many iterations [default: 1]
    #[arg(long)]
    eval_every: Option<usize>,
}

/// Grid size given as `100x100`.
#[derive(Clone, Debug)]
struct Dims(Vec<usize>);

fn parse_dims(s: &str) -> Result<Dims, String> {
    s.split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad grid size {s:?} (expected e.g. 100x100)")))
        .collect::<Result<_, _>>()
        .map(Dims)
}

type AnyResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> AnyResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()).into())
        }
    }
}

fn open_out(path: Option<&Path>) -> AnyResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

/// `dir/name.csv` → `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn experiment_config(g: &GlobalOpts, m: &MazeOpts) -> AnyResult<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_config(g.config.as_deref())?;
    if let Some(x) = g.seed {
        cfg.seed = x;
    }
    if let Some(x) = g.gamma {
        cfg.gamma = x;
    }
    if let Some(x) = g.epsilon {
        cfg.eps = x;
    }
    if let Some(x) = g.agg_len {
        cfg.agg_len = x;
    }
    if let Some(x) = g.global_len {
        cfg.global_len = x;
    }
    if let Some(x) = g.alpha {
        cfg.alpha = x;
    }
    if let Some(x) = g.iters {
        cfg.iters = x;
    }
    if let Some(x) = g.reps {
        cfg.reps = x;
    }
    cfg.full |= g.full;
    if let Some(k) = m.kind {
        cfg.kinds = k.kinds();
    }
    if let Some(d) = &m.dims {
        cfg.dims = d.0.clone();
    }
    if let Some(x) = m.p {
        cfg.p = x;
    }
    if let Some(x) = m.sigma {
        cfg.sigma = x;
    }
    cfg.fixed_instance |= m.fixed_instance;
    cfg.validate()?;
    Ok(cfg)
}

/// Stream summary rows, flushing after each so partial results survive a failure.
fn run_summary<F>(g: &GlobalOpts, cfg: &ExperimentConfig, run: F) -> AnyResult<()>
where
    F: FnOnce(&ExperimentConfig, &mut dyn FnMut(SummaryRow) -> aggvi::Result<()>) -> aggvi::Result<()>,
{
    let mut out = open_out(g.out.as_deref())?;
    writeln!(out, "{SUMMARY_HEADER}")?;
    out.flush()?;
    let mut sink = |row: SummaryRow| -> aggvi::Result<()> {
        write_summary_row(&mut out, &row)?;
        out.flush()?;
        Ok(())
    };
    run(cfg, &mut sink)?;
    Ok(())
}

fn solve(g: &GlobalOpts, a: &SolveArgs) -> AnyResult<()> {
    let model = load_model(&a.model)?;
    let defaults = ExperimentConfig::default();
    let truth = if a.with_error { Some(ground_truth(&model)?) } else { None };
    let iters = g.iters.unwrap_or(defaults.iters);
    let stream = StreamKey::new(g.seed.unwrap_or(defaults.seed));
    let (values, trace) = match a.method {
        Method::Avia => {
            let cfg = AviaConfig::new(
                g.epsilon.unwrap_or(defaults.eps),
                PhaseSchedule::constant(g.global_len.unwrap_or(defaults.global_len), g.agg_len.unwrap_or(defaults.agg_len)),
                g.alpha.unwrap_or(defaults.alpha),
            );
            avia(&model, &cfg, iters, stream, truth.as_deref())?
        }
        // Plain value iteration is the adaptive solver with empty aggregated intervals.
        Method::Vi => {
            let cfg = AviaConfig::new(1.0, PhaseSchedule::constant(1, 0), StepSizeSchedule::InverseSqrt);
            avia(&model, &cfg, iters, stream, truth.as_deref())?
        }
    };
    let out = open_out(g.out.as_deref())?;
    trace.write_csv(out)?;
    let mut msg = format!("{} iterations, {} updates", trace.len(), trace.total_updates());
    if let Some(t) = &truth {
        msg += &format!(", final error {}", linf_distance(&values, t)?);
    }
    eprintln!("{msg}");
    Ok(())
}

fn gen_maze(g: &GlobalOpts, a: &GenMazeArgs) -> AnyResult<()> {
    let kind = match a.kind {
        KindArg::Standard => MazeKind::Standard,
        KindArg::Terrain => MazeKind::Terrain,
        KindArg::Both => return Err("gen-maze needs a single --kind".into()),
    };
    let out = g.out.as_deref().ok_or("gen-maze needs --out (the sidecar is written next to it)")?;
    let inst = kind.generate(&a.dims.0, a.p, a.sigma, g.gamma.unwrap_or(aggvi::envs::DEFAULT_GAMMA), g.seed.unwrap_or(0))?;
    let file = File::create(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_model(&inst.model, BufWriter::new(file))?;
    let meta_path = sibling(out, "meta.json");
    let mut meta = BufWriter::new(File::create(&meta_path).map_err(|e| format!("{}: {e}", meta_path.display()))?);
    serde_json::to_writer_pretty(&mut meta, &inst.meta)?;
    writeln!(meta)?;
    meta.flush()?;
    Ok(())
}

fn efficiency(g: &GlobalOpts, a: &EfficiencyArgs) -> AnyResult<()> {
    let mut cfg = experiment_config(g, &a.maze)?;
    if let Some(t) = a.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    let res = run_efficiency(&cfg)?;
    write_curves_csv(open_out(g.out.as_deref())?, &res.curves)?;
    match g.out.as_deref() {
        Some(p) => write_threshold_csv(File::create(sibling(p, "runs.csv"))?, &res.runs, cfg.threshold)?,
        None => write_threshold_csv(io::stderr(), &res.runs, cfg.threshold)?,
    }
    Ok(())
}

fn cartpole(g: &GlobalOpts, a: &CartpoleArgs) -> AnyResult<()> {
    let mut cfg: CartPoleBenchConfig = read_config(g.config.as_deref())?;
    if let Some(x) = g.seed {
        cfg.seed = x;
    }
    if let Some(x) = g.gamma {
        cfg.gamma = x;
    }
    if let Some(x) = g.epsilon {
        cfg.eps = x;
    }
    if let Some(x) = g.alpha {
        cfg.steps = x;
    }
    if let Some(x) = g.iters {
        cfg.iters = x;
    }
    if g.global_len.is_some() || g.agg_len.is_some() {
        let cur = cfg.phases.clone();
        cfg.phases = PhaseSchedule {
            global_len: g.global_len.map(aggvi::aggregation::Lengths::Constant).unwrap_or(cur.global_len),
            agg_len: g.agg_len.map(aggvi::aggregation::Lengths::Constant).unwrap_or(cur.agg_len),
        };
    }
    if let Some(x) = a.bins_per_dim {
        cfg.bins_per_dim = x;
    }
    if let Some(x) = a.samples_per_axis {
        cfg.samples_per_axis = x;
    }
    if let Some(x) = a.episodes {
        cfg.episodes = x;
    }
    if let Some(x) = a.eval_every {
        cfg.eval_every = x;
    }
    if g.reps.is_some() || g.full {
        return Err("cartpole: --reps and --full do not apply (use --episodes and --bins-per-dim)".into());
    }
    let points = run_cartpole_benchmark(&cfg)?;
    write_cartpole_csv(&points, open_out(g.out.as_deref())?)?;
    Ok(())
}

fn run(cli: Cli) -> AnyResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Solve(a) => solve(g, a),
        Command::GenMaze(a) => gen_maze(g, a),
        Command::SweepEps(a) => {
            let mut cfg = experiment_config(g, &a.maze)?;
            if let Some(l) = &a.eps_list {
                cfg.eps_list = l.clone();
            }
            cfg.validate()?;
            run_summary(g, &cfg, |c, s| run_eps_sweep(c, s))
        }
        Command::Efficiency(a) => efficiency(g, a),
        Command::Scaling(a) => {
            let mut cfg = experiment_config(g, &a.maze)?;
            if let Some(s) = &a.sizes {
                cfg.sizes = s.iter().map(|d| d.0.clone()).collect();
            }
            cfg.validate()?;
            run_summary(g, &cfg, |c, s| run_scaling(c, s))
        }
        Command::Robustness(a) => {
            let mut cfg = experiment_config(g, &a.maze)?;
            if let Some(l) = &a.p_list {
                cfg.p_list = l.clone();
            }
            if let Some(l) = &a.sigma_list {
                cfg.sigma_list = l.clone();
            }
            cfg.validate()?;
            run_summary(g, &cfg, |c, s| run_robustness(c, s))
        }
        Command::Cartpole(a) => cartpole(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(eps: f64) -> SummaryRow {
        SummaryRow { kind: MazeKind::Terrain, dims: vec![4, 4], p: 0.95, sigma: 0.0, eps, mean_error: 1.5, ci95: 0.0, reps: 1 }
    }

    #[test]
    fn rows_written_before_a_failure_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let g = GlobalOpts { out: Some(path.clone()), ..Default::default() };
        let err = run_summary(&g, &ExperimentConfig::default(), |_, sink| {
            sink(row(0.1))?;
            sink(row(0.2))?;
            Err(aggvi::Error::NotConverged { what: "test", iters: 1, change: 1.0 })
        });
        assert!(err.is_err());
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, [SUMMARY_HEADER, "terrain,4x4,0.95,0,0.1,1.5,0,1", "terrain,4x4,0.95,0,0.2,1.5,0,1"]);
    }

    #[test]
    fn dims_and_sibling_paths() {
        assert_eq!(parse_dims("100x100").unwrap().0, [100, 100]);
        assert_eq!(parse_dims("3x4x5").unwrap().0, [3, 4, 5]);
        assert!(parse_dims("10by10").is_err());
        assert_eq!(sibling(Path::new("out/eff.csv"), "runs.csv"), Path::new("out/eff.runs.csv"));
        assert_eq!(sibling(Path::new("maze.json"), "meta.json"), Path::new("maze.meta.json"));
    }

    #[test]
    fn flags_override_experiment_config() {
        let g = GlobalOpts { seed: Some(9), epsilon: Some(0.25), full: true, ..Default::default() };
        let m = MazeOpts { kind: Some(KindArg::Standard), p: Some(0.9), ..Default::default() };
        let cfg = experiment_config(&g, &m).unwrap();
        assert_eq!((cfg.seed, cfg.eps, cfg.p, cfg.full), (9, 0.25, 0.9, true));
        assert_eq!(cfg.kinds, [MazeKind::Standard]);
        assert_eq!(cfg.grid_dims(), [500, 500]);
        assert_eq!(cfg.iters, 1000);
    }
}
