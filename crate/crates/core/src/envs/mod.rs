//! Benchmark MDP generators: standard (corridor) mazes and terrain mazes on
//! n-dimensional grids, with slip dynamics, cost noise and normalization of
//! the optimal cost-to-go.
//!
//! The terminal cell is the corner `(1, …, 1)` (state 0). It is absorbing
//! with a zero-cost self-loop, and every move that intends to enter it costs
//! zero, so `V* ≥ 0` with its minimum at the terminal.

mod grid;
mod height;

pub use grid::Grid;
pub use height::{gen_height_field, Bump, HeightField};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{scale_costs, value_iteration, ActionEntry, MdpModel, ValueFunction};
use crate::rng::StreamKey;

pub const TERMINAL: usize = 0;
pub const DEFAULT_TARGET_VMAX: f64 = 100.0;
pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_BUMPS: usize = 10;
/// Cheapest terrain move before noise.
pub const TERRAIN_COST_FLOOR: f64 = 0.1;
const TERRAIN_BASE_COST: f64 = 1.0;
const GROUND_TRUTH_GAP: f64 = 1e-8;
const GROUND_TRUTH_MAX_SWEEPS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct MazeSpec {
    pub dims: Vec<usize>,
    /// Probability of moving in the intended direction.
    pub p: f64,
    pub seed: u64,
    pub target_vmax: f64,
    pub gamma: f64,
    /// Standard deviation of the per-(state, action) cost noise.
    pub sigma: f64,
}

impl MazeSpec {
    pub fn new(dims: Vec<usize>, p: f64, seed: u64) -> Self {
        MazeSpec { dims, p, seed, target_vmax: DEFAULT_TARGET_VMAX, gamma: DEFAULT_GAMMA, sigma: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerrainSpec {
    pub dims: Vec<usize>,
    pub p: f64,
    pub seed: u64,
    pub target_vmax: f64,
    pub gamma: f64,
    /// Standard deviation of the per-(state, action) cost noise.
    pub sigma: f64,
    pub bumps: usize,
}

impl TerrainSpec {
    pub fn new(dims: Vec<usize>, p: f64, seed: u64) -> Self {
        TerrainSpec {
            dims,
            p,
            seed,
            target_vmax: DEFAULT_TARGET_VMAX,
            gamma: DEFAULT_GAMMA,
            sigma: 0.0,
            bumps: DEFAULT_BUMPS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MazeKind {
    Standard,
    Terrain,
}

impl MazeKind {
    pub const ALL: [MazeKind; 2] = [MazeKind::Standard, MazeKind::Terrain];

    pub fn name(self) -> &'static str {
        match self {
            MazeKind::Standard => "standard",
            MazeKind::Terrain => "terrain",
        }
    }

    /// Generate an instance with default normalization target and bump count.
    pub fn generate(self, dims: &[usize], p: f64, sigma: f64, gamma: f64, seed: u64) -> Result<MazeInstance> {
        match self {
            MazeKind::Standard => {
                gen_standard_maze(&MazeSpec { gamma, sigma, ..MazeSpec::new(dims.to_vec(), p, seed) })
            }
            MazeKind::Terrain => {
                gen_terrain_maze(&TerrainSpec { gamma, sigma, ..TerrainSpec::new(dims.to_vec(), p, seed) })
            }
        }
    }
}

impl std::fmt::Display for MazeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MazeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "std" => Ok(MazeKind::Standard),
            "terrain" | "trn" => Ok(MazeKind::Terrain),
            _ => Err(Error::invalid("kind", format!("unknown maze kind {s:?} (expected standard or terrain)"))),
        }
    }
}

/// Generator sidecar, written next to exported models.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MazeMeta {
    pub kind: &'static str,
    pub dims: Vec<usize>,
    pub seed: u64,
    pub p: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// Factor applied to the raw costs so that `‖V*‖∞` hits the target.
    pub normalization_factor: f64,
    /// `‖V*‖∞` of the noiseless normalized model.
    pub vmax: f64,
    /// Undirected moves between cells (corridors for standard mazes).
    pub edges: usize,
}

/// A generated benchmark: the model to solve and the cost-to-go it is scored against.
#[derive(Clone, Debug)]
pub struct MazeInstance {
    pub model: MdpModel,
    /// Optimal cost-to-go of the noiseless normalized model.
    pub v_star: ValueFunction,
    pub meta: MazeMeta,
}

impl MazeInstance {
    /// The same instance with the cost noise a generator would draw for
    /// `sigma`. Only valid on noiseless instances.
    pub fn with_noise(&self, sigma: f64) -> Result<MazeInstance> {
        if self.meta.sigma != 0.0 {
            return Err(Error::invalid("sigma", "instance already carries noise"));
        }
        let rng = &mut StreamKey::new(self.meta.seed).child("noise", 0).rng();
        let model = add_cost_noise(&self.model, sigma, rng)?;
        let meta = MazeMeta { sigma, ..self.meta.clone() };
        Ok(MazeInstance { model, v_star: self.v_star.clone(), meta })
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", format!("{p} is not in (0, 1]")));
    }
    Ok(())
}

/// Transition row for an intended move under slip: `p` on the intended
/// destination, `(1 − p)/(m − 1)` on each of the other available ones. A
/// single available move is deterministic.
pub fn apply_stochasticity(intended: usize, available: &[usize], p: f64) -> Result<Vec<(usize, f64)>> {
    check_p(p)?;
    if !available.contains(&intended) {
        return Err(Error::invalid("intended", format!("move to {intended} is not available")));
    }
    let m = available.len();
    if m == 1 || p == 1.0 {
        return Ok(vec![(intended, 1.0)]);
    }
    let slip = (1.0 - p) / (m - 1) as f64;
    Ok(available.iter().map(|&d| (d, if d == intended { p } else { slip })).collect())
}

/// Per-cell models where each action intends one of `moves[cell]`.
fn build_grid_model<F>(gamma: f64, p: f64, moves: &[Vec<usize>], cost: F) -> Result<MdpModel>
where
    F: Fn(usize, usize) -> f64,
{
    let states = moves
        .iter()
        .enumerate()
        .map(|(s, avail)| {
            if s == TERMINAL {
                return Ok(vec![ActionEntry::to(TERMINAL, 0.0)]);
            }
            avail
                .iter()
                .map(|&d| {
                    let c = if d == TERMINAL { 0.0 } else { cost(s, d) };
                    Ok(ActionEntry::new(c, apply_stochasticity(d, avail, p)?))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    MdpModel::new(gamma, states)
}

/// Spanning tree of the grid graph by randomized iterative depth-first carving.
/// Returns tree adjacency in grid-neighbour order.
pub fn carve_spanning_tree<R: Rng>(grid: &Grid, rng: &mut R) -> Vec<Vec<usize>> {
    let n = grid.num_cells();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut visited = vec![false; n];
    let start = rng.random_range(0..n);
    visited[start] = true;
    let mut stack = vec![start];
    let mut fresh = Vec::with_capacity(8);
    while let Some(&cell) = stack.last() {
        fresh.clear();
        fresh.extend(grid.neighbors(cell).into_iter().filter(|&c| !visited[c]));
        if fresh.is_empty() {
            stack.pop();
            continue;
        }
        let next = fresh[rng.random_range(0..fresh.len())];
        visited[next] = true;
        adj[cell].push(next);
        adj[next].push(cell);
        stack.push(next);
    }
    for (cell, a) in adj.iter_mut().enumerate() {
        let order = grid.neighbors(cell);
        a.sort_by_key(|d| order.iter().position(|x| x == d));
    }
    adj
}

/// Optimal cost-to-go by value iteration from zero, stopped once the distance
/// to the true fixed point is provably below 1e-8.
pub fn ground_truth(model: &MdpModel) -> Result<ValueFunction> {
    let g = model.gamma();
    let tol = if g > 0.0 { GROUND_TRUTH_GAP * (1.0 - g) / g } else { GROUND_TRUTH_GAP };
    let n = model.num_states();
    let sol = value_iteration(model, &vec![0.0; n], GROUND_TRUTH_MAX_SWEEPS, tol)?;
    if !sol.converged {
        return Err(Error::NotConverged { what: "ground truth", iters: sol.iters, change: sol.last_change });
    }
    Ok(sol.values)
}

/// A model rescaled so that `‖V*‖∞` equals a target.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub model: MdpModel,
    pub v_star: ValueFunction,
    pub factor: f64,
}

/// Scale costs so that `‖V*‖∞ = target`; also returns the scaled `V*`.
pub fn normalize_to_max_v(model: &MdpModel, target: f64) -> Result<Normalized> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::invalid("target", format!("{target} must be positive")));
    }
    let v = ground_truth(model)?;
    let vmax = v.sup_norm();
    if !(vmax > 0.0) {
        return Err(Error::invalid("model", "optimal cost-to-go is identically zero"));
    }
    let factor = target / vmax;
    Ok(Normalized { model: scale_costs(model, factor)?, v_star: v.scaled(factor), factor })
}

/// Standard maze: corridors form a spanning tree, so each cell has a unique
/// path to the terminal. Every move costs 1 before normalization; noise, if
/// any, is added afterwards and `v_star` stays that of the noiseless model.
pub fn gen_standard_maze(spec: &MazeSpec) -> Result<MazeInstance> {
    check_p(spec.p)?;
    let grid = Grid::new(&spec.dims)?;
    let key = StreamKey::new(spec.seed);
    let tree = carve_spanning_tree(&grid, &mut key.child("carve", 0).rng());
    let edges = tree.iter().map(Vec::len).sum::<usize>() / 2;
    let raw = build_grid_model(spec.gamma, spec.p, &tree, |_, _| 1.0)?;
    let norm = normalize_to_max_v(&raw, spec.target_vmax)?;
    let model = add_cost_noise(&norm.model, spec.sigma, &mut key.child("noise", 0).rng())?;
    let meta = MazeMeta {
        kind: "standard",
        dims: spec.dims.clone(),
        seed: spec.seed,
        p: spec.p,
        sigma: spec.sigma,
        gamma: spec.gamma,
        normalization_factor: norm.factor,
        vmax: norm.v_star.sup_norm(),
        edges,
    };
    Ok(MazeInstance { model, v_star: norm.v_star, meta })
}

/// Raw terrain move costs `1 + λ·(H(dest) − H(src))`, with `λ` the largest
/// slope weight keeping every cost at or above [`TERRAIN_COST_FLOOR`].
pub fn terrain_cost_fn<'a>(grid: &Grid, height: &'a HeightField) -> impl Fn(usize, usize) -> f64 + 'a {
    let h = height.values();
    let max_rise = (0..grid.num_cells())
        .flat_map(|c| grid.neighbors(c).into_iter().map(move |d| (h[d] - h[c]).abs()))
        .fold(0.0, f64::max);
    let lambda = if max_rise > 0.0 { (TERRAIN_BASE_COST - TERRAIN_COST_FLOOR) / max_rise } else { 0.0 };
    move |s, d| TERRAIN_BASE_COST + lambda * (h[d] - h[s])
}

/// Add `N(0, σ)` to every action cost once, clamping at zero.
pub fn add_cost_noise<R: Rng>(model: &MdpModel, sigma: f64, rng: &mut R) -> Result<MdpModel> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("sigma", format!("{sigma} must be nonnegative")));
    }
    if sigma == 0.0 {
        return Ok(model.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("sigma", e.to_string()))?;
    model.map_costs(|_, _, c| (c + normal.sample(rng)).max(0.0))
}

/// Terrain maze: full grid adjacency with height-driven move costs.
///
/// Normalization uses the noiseless model; the returned `v_star` is that
/// model's optimum even when `sigma > 0`.
pub fn gen_terrain_maze(spec: &TerrainSpec) -> Result<MazeInstance> {
    check_p(spec.p)?;
    let grid = Grid::new(&spec.dims)?;
    let key = StreamKey::new(spec.seed);
    let height = gen_height_field(&spec.dims, spec.bumps, &mut key.child("height", 0).rng())?;
    let moves: Vec<Vec<usize>> = (0..grid.num_cells()).map(|c| grid.neighbors(c)).collect();
    let raw = build_grid_model(spec.gamma, spec.p, &moves, terrain_cost_fn(&grid, &height))?;
    let norm = normalize_to_max_v(&raw, spec.target_vmax)?;
    let model = add_cost_noise(&norm.model, spec.sigma, &mut key.child("noise", 0).rng())?;
    let meta = MazeMeta {
        kind: "terrain",
        dims: spec.dims.clone(),
        seed: spec.seed,
        p: spec.p,
        sigma: spec.sigma,
        gamma: spec.gamma,
        normalization_factor: norm.factor,
        vmax: norm.v_star.sup_norm(),
        edges: grid.num_edges(),
    };
    Ok(MazeInstance { model, v_star: norm.v_star, meta })
}
