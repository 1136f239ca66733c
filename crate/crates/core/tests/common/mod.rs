//! Random small MDPs and dense reference solvers shared by the property suites.
#![allow(dead_code, clippy::needless_range_loop)]

use aggvi::aggregation::Partition;
use aggvi::{ActionEntry, MdpModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random row over up to `max_dest` distinct destinations.
fn random_row<R: Rng>(rng: &mut R, n: usize, max_dest: usize) -> Vec<(usize, f64)> {
    let mut dests: Vec<usize> = (0..n).collect();
    dests.shuffle(rng);
    let k = rng.random_range(1..=max_dest.min(n));
    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut row: Vec<(usize, f64)> = dests[..k].iter().zip(&weights).map(|(&d, &w)| (d, w / total)).collect();
    // Put any rounding slack on the first entry so the row sums to 1.
    let sum: f64 = row.iter().map(|e| e.1).sum();
    row[0].1 += 1.0 - sum;
    row
}

/// `n` states, 1..=max_actions actions each, costs uniform in `[lo, hi]`.
pub fn random_mdp(seed: u64, n: usize, max_actions: usize, gamma: f64, lo: f64, hi: f64) -> MdpModel {
    let rng = &mut rng(seed);
    let states = (0..n)
        .map(|_| {
            let m = rng.random_range(1..=max_actions);
            (0..m).map(|_| ActionEntry::new(rng.random_range(lo..=hi), random_row(rng, n, 3))).collect()
        })
        .collect();
    MdpModel::new(gamma, states).unwrap()
}

/// Costs in `[-1, 1]`: the bounded-cost regime.
pub fn unit_mdp(seed: u64, n: usize, gamma: f64) -> MdpModel {
    random_mdp(seed, n, 3, gamma, -1.0, 1.0)
}

pub fn random_partition(seed: u64, n: usize) -> Partition {
    let rng = &mut rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let k = rng.random_range(1..=n);
    let mut labels: Vec<usize> = (0..n).map(|s| if s < k { s } else { rng.random_range(0..k) }).collect();
    labels.shuffle(rng);
    Partition::from_labels(labels).unwrap()
}

pub fn random_vector(seed: u64, n: usize, scale: f64) -> Vec<f64> {
    let rng = &mut rng(seed);
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact `V^π = (I − γP_π)⁻¹ r_π`.
pub fn exact_policy_value(m: &MdpModel, actions: &[usize]) -> Vec<f64> {
    let n = m.num_states();
    let g = m.gamma();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        a[s][s] = 1.0;
        for (d, p) in m.transitions(s, actions[s]) {
            a[s][d] -= g * p;
        }
        b[s] = m.cost(s, actions[s]);
    }
    solve_dense(a, b)
}

/// `V*` by enumerating every deterministic policy; only for tiny models.
pub fn brute_force_optimum(m: &MdpModel) -> Vec<f64> {
    let n = m.num_states();
    let mut actions = vec![0usize; n];
    let mut best = vec![f64::INFINITY; n];
    loop {
        let v = exact_policy_value(m, &actions);
        for s in 0..n {
            best[s] = best[s].min(v[s]);
        }
        // Odometer over action tuples.
        let mut s = 0;
        loop {
            if s == n {
                return best;
            }
            actions[s] += 1;
            if actions[s] < m.num_actions(s) {
                break;
            }
            actions[s] = 0;
            s += 1;
        }
    }
}

/// `min_a r(s,a) + γ Σ p V` for every state, written out directly.
pub fn reference_sweep(m: &MdpModel, v: &[f64]) -> Vec<f64> {
    (0..m.num_states())
        .map(|s| {
            (0..m.num_actions(s))
                .map(|a| m.cost(s, a) + m.gamma() * m.transitions(s, a).map(|(d, p)| p * v[d]).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}
