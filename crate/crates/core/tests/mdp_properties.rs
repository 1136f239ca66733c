mod common;

use aggvi::envs::{ground_truth, normalize_to_max_v};
use aggvi::mdp::{
    bellman_sweep, bellman_sweep_into, greedy_policy, linf_distance, policy_evaluation, scale_costs, value_iteration,
};
use aggvi::{ActionEntry, Execution, MdpModel};
use common::*;
use proptest::prelude::*;

fn gammas() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 0.1..0.99f64]
}

/// Relabel states so that old state `s` becomes `perm[s]`.
fn permute(m: &MdpModel, perm: &[usize]) -> MdpModel {
    let n = m.num_states();
    let mut states = vec![Vec::new(); n];
    for s in 0..n {
        states[perm[s]] = (0..m.num_actions(s))
            .map(|a| ActionEntry::new(m.cost(s, a), m.transitions(s, a).map(|(d, p)| (perm[d], p)).collect()))
            .collect();
    }
    MdpModel::new(m.gamma(), states).unwrap()
}

/// True when the minimizing action at every state beats the runner-up by `gap`.
fn unique_minima(m: &MdpModel, v: &[f64], gap: f64) -> bool {
    (0..m.num_states()).all(|s| {
        let mut q: Vec<f64> = (0..m.num_actions(s)).map(|a| m.q_with(s, a, |d| v[d])).collect();
        q.sort_by(f64::total_cmp);
        q.len() < 2 || q[1] - q[0] > gap
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sweep_matches_reference(seed in any::<u64>(), n in 1usize..12, gamma in gammas()) {
        let m = random_mdp(seed, n, 4, gamma, -3.0, 3.0);
        let v = random_vector(seed.wrapping_add(1), n, 10.0);
        let got = bellman_sweep(&m, &v).unwrap();
        let want = reference_sweep(&m, &v);
        prop_assert!(linf(&got, &want) <= 1e-12);
    }

    #[test]
    fn contraction(seed in any::<u64>(), n in 1usize..12, gamma in gammas()) {
        let m = random_mdp(seed, n, 4, gamma, -3.0, 3.0);
        let v = random_vector(seed.wrapping_add(1), n, 20.0);
        let u = random_vector(seed.wrapping_add(2), n, 20.0);
        let tv = bellman_sweep(&m, &v).unwrap();
        let tu = bellman_sweep(&m, &u).unwrap();
        prop_assert!(linf(&tv, &tu) <= gamma * linf(&v, &u) + 1e-12);
    }

    #[test]
    fn iterates_stay_bounded_under_unit_costs(seed in any::<u64>(), n in 1usize..12, gamma in 0.0..0.99f64) {
        let m = unit_mdp(seed, n, gamma);
        let bound = 1.0 / (1.0 - gamma);
        let mut v = random_vector(seed.wrapping_add(1), n, bound);
        for _ in 0..60 {
            v = bellman_sweep(&m, &v).unwrap().into_inner();
            prop_assert!(v.iter().all(|x| x.abs() <= bound + 1e-9));
        }
    }

    #[test]
    fn value_iteration_reaches_the_enumerated_optimum(seed in any::<u64>(), n in 1usize..7, gamma in 0.0..0.95f64) {
        let m = random_mdp(seed, n, 3, gamma, -2.0, 2.0);
        let oracle = brute_force_optimum(&m);
        let v = ground_truth(&m).unwrap();
        prop_assert!(linf(&v, &oracle) <= 1e-7, "{:?} vs {:?}", &v[..], oracle);
        let tv = bellman_sweep(&m, &v).unwrap();
        prop_assert!(linf(&tv, &v) <= 1e-8);
    }

    #[test]
    fn greedy_policy_of_optimum_evaluates_to_optimum(seed in any::<u64>(), n in 1usize..10, gamma in 0.0..0.95f64) {
        let m = random_mdp(seed, n, 3, gamma, 0.0, 1.0);
        let v = ground_truth(&m).unwrap();
        let pi = greedy_policy(&m, &v).unwrap();
        let iterative = policy_evaluation(&m, &pi, 1e-12, 100_000).unwrap();
        let exact = exact_policy_value(&m, pi.as_slice());
        prop_assert!(linf(&iterative.values, &exact) <= 1e-8);
        prop_assert!(linf(&exact, &v) <= 1e-6);
    }

    #[test]
    fn cost_scaling_equivariance(seed in any::<u64>(), n in 1usize..10, gamma in 0.0..0.95f64, c in 0.01..50.0f64) {
        let m = random_mdp(seed, n, 3, gamma, -2.0, 2.0);
        let tol = 1e-10;
        let v = value_iteration(&m, &vec![0.0; n], 100_000, tol).unwrap();
        let vc = value_iteration(&scale_costs(&m, c).unwrap(), &vec![0.0; n], 100_000, c * tol).unwrap();
        let scaled = v.values.scaled(c);
        // Both runs stop within tol·γ/(1−γ) of their fixed points.
        let slack = 2.0 * c * tol / (1.0 - gamma).max(1e-3) + 1e-9 * c;
        prop_assert!(linf(&vc.values, &scaled) <= slack);
        if unique_minima(&m, &v.values, 1e-6) {
            prop_assert_eq!(greedy_policy(&m, &v.values).unwrap(), greedy_policy(&scale_costs(&m, c).unwrap(), &scaled).unwrap());
        }
    }

    #[test]
    fn sweep_is_independent_of_state_order(seed in any::<u64>(), n in 1usize..12, gamma in gammas()) {
        let m = random_mdp(seed, n, 4, gamma, -3.0, 3.0);
        let v = random_vector(seed.wrapping_add(1), n, 10.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.reverse();
        perm.rotate_left((seed % n as u64) as usize);
        let pm = permute(&m, &perm);
        let mut pv = vec![0.0; n];
        for s in 0..n {
            pv[perm[s]] = v[s];
        }
        let tv = bellman_sweep(&m, &v).unwrap();
        let tpv = bellman_sweep(&pm, &pv).unwrap();
        for s in 0..n {
            prop_assert_eq!(tv[s], tpv[perm[s]]);
        }
    }

    #[test]
    fn serial_and_parallel_sweeps_agree(seed in any::<u64>(), n in 1usize..3000) {
        let m = random_mdp(seed, n, 3, 0.9, -1.0, 1.0);
        let v = random_vector(seed.wrapping_add(1), n, 10.0);
        let mut a = vec![0.0; n];
        let mut b = vec![0.0; n];
        bellman_sweep_into(&m, &v, &mut a, Execution::Serial).unwrap();
        bellman_sweep_into(&m, &v, &mut b, Execution::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn linf_distance_is_a_metric(seed in any::<u64>(), n in 1usize..20) {
        let a = random_vector(seed, n, 5.0);
        let b = random_vector(seed.wrapping_add(1), n, 5.0);
        let c = random_vector(seed.wrapping_add(2), n, 5.0);
        let ab = linf_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, linf_distance(&b, &a).unwrap());
        prop_assert_eq!(linf_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(ab <= linf_distance(&a, &c).unwrap() + linf_distance(&c, &b).unwrap() + 1e-15);
    }

    #[test]
    fn normalization_keeps_the_greedy_policy(seed in any::<u64>(), n in 2usize..10, gamma in 0.1..0.95f64, target in 1.0..500.0f64) {
        let m = random_mdp(seed, n, 3, gamma, 0.1, 1.0);
        let v = ground_truth(&m).unwrap();
        prop_assume!(unique_minima(&m, &v, 1e-6));
        let norm = normalize_to_max_v(&m, target).unwrap();
        prop_assert!((norm.v_star.sup_norm() - target).abs() <= 1e-6 * target);
        let fresh = ground_truth(&norm.model).unwrap();
        prop_assert!(linf(&fresh, &norm.v_star) <= 1e-6 * target);
        prop_assert_eq!(greedy_policy(&m, &v).unwrap(), greedy_policy(&norm.model, &norm.v_star).unwrap());
    }
}
