mod common;

use mbq::bellman::{apply_bellman, apply_multi_bellman, optimal_q, Backup, ProjectedProblem, DEFAULT_MAX_ITERS};
use mbq::envs::{make_star, make_w2w, random_mdp};
use mbq::features::{expand, mu_norm, Weights};
use mbq::mdp::value_iteration;
use mbq::QTable;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_table(states: usize, actions: usize, rng: &mut ChaCha8Rng) -> QTable {
    QTable::from_fn(states, actions, |_, _| rng.random_range(-10.0..10.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multi_bellman_contracts_in_sup_norm(
        seed in any::<u64>(),
        states in 1usize..=6,
        actions in 1usize..=3,
        gamma in 0.0f64..0.99,
        n in prop::sample::select(vec![1usize, 2, 3, 5]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(states, actions, gamma, &mut rng);
        let q = random_table(states, actions, &mut rng);
        let p = random_table(states, actions, &mut rng);
        let lhs = apply_multi_bellman(&mdp, &q, n).unwrap().sup_distance(&apply_multi_bellman(&mdp, &p, n).unwrap());
        prop_assert!(lhs <= gamma.powi(n as i32) * q.sup_distance(&p) + 1e-9);
    }

    #[test]
    fn composition_law_is_exact(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(4, 2, 0.9, &mut rng);
        let q = random_table(4, 2, &mut rng);
        let whole = apply_multi_bellman(&mdp, &q, a + b).unwrap();
        let split = apply_multi_bellman(&mdp, &apply_multi_bellman(&mdp, &q, b).unwrap(), a).unwrap();
        prop_assert_eq!(whole, split);
    }

    #[test]
    fn value_iteration_meets_its_tolerance(seed in any::<u64>(), gamma in 0.0f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(5, 3, gamma, &mut rng);
        let q = value_iteration(&mdp, 1e-9, 1_000_000).unwrap();
        prop_assert!(apply_bellman(&mdp, &q).unwrap().sup_distance(&q) <= 1e-9);
    }
}

#[test]
fn optimal_values_are_preserved_by_every_depth() {
    for mdp in common::wide_suite(20, 3) {
        let q = value_iteration(&mdp, 1e-9, 1_000_000).unwrap();
        for n in 1..=5 {
            let gap = apply_multi_bellman(&mdp, &q, n).unwrap().sup_distance(&q);
            assert!(gap <= n as f64 * 1e-9, "n = {n}: {gap}");
        }
    }
}

#[test]
fn counterexamples_have_zero_optimal_values() {
    for bundle in [make_w2w(), make_star()] {
        assert!(optimal_q(&bundle.mdp).unwrap().max_abs() < 1e-8, "{}", bundle.name);
    }
}

#[test]
fn fixed_points_are_unique_beyond_the_threshold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in common::small_suite(20, 7, 12) {
        let pp = ProjectedProblem::new(&inst.mdp, &inst.features, &inst.mu).unwrap();
        let n = inst.threshold.max(1);
        let start = Weights::from_vec((0..3).map(|_| rng.random_range(-50.0..50.0)).collect());
        let a = pp
            .solve_fixed_point(n, Backup::Exact, 1e-12, DEFAULT_MAX_ITERS, Weights::zeros(3))
            .unwrap();
        let b = pp
            .solve_fixed_point(n, Backup::Exact, 1e-12, DEFAULT_MAX_ITERS, start)
            .unwrap();
        assert!(a.converged && b.converged);
        assert!(a.weights.distance(&b.weights) <= 2e-10);
    }
}

#[test]
fn deeper_targets_do_not_lose_accuracy() {
    for inst in common::small_suite(20, 5, 12) {
        let pp = ProjectedProblem::new(&inst.mdp, &inst.features, &inst.mu).unwrap();
        let q_star = optimal_q(&inst.mdp).unwrap();
        let errors: Vec<f64> = [0, 4, 8]
            .iter()
            .map(|extra| {
                let fp = pp
                    .solve_fixed_point(
                        inst.threshold + extra,
                        Backup::Exact,
                        1e-12,
                        DEFAULT_MAX_ITERS,
                        Weights::zeros(3),
                    )
                    .unwrap();
                mu_norm(&inst.mu, &q_star.sub(&expand(&inst.features, &fp.weights)))
            })
            .collect();
        assert!(
            errors[1] <= errors[0] + 1e-6 && errors[2] <= errors[1] + 1e-6,
            "{errors:?}"
        );
    }
}

#[test]
fn error_bound_holds_beyond_the_threshold() {
    for inst in common::small_suite(20, 9, 12) {
        let pp = ProjectedProblem::new(&inst.mdp, &inst.features, &inst.mu).unwrap();
        let q_star = optimal_q(&inst.mdp).unwrap();
        for n in [inst.threshold, inst.threshold + 3] {
            let b = pp.error_bound(n, &q_star).unwrap();
            assert!(b.lhs <= b.rhs + 1e-8, "n = {n}: {} > {}", b.lhs, b.rhs);
        }
        if inst.threshold > 1 {
            assert!(pp.error_bound(inst.threshold - 1, &q_star).is_err());
        }
    }
}

#[test]
fn sampled_fixed_point_zeroes_the_drift() {
    for inst in common::small_suite(5, 13, 5) {
        let pp = ProjectedProblem::new(&inst.mdp, &inst.features, &inst.mu).unwrap();
        let n = inst.threshold;
        let fp = pp
            .solve_fixed_point(n, Backup::Sampled, 1e-12, DEFAULT_MAX_ITERS, Weights::zeros(3))
            .unwrap();
        assert!(fp.converged);
        let g = pp.ode_drift(&fp.weights, n, Backup::Sampled).unwrap();
        assert!(mbq::bellman::vector_norm(&g) < 1e-8);
    }
}
