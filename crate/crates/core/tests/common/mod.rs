#![allow(dead_code)]

use mbq::bellman::{contraction_constants, optimal_q};
use mbq::envs::{random_distribution, random_features, random_mdp};
use mbq::features::{expand, mu_norm, project, TabularFeatures};
use mbq::{StateActionDistribution, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub mdp: TabularMdp,
    pub features: TabularFeatures,
    pub mu: StateActionDistribution,
    pub threshold: usize,
}

/// Random 5-state, 2-action problems with three features, kept only when the
/// threshold depth is at most `max_threshold` and `q*` lies outside the
/// feature span.
pub fn small_suite(count: usize, seed: u64, max_threshold: usize) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let gamma = rng.random_range(0.3..0.5);
        let mdp = random_mdp(5, 2, gamma, &mut rng);
        let features = random_features(5, 2, 3, &mut rng);
        let mu = random_distribution(5, 2, &mut rng);
        let Ok(report) = contraction_constants(&features, &mu, gamma, 1) else {
            continue;
        };
        if report.threshold_n > max_threshold {
            continue;
        }
        let q_star = optimal_q(&mdp).unwrap();
        let fit = expand(&features, &project(&features, &mu, &q_star).unwrap());
        if mu_norm(&mu, &q_star.sub(&fit)) < 1e-3 {
            continue;
        }
        out.push(Instance {
            mdp,
            features,
            mu,
            threshold: report.threshold_n,
        });
    }
    out
}

/// Up to 6 states, up to 3 actions, γ in [0.1, 0.99).
pub fn wide_suite(count: usize, seed: u64) -> Vec<TabularMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let states = rng.random_range(1..=6);
            let actions = rng.random_range(1..=3);
            let gamma = rng.random_range(0.1..0.99);
            random_mdp(states, actions, gamma, &mut rng)
        })
        .collect()
}
