//! The environments: two tabular counter-examples, random tabular instances
//! for property tests, and three classic-control simulators.

mod acrobot;
mod cartpole;
mod mountaincar;

use rand::Rng;

use crate::features::{counterexample_features, Counterexample, TabularFeatures};
use crate::mdp::{StateActionDistribution, TabularMdp};
use crate::{Error, Result};

pub use acrobot::{make_acrobot, Acrobot, AcrobotState};
pub use cartpole::{make_cartpole, Cartpole, CartpoleState};
pub use mountaincar::{make_mountaincar, Mountaincar, MountaincarState};

/// A tabular counter-example with its features, data distribution and the
/// discount and step size used with it.
#[derive(Clone, Debug)]
pub struct CounterexampleBundle {
    pub name: &'static str,
    pub mdp: TabularMdp,
    pub features: TabularFeatures,
    pub mu: StateActionDistribution,
    pub gamma: f64,
    pub alpha: f64,
}

/// Two states, one action, every transition lands in the second state.
pub fn make_w2w() -> CounterexampleBundle {
    let gamma = 0.9;
    let mdp = TabularMdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0; 2], gamma).expect("static MDP");
    CounterexampleBundle {
        name: "w2w",
        mdp,
        features: counterexample_features(Counterexample::W2w),
        mu: StateActionDistribution::uniform(2, 1),
        gamma,
        alpha: 1e-2,
    }
}

/// Six states, two actions. The first action jumps to the last state, the
/// second to one of the first five uniformly. States are drawn uniformly and
/// the first action is taken one time in six.
pub fn make_star() -> CounterexampleBundle {
    let gamma = 0.995;
    let mut transition = vec![0.0; 6 * 2 * 6];
    for s in 0..6 {
        transition[(s * 2) * 6 + 5] = 1.0;
        for next in 0..5 {
            transition[(s * 2 + 1) * 6 + next] = 0.2;
        }
    }
    let mdp = TabularMdp::new(6, 2, transition, vec![0.0; 12], gamma).expect("static MDP");
    CounterexampleBundle {
        name: "star",
        mdp,
        features: counterexample_features(Counterexample::Star),
        mu: StateActionDistribution::uniform_states(6, &[1.0 / 6.0, 5.0 / 6.0]).expect("static distribution"),
        gamma,
        alpha: 1e-2,
    }
}

pub fn counterexample(name: &str) -> Result<CounterexampleBundle> {
    match name {
        "w2w" => Ok(make_w2w()),
        "star" => Ok(make_star()),
        other => Err(Error::Config(format!("`{other}` is not a tabular environment"))),
    }
}

/// State bounds, episode length and reward convention of a control task.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlEnvSpec {
    pub name: &'static str,
    /// Length of the observation vector the features see.
    pub state_dim: usize,
    pub action_count: usize,
    pub max_steps: usize,
    pub reward_convention: &'static str,
    /// Box the Gaussian feature grid covers, one interval per observation entry.
    pub bounds: Vec<(f64, f64)>,
}

/// Random MDP with dense random transition rows and rewards in `[−1, 1]`.
pub fn random_mdp<R: Rng + ?Sized>(num_states: usize, num_actions: usize, gamma: f64, rng: &mut R) -> TabularMdp {
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        let raw: Vec<f64> = (0..num_states).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let drift = 1.0 - row.iter().sum::<f64>();
        row[0] += drift;
        transition.extend(row);
    }
    let reward = (0..num_states * num_actions)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    TabularMdp::new(num_states, num_actions, transition, reward, gamma).expect("shapes match by construction")
}

/// Features with entries uniform in `[−1, 1]`.
pub fn random_features<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    dim: usize,
    rng: &mut R,
) -> TabularFeatures {
    let rows = (0..num_states * num_actions * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    TabularFeatures::new(num_states, num_actions, dim, rows).expect("shapes match by construction")
}

/// Full-support distribution with weights proportional to `U[0.5, 1.5]` draws.
pub fn random_distribution<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    rng: &mut R,
) -> StateActionDistribution {
    let raw: Vec<f64> = (0..num_states * num_actions)
        .map(|_| rng.random_range(0.5..1.5))
        .collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let drift = 1.0 - weights.iter().sum::<f64>();
    weights[0] += drift;
    StateActionDistribution::new(num_states, num_actions, weights).expect("normalised by construction")
}

pub(crate) fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::State(format!("{name} state has non-finite entries: {values:?}")))
    }
}

pub(crate) fn check_range(what: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(Error::State(format!("{what} = {value} outside [{lo}, {hi}]")))
    }
}
