//! Multi-step Q-learning: the sampled target, the parameter update and the
//! sequential learning loop.

mod target;

use rand::Rng;

use crate::features::{FeatureMap, Weights};
use crate::mdp::{sample_transition, Simulator, StateActionDistribution, TabularMdp, TransitionSample};
use crate::{Error, Result};

pub use target::{
    expected_sampled_table, expected_sampled_target, full_tree_size, sample_target, SampledTarget, ENUMERATION_LIMIT,
};

/// Default ceiling on `‖ω‖₂` beyond which a run is declared divergent.
pub const DIVERGENCE_CEILING: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LearningRate {
    Constant(f64),
    /// `α_t = α₀ / (1 + t)^p`.
    RobbinsMonro {
        alpha0: f64,
        exponent: f64,
    },
}

impl LearningRate {
    pub fn at(&self, step: usize) -> f64 {
        match *self {
            LearningRate::Constant(alpha) => alpha,
            LearningRate::RobbinsMonro { alpha0, exponent } => alpha0 / (1.0 + step as f64).powf(exponent),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LearningRate::Constant(alpha) if !(alpha > 0.0 && alpha.is_finite()) => Err(Error::Config(format!(
                "constant learning rate must be positive, got {alpha}"
            ))),
            LearningRate::RobbinsMonro { alpha0, .. } if !(alpha0 > 0.0 && alpha0.is_finite()) => Err(Error::Config(
                format!("initial learning rate must be positive, got {alpha0}"),
            )),
            LearningRate::RobbinsMonro { exponent, .. } if !(exponent > 0.5 && exponent <= 1.0) => Err(Error::Config(
                format!("decay exponent must lie in (0.5, 1], got {exponent}"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerConfig {
    pub depth: usize,
    pub discount: f64,
    pub learning_rate: LearningRate,
    pub total_steps: usize,
    pub divergence_ceiling: f64,
}

impl LearnerConfig {
    pub fn new(depth: usize, discount: f64, learning_rate: LearningRate, total_steps: usize) -> Self {
        Self {
            depth,
            discount,
            learning_rate,
            total_steps,
            divergence_ceiling: DIVERGENCE_CEILING,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth n must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!(
                "discount must lie in [0, 1), got {}",
                self.discount
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if !(self.divergence_ceiling > 0.0) {
            return Err(Error::Config("divergence ceiling must be positive".into()));
        }
        self.learning_rate.validate()
    }
}

/// `ω + α·φ(x, a)·(τ − q_ω(x, a))`.
///
/// `step` only labels the divergence error raised when the result is not finite.
pub fn update_step<S, F: FeatureMap<S>>(
    weights: &Weights,
    features: &F,
    transition: &TransitionSample<S>,
    target: &SampledTarget,
    alpha: f64,
    step: usize,
) -> Result<Weights> {
    if !(alpha > 0.0) {
        return Err(Error::Argument(format!("learning rate must be positive, got {alpha}")));
    }
    weights.check_dim(features.dim())?;
    let td = target.value - features.q_value(&transition.state, transition.action, weights);
    let mut next = weights.clone();
    features.add_scaled(&transition.state, transition.action, alpha * td, &mut next);
    if !next.is_finite() {
        return Err(Error::Divergence { step });
    }
    Ok(next)
}

/// Where the learner's transitions come from.
pub trait TransitionSource<S> {
    /// Produces the transition consumed by update `step`. `weights` are the
    /// current parameters, for sources that act on them.
    fn next_transition(&mut self, weights: &Weights, step: usize) -> Result<TransitionSample<S>>;
}

/// i.i.d. pairs from μ, each followed by one MDP transition.
pub struct IidSource<'a, R> {
    mdp: &'a TabularMdp,
    mu: &'a StateActionDistribution,
    rng: R,
}

impl<'a, R: Rng> IidSource<'a, R> {
    pub fn new(mdp: &'a TabularMdp, mu: &'a StateActionDistribution, rng: R) -> Result<Self> {
        if mu.num_states() != mdp.num_states() || mu.num_actions() != mdp.num_actions() {
            return Err(Error::Config("data distribution does not match the MDP".into()));
        }
        Ok(Self { mdp, mu, rng })
    }
}

impl<R: Rng> TransitionSource<usize> for IidSource<'_, R> {
    fn next_transition(&mut self, _weights: &Weights, _step: usize) -> Result<TransitionSample<usize>> {
        let (s, a) = self.mu.sample(&mut self.rng);
        sample_transition(self.mdp, s, a, &mut self.rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunStatus {
    /// All steps ran and the weights were still moving at the end.
    Completed,
    /// All steps ran and the weights settled over the last 5% of the run.
    Converged,
    /// `‖ω‖₂` crossed the ceiling, or an update produced a non-finite value.
    Divergent,
}

impl RunStatus {
    pub fn code(self) -> u8 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::Converged => 1,
            RunStatus::Divergent => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RunStatus::Completed),
            1 => Some(RunStatus::Converged),
            2 => Some(RunStatus::Divergent),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::Converged => "converged",
            RunStatus::Divergent => "divergent",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearningOutcome {
    pub weights: Weights,
    pub status: RunStatus,
    /// Updates applied before the run stopped.
    pub steps: usize,
}

/// Relative change over the trailing window below which a finished run is
/// reported as converged.
const SETTLE_TOLERANCE: f64 = 1e-3;

/// Runs `config.total_steps` updates. `planner` expands the target tree and
/// `monitor` is called after every update with the step count and weights.
///
/// Crossing the divergence ceiling ends the run early with
/// [`RunStatus::Divergent`]; it is not an error.
pub fn run_learning<S, F, Src, R, M>(
    planner: &mut S,
    features: &F,
    source: &mut Src,
    config: &LearnerConfig,
    initial: Weights,
    rng: &mut R,
    mut monitor: M,
) -> Result<LearningOutcome>
where
    S: Simulator,
    F: FeatureMap<S::State>,
    Src: TransitionSource<S::State>,
    R: Rng + ?Sized,
    M: FnMut(usize, &Weights) -> Result<()>,
{
    config.validate()?;
    initial.check_dim(features.dim())?;
    let total = config.total_steps;
    let window = total.div_ceil(20);
    let mut reference = (total == window).then(|| initial.clone());
    let mut weights = initial;
    for t in 0..total {
        let transition = source.next_transition(&weights, t)?;
        let target = sample_target(
            planner,
            features,
            &weights,
            &transition,
            config.depth,
            config.discount,
            rng,
        )?;
        let alpha = config.learning_rate.at(t);
        weights = match update_step(&weights, features, &transition, &target, alpha, t + 1) {
            Ok(w) => w,
            Err(Error::Divergence { .. }) => {
                return Ok(LearningOutcome {
                    weights,
                    status: RunStatus::Divergent,
                    steps: t + 1,
                })
            }
            Err(e) => return Err(e),
        };
        monitor(t + 1, &weights)?;
        if weights.norm() > config.divergence_ceiling {
            return Ok(LearningOutcome {
                weights,
                status: RunStatus::Divergent,
                steps: t + 1,
            });
        }
        if t + 1 == total - window {
            reference = Some(weights.clone());
        }
    }
    let settled = reference
        .map(|r| weights.distance(&r) <= SETTLE_TOLERANCE * weights.norm().max(1.0))
        .unwrap_or(false);
    Ok(LearningOutcome {
        weights,
        status: if settled {
            RunStatus::Converged
        } else {
            RunStatus::Completed
        },
        steps: total,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::envs::make_w2w;
    use crate::mdp::TabularSimulator;

    fn target(value: f64) -> SampledTarget {
        SampledTarget {
            value,
            nodes_expanded: 1,
            depth: 1,
        }
    }

    fn w2w_sample(state: usize) -> TransitionSample<usize> {
        TransitionSample {
            state,
            action: 0,
            reward: 0.0,
            next_state: 1,
            terminal: false,
        }
    }

    #[test]
    fn update_arithmetic() {
        let b = make_w2w();
        let w = Weights::from_vec(vec![1.0]);
        let up = update_step(&w, &b.features, &w2w_sample(0), &target(1.8), 0.01, 1).unwrap();
        assert!((up.as_slice()[0] - 1.008).abs() < 1e-12);
        let down = update_step(&w, &b.features, &w2w_sample(1), &target(1.8), 0.01, 1).unwrap();
        assert!((down.as_slice()[0] - 0.996).abs() < 1e-12);
        let zero = update_step(&Weights::zeros(1), &b.features, &w2w_sample(0), &target(0.0), 0.01, 1).unwrap();
        assert_eq!(zero.as_slice(), &[0.0]);
    }

    #[test]
    fn non_finite_update_signals_divergence() {
        let b = make_w2w();
        let w = Weights::from_vec(vec![f64::MAX]);
        let err = update_step(&w, &b.features, &w2w_sample(1), &target(f64::MAX), 1.0, 7).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 7 }));
    }

    #[test]
    fn schedules() {
        assert_eq!(LearningRate::Constant(0.1).at(1000), 0.1);
        let rm = LearningRate::RobbinsMonro {
            alpha0: 0.5,
            exponent: 1.0,
        };
        assert_eq!(rm.at(0), 0.5);
        assert_eq!(rm.at(1), 0.25);
        assert!(LearningRate::RobbinsMonro {
            alpha0: 0.5,
            exponent: 0.5
        }
        .validate()
        .is_err());
        assert!(LearningRate::Constant(0.0).validate().is_err());
    }

    #[test]
    fn w2w_depth_one_hits_the_ceiling() {
        let b = make_w2w();
        let mut planner = TabularSimulator::new(b.mdp.clone());
        let mut source = IidSource::new(&b.mdp, &b.mu, ChaCha8Rng::seed_from_u64(1)).unwrap();
        let config = LearnerConfig::new(1, 0.9, LearningRate::Constant(0.01), 20_000);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = run_learning(
            &mut planner,
            &b.features,
            &mut source,
            &config,
            Weights::constant(1, 1.0),
            &mut rng,
            |_, _| Ok(()),
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::Divergent);
        assert!(out.steps < 20_000);
    }

    #[test]
    fn status_codes_round_trip() {
        for s in [RunStatus::Completed, RunStatus::Converged, RunStatus::Divergent] {
            assert_eq!(RunStatus::from_code(s.code()), Some(s));
        }
        assert_eq!(RunStatus::from_code(9), None);
    }
}
