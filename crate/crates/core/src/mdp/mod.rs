//! Finite MDPs, exact value iteration and the simulator contract.

mod text;

use std::fmt;

use rand::Rng;

use crate::{argmax, max_value, Error, Result};

pub use text::{parse_mdp, write_mdp};

/// Tolerance on transition-row sums and distribution totals.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Action values for every state-action pair of a finite MDP, row-major by state.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::constant(num_states, num_actions, 0.0)
    }

    pub fn constant(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        Self {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn from_vec(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Dimension {
                expected: num_states * num_actions,
                actual: values.len(),
            });
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// `max_a q(state, a)`.
    pub fn state_value(&self, state: usize) -> f64 {
        max_value(self.row(state))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖self − other‖_∞`.
    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Entry-wise `self − other`.
    pub fn sub(&self, other: &QTable) -> QTable {
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Zero-mean discrete perturbation added to the expected reward of one pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardNoise {
    pub outcomes: Vec<(f64, f64)>,
}

impl RewardNoise {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(offset, p) in &self.outcomes {
            acc += p;
            if u < acc {
                return offset;
            }
        }
        self.outcomes.last().map_or(0.0, |o| o.0)
    }
}

/// A finite MDP with explicit transition and reward tables.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `transition[(s * A + a) * S + s']`.
    transition: Vec<f64>,
    expected_reward: Vec<f64>,
    reward_noise: Option<Vec<Option<RewardNoise>>>,
    discount: f64,
    terminal: Vec<bool>,
}

impl TabularMdp {
    /// Builds an MDP, checking only table shapes. Use [`validate_mdp`] for the
    /// probabilistic invariants.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        expected_reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Argument("an MDP needs at least one state and one action".into()));
        }
        let pairs = num_states * num_actions;
        if transition.len() != pairs * num_states {
            return Err(Error::Dimension {
                expected: pairs * num_states,
                actual: transition.len(),
            });
        }
        if expected_reward.len() != pairs {
            return Err(Error::Dimension {
                expected: pairs,
                actual: expected_reward.len(),
            });
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            expected_reward,
            reward_noise: None,
            discount,
            terminal: vec![false; num_states],
        })
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Argument(format!("discount must lie in [0, 1), got {discount}")));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn with_terminal(mut self, states: &[usize]) -> Result<Self> {
        for &s in states {
            self.check_state(s)?;
            self.terminal[s] = true;
        }
        Ok(self)
    }

    pub fn with_reward_noise(mut self, state: usize, action: usize, noise: RewardNoise) -> Result<Self> {
        self.check_pair(state, action)?;
        let pairs = self.num_pairs();
        let table = self.reward_noise.get_or_insert_with(|| vec![None; pairs]);
        table[state * self.num_actions + action] = Some(noise);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn expected_reward(&self, state: usize, action: usize) -> f64 {
        self.expected_reward[state * self.num_actions + action]
    }

    pub fn reward_noise(&self, state: usize, action: usize) -> Option<&RewardNoise> {
        self.reward_noise
            .as_ref()
            .and_then(|t| t[state * self.num_actions + action].as_ref())
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal.iter().enumerate().filter(|(_, &t)| t).map(|(s, _)| s)
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::Index {
                what: "state",
                index: state,
                limit: self.num_states,
            });
        }
        Ok(())
    }

    pub fn check_pair(&self, state: usize, action: usize) -> Result<()> {
        self.check_state(state)?;
        if action >= self.num_actions {
            return Err(Error::Index {
                what: "action",
                index: action,
                limit: self.num_actions,
            });
        }
        Ok(())
    }

    /// Draws a successor of `(state, action)` by inverting the row CDF.
    pub fn sample_next_state<R: Rng + ?Sized>(&self, state: usize, action: usize, rng: &mut R) -> usize {
        let row = self.transition_row(state, action);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (next, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = next;
                if u < acc {
                    return next;
                }
            }
        }
        last
    }
}

/// One violated invariant of a [`TabularMdp`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    NonFiniteReward {
        state: usize,
        action: usize,
    },
    Discount(f64),
    TerminalNotAbsorbing {
        state: usize,
        action: usize,
    },
    TerminalReward {
        state: usize,
        action: usize,
        reward: f64,
    },
    RewardNoise {
        state: usize,
        action: usize,
        reason: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row ({state}, {action}) sums to {sum}")
            }
            Violation::NegativeProbability {
                state,
                action,
                next,
                value,
            } => write!(f, "P({next} | {state}, {action}) = {value} is negative"),
            Violation::NonFiniteReward { state, action } => {
                write!(f, "reward of ({state}, {action}) is not finite")
            }
            Violation::Discount(g) => write!(f, "discount {g} outside [0, 1)"),
            Violation::TerminalNotAbsorbing { state, action } => {
                write!(f, "terminal state {state} does not self-loop under action {action}")
            }
            Violation::TerminalReward { state, action, reward } => {
                write!(f, "terminal state {state} pays reward {reward} under action {action}")
            }
            Violation::RewardNoise { state, action, reason } => {
                write!(f, "reward noise of ({state}, {action}): {reason}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks row sums, non-negativity, the discount range, terminal absorption and
/// reward-noise tables. Never fails; the report lists every violation found.
pub fn validate_mdp(mdp: &TabularMdp) -> ValidationReport {
    let mut violations = Vec::new();
    if !(0.0..1.0).contains(&mdp.discount) {
        violations.push(Violation::Discount(mdp.discount));
    }
    for s in 0..mdp.num_states {
        for a in 0..mdp.num_actions {
            let row = mdp.transition_row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if p < 0.0 || p.is_nan() {
                    violations.push(Violation::NegativeProbability {
                        state: s,
                        action: a,
                        next,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= PROBABILITY_TOLERANCE) {
                violations.push(Violation::RowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
            let r = mdp.expected_reward(s, a);
            if !r.is_finite() {
                violations.push(Violation::NonFiniteReward { state: s, action: a });
            }
            if mdp.terminal[s] {
                if (row[s] - 1.0).abs() > PROBABILITY_TOLERANCE {
                    violations.push(Violation::TerminalNotAbsorbing { state: s, action: a });
                }
                if r != 0.0 || mdp.reward_noise(s, a).is_some() {
                    violations.push(Violation::TerminalReward {
                        state: s,
                        action: a,
                        reward: r,
                    });
                }
            }
            if let Some(noise) = mdp.reward_noise(s, a) {
                if let Some(reason) = noise_problem(noise) {
                    violations.push(Violation::RewardNoise {
                        state: s,
                        action: a,
                        reason,
                    });
                }
            }
        }
    }
    ValidationReport { violations }
}

fn noise_problem(noise: &RewardNoise) -> Option<String> {
    if noise.outcomes.is_empty() {
        return Some("no outcomes".into());
    }
    if noise.outcomes.iter().any(|&(o, p)| !o.is_finite() || !(p >= 0.0)) {
        return Some("offsets must be finite and probabilities non-negative".into());
    }
    let total: f64 = noise.outcomes.iter().map(|o| o.1).sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Some(format!("probabilities sum to {total}"));
    }
    let mean: f64 = noise.outcomes.iter().map(|&(o, p)| o * p).sum();
    if mean.abs() > 1e-12 {
        return Some(format!("mean offset {mean} is not zero"));
    }
    None
}

/// One observed transition `(x_t, a_t, r_t, x_{t+1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionSample<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next_state: S,
    /// True when `next_state` is terminal; the target then bootstraps from zero.
    pub terminal: bool,
}

/// Samples a transition of a tabular MDP. The reward is the expected reward
/// plus a draw from the pair's noise table, when it has one.
pub fn sample_transition<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    state: usize,
    action: usize,
    rng: &mut R,
) -> Result<TransitionSample<usize>> {
    mdp.check_pair(state, action)?;
    let next_state = mdp.sample_next_state(state, action, rng);
    let mut reward = mdp.expected_reward(state, action);
    if let Some(noise) = mdp.reward_noise(state, action) {
        reward += noise.sample(rng);
    }
    Ok(TransitionSample {
        state,
        action,
        reward,
        next_state,
        terminal: mdp.is_terminal(next_state),
    })
}

/// Value of a successor state under `q`. Terminal states are worth zero.
pub(crate) fn successor_value(mdp: &TabularMdp, q: &QTable, next: usize) -> f64 {
    if mdp.is_terminal(next) {
        0.0
    } else {
        q.state_value(next)
    }
}

/// One application of the Bellman optimality operator, by exact enumeration.
pub(crate) fn bellman_backup(mdp: &TabularMdp, q: &QTable) -> QTable {
    let values: Vec<f64> = (0..mdp.num_states).map(|next| successor_value(mdp, q, next)).collect();
    QTable::from_fn(mdp.num_states, mdp.num_actions, |s, a| {
        let expected: f64 = mdp
            .transition_row(s, a)
            .iter()
            .zip(&values)
            .filter(|(p, _)| **p != 0.0)
            .map(|(p, v)| p * v)
            .sum();
        mdp.expected_reward(s, a) + mdp.discount * expected
    })
}

/// Iterates the Bellman operator from zero until `‖Hq − q‖_∞ ≤ tolerance` and
/// returns the last backup, which is the closer of the two to `q*`.
pub fn value_iteration(mdp: &TabularMdp, tolerance: f64, max_iters: usize) -> Result<QTable> {
    if !(tolerance > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tolerance}")));
    }
    let mut q = QTable::zeros(mdp.num_states, mdp.num_actions);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = bellman_backup(mdp, &q);
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tolerance {
            return Ok(q);
        }
    }
    Err(Error::IterationLimit {
        iterations: max_iters,
        residual,
    })
}

/// Greedy action per state, ties broken towards the lowest action index.
pub fn greedy_policy(q: &QTable) -> Vec<usize> {
    (0..q.num_states()).map(|s| argmax(q.row(s))).collect()
}

/// A probability distribution over state-action pairs (the data distribution μ).
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionDistribution {
    num_states: usize,
    num_actions: usize,
    weights: Vec<f64>,
    mu_min: f64,
    cumulative: Vec<f64>,
}

impl StateActionDistribution {
    pub fn new(num_states: usize, num_actions: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != num_states * num_actions {
            return Err(Error::Dimension {
                expected: num_states * num_actions,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Argument(
                "distribution weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::Argument(format!("distribution weights sum to {total}, not 1")));
        }
        let mu_min = weights
            .iter()
            .copied()
            .filter(|w| *w > 0.0)
            .fold(f64::INFINITY, f64::min);
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            num_states,
            num_actions,
            weights,
            mu_min,
            cumulative,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let pairs = num_states * num_actions;
        Self::new(num_states, num_actions, vec![1.0 / pairs as f64; pairs]).expect("uniform weights are a distribution")
    }

    /// Uniform over states, with the given per-state action probabilities.
    pub fn uniform_states(num_states: usize, action_probs: &[f64]) -> Result<Self> {
        let per_state = 1.0 / num_states as f64;
        let weights = (0..num_states)
            .flat_map(|_| action_probs.iter().map(move |p| p * per_state))
            .collect();
        Self::new(num_states, action_probs.len(), weights)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn weight(&self, state: usize, action: usize) -> f64 {
        self.weights[state * self.num_actions + action]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Smallest positive weight.
    pub fn mu_min(&self) -> f64 {
        self.mu_min
    }

    pub fn is_full_support(&self) -> bool {
        self.weights.iter().all(|w| *w > 0.0)
    }

    /// Iterates `(state, action, weight)` over the support.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(move |(i, &w)| (i / self.num_actions, i % self.num_actions, w))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        let idx = if idx >= self.weights.len() {
            // u landed in the rounding gap above the last cumulative weight
            self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
        } else {
            idx
        };
        (idx / self.num_actions, idx % self.num_actions)
    }
}

/// Result of one simulator step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<S> {
    pub reward: f64,
    pub next_state: S,
    pub terminal: bool,
}

/// A resettable, state-settable environment. Used both to act and to expand the
/// planning tree behind the multi-step target.
pub trait Simulator {
    type State: Clone + fmt::Debug;

    fn action_count(&self) -> usize;

    /// Samples an initial state and makes it current.
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Self::State;

    /// Makes `state` current. Fails on states outside the environment's domain.
    fn set_state(&mut self, state: &Self::State) -> Result<()>;

    fn state(&self) -> Self::State;

    /// Advances the current state. Deterministic given the rng state.
    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step<Self::State>>;
}

/// [`Simulator`] view of a [`TabularMdp`].
#[derive(Clone, Debug)]
pub struct TabularSimulator {
    mdp: TabularMdp,
    current: usize,
}

impl TabularSimulator {
    pub fn new(mdp: TabularMdp) -> Self {
        Self { mdp, current: 0 }
    }

    pub fn mdp(&self) -> &TabularMdp {
        &self.mdp
    }
}

impl Simulator for TabularSimulator {
    type State = usize;

    fn action_count(&self) -> usize {
        self.mdp.num_actions
    }

    /// Uniform over non-terminal states.
    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        let live: Vec<usize> = (0..self.mdp.num_states).filter(|&s| !self.mdp.is_terminal(s)).collect();
        self.current = if live.is_empty() {
            0
        } else {
            live[rng.random_range(0..live.len())]
        };
        self.current
    }

    fn set_state(&mut self, state: &usize) -> Result<()> {
        self.mdp
            .check_state(*state)
            .map_err(|_| Error::State(format!("state {state} outside 0..{}", self.mdp.num_states)))?;
        self.current = *state;
        Ok(())
    }

    fn state(&self) -> usize {
        self.current
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Step<usize>> {
        let t = sample_transition(&self.mdp, self.current, action, rng)?;
        self.current = t.next_state;
        Ok(Step {
            reward: t.reward,
            next_state: t.next_state,
            terminal: t.terminal,
        })
    }
}
