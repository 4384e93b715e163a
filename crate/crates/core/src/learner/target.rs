//! The n-step full-breadth target and its exact expectation on tabular MDPs.

use rand::Rng;

use crate::features::{FeatureMap, Weights};
use crate::mdp::{QTable, Simulator, TabularMdp, TransitionSample};
use crate::{max_value, Error, Result};

/// Largest `(|X|·|A|)ⁿ` accepted by the exact enumeration.
pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Clone, Debug, PartialEq)]
pub struct SampledTarget {
    pub value: f64,
    /// Leaf q-evaluations plus simulator steps.
    pub nodes_expanded: usize,
    pub depth: usize,
}

/// `Σ_{i=1..n} |A|^i`, the size of an untruncated tree.
pub fn full_tree_size(num_actions: usize, depth: usize) -> usize {
    let mut total = 0usize;
    let mut level = 1usize;
    for _ in 0..depth {
        level = level.saturating_mul(num_actions);
        total = total.saturating_add(level);
    }
    total
}

/// Builds `τⁿ = r + γ·V_n(x')` for an observed transition.
///
/// `V_1(x) = max_a q_ω(x, a)`. Deeper levels try every action once from `x`
/// through `set_state` and `step` and back up `r̂ + γ·V_{d−1}(x̂)`; terminal
/// successors contribute zero and are not expanded. The simulator is left in
/// whatever state the last expansion produced.
pub fn sample_target<S, F, R>(
    sim: &mut S,
    features: &F,
    weights: &Weights,
    transition: &TransitionSample<S::State>,
    depth: usize,
    discount: f64,
    rng: &mut R,
) -> Result<SampledTarget>
where
    S: Simulator,
    F: FeatureMap<S::State>,
    R: Rng + ?Sized,
{
    if depth == 0 {
        return Err(Error::Argument("target depth must be at least 1".into()));
    }
    weights.check_dim(features.dim())?;
    let mut nodes = 0;
    let tail = if transition.terminal {
        0.0
    } else {
        tree_value(
            sim,
            features,
            weights,
            &transition.next_state,
            depth,
            discount,
            rng,
            &mut nodes,
        )?
    };
    Ok(SampledTarget {
        value: transition.reward + discount * tail,
        nodes_expanded: nodes,
        depth,
    })
}

#[allow(clippy::too_many_arguments)]
fn tree_value<S, F, R>(
    sim: &mut S,
    features: &F,
    weights: &Weights,
    state: &S::State,
    depth: usize,
    discount: f64,
    rng: &mut R,
    nodes: &mut usize,
) -> Result<f64>
where
    S: Simulator,
    F: FeatureMap<S::State>,
    R: Rng + ?Sized,
{
    let actions = sim.action_count();
    if depth == 1 {
        *nodes += actions;
        return Ok(max_value(&features.q_values(state, weights)));
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..actions {
        sim.set_state(state)?;
        let step = sim.step(a, rng)?;
        *nodes += 1;
        let below = if step.terminal {
            0.0
        } else {
            tree_value(
                sim,
                features,
                weights,
                &step.next_state,
                depth - 1,
                discount,
                rng,
                nodes,
            )?
        };
        best = best.max(step.reward + discount * below);
    }
    Ok(best)
}

/// A finite distribution as sorted `(value, probability)` atoms.
type Atoms = Vec<(f64, f64)>;

fn normalise(mut atoms: Atoms) -> Atoms {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Atoms = Vec::with_capacity(atoms.len());
    for (v, p) in atoms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += p,
            _ => out.push((v, p)),
        }
    }
    out
}

/// Distribution of the maximum of independent variables, via the product of
/// their CDFs over the union of supports.
fn independent_max(parts: &[Atoms]) -> Atoms {
    let values = normalise(parts.iter().flatten().map(|&(v, _)| (v, 0.0)).collect());
    let mut cursors = vec![0usize; parts.len()];
    let mut cdfs = vec![0.0f64; parts.len()];
    let mut out = Vec::with_capacity(values.len());
    let mut previous = 0.0;
    for (v, _) in values {
        for (i, part) in parts.iter().enumerate() {
            while cursors[i] < part.len() && part[cursors[i]].0 <= v {
                cdfs[i] += part[cursors[i]].1;
                cursors[i] += 1;
            }
        }
        let cdf: f64 = cdfs.iter().product();
        let mass = cdf - previous;
        if mass > 0.0 {
            out.push((v, mass));
        }
        previous = cdf;
    }
    out
}

fn mean(atoms: &Atoms) -> f64 {
    atoms.iter().map(|(v, p)| v * p).sum()
}

fn check_enumeration(mdp: &TabularMdp, depth: usize) -> Result<()> {
    if depth == 0 {
        return Err(Error::Argument("target depth must be at least 1".into()));
    }
    let paths = ((mdp.num_states() * mdp.num_actions()) as f64).powi(depth as i32);
    if paths > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            paths,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

fn reward_atoms(mdp: &TabularMdp, state: usize, action: usize) -> Atoms {
    let r = mdp.expected_reward(state, action);
    match mdp.reward_noise(state, action) {
        Some(noise) => noise.outcomes.iter().map(|&(o, p)| (r + o, p)).collect(),
        None => vec![(r, 1.0)],
    }
}

/// Distributions of `V_d(x)` for every state, built bottom-up to `depth`.
fn value_distributions<F: FeatureMap<usize>>(
    mdp: &TabularMdp,
    features: &F,
    weights: &Weights,
    depth: usize,
) -> Vec<Atoms> {
    let gamma = mdp.discount();
    let mut current: Vec<Atoms> = (0..mdp.num_states())
        .map(|x| {
            if mdp.is_terminal(x) {
                vec![(0.0, 1.0)]
            } else {
                vec![(max_value(&features.q_values(&x, weights)), 1.0)]
            }
        })
        .collect();
    for _ in 1..depth {
        let next = (0..mdp.num_states())
            .map(|x| {
                if mdp.is_terminal(x) {
                    return vec![(0.0, 1.0)];
                }
                let per_action: Vec<Atoms> = (0..mdp.num_actions())
                    .map(|a| {
                        let rewards = reward_atoms(mdp, x, a);
                        let mut atoms = Vec::new();
                        for (succ, &p) in mdp.transition_row(x, a).iter().enumerate() {
                            if p == 0.0 {
                                continue;
                            }
                            for &(r, pr) in &rewards {
                                for &(v, pv) in &current[succ] {
                                    atoms.push((r + gamma * v, p * pr * pv));
                                }
                            }
                        }
                        normalise(atoms)
                    })
                    .collect();
                independent_max(&per_action)
            })
            .collect();
        current = next;
    }
    current
}

fn expected_from(mdp: &TabularMdp, means: &[f64], state: usize, action: usize) -> f64 {
    let tail: f64 = mdp
        .transition_row(state, action)
        .iter()
        .zip(means)
        .filter(|(p, _)| **p != 0.0)
        .map(|(p, v)| p * v)
        .sum();
    mdp.expected_reward(state, action) + mdp.discount() * tail
}

/// `E[τⁿ | x, a]` by exact enumeration of every chance outcome of the tree.
pub fn expected_sampled_target<F: FeatureMap<usize>>(
    mdp: &TabularMdp,
    features: &F,
    weights: &Weights,
    state: usize,
    action: usize,
    depth: usize,
) -> Result<f64> {
    mdp.check_pair(state, action)?;
    let table = expected_sampled_table(mdp, features, weights, depth)?;
    Ok(table.get(state, action))
}

/// [`expected_sampled_target`] for every pair at once.
pub fn expected_sampled_table<F: FeatureMap<usize>>(
    mdp: &TabularMdp,
    features: &F,
    weights: &Weights,
    depth: usize,
) -> Result<QTable> {
    check_enumeration(mdp, depth)?;
    weights.check_dim(features.dim())?;
    let means: Vec<f64> = value_distributions(mdp, features, weights, depth)
        .iter()
        .map(mean)
        .collect();
    Ok(QTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        expected_from(mdp, &means, s, a)
    }))
}
