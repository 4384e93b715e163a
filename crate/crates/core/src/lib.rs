//! Multi-step Q-learning with linear function approximation.
//!
//! The crate is split along the lines of the math it implements:
//!
//! - [`mdp`]: finite MDPs, exact value iteration and the [`Simulator`] contract.
//! - [`features`]: feature maps, linear q-functions and the weighted projection.
//! - [`bellman`]: exact Bellman / multi-Bellman operators, contraction constants,
//!   projected fixed points, error bounds and ODE diagnostics.
//! - [`learner`]: the sampled n-step full-breadth target and the stochastic update.
//! - [`envs`]: the two tabular counter-examples and three classic-control tasks.
//! - [`harness`]: experiment configs, replay/ε-greedy data collection, CSV
//!   records and seed aggregation.

// NaN must fail these guards, hence `!(x > 0.0)` rather than `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bellman;
pub mod envs;
pub mod error;
pub mod features;
pub mod harness;
pub mod learner;
pub mod mdp;

pub use error::{Error, Result};
pub use features::{FeatureMap, Weights};
pub use mdp::{QTable, Simulator, StateActionDistribution, TabularMdp, TransitionSample};

/// Index of the largest entry; ties go to the lowest index.
///
/// Returns 0 for an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Largest entry of a slice, `-inf` when empty.
pub fn max_value(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
