//! Feature maps, linear q-functions and the μ-weighted projection.

mod gaussian;
mod projection;
mod tabular;

use crate::{Error, Result};

pub use gaussian::{build_gaussian_features, GaussianFeatures, Observation, PhiMaxEstimate};
pub use projection::{covariance, expand, mu_norm, project, CovarianceStats, Projector, MAX_CONDITION};
pub use tabular::{counterexample_features, Counterexample, TabularFeatures};

/// Parameter vector ω of a linear q-function `q_ω(x, a) = φ(x, a)ᵀω`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Weights) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, phi: &[f64]) -> f64 {
        self.0.iter().zip(phi).map(|(w, p)| w * p).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.0.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                actual: self.0.len(),
            });
        }
        Ok(())
    }
}

/// Maps state-action pairs to vectors in ℝᵏ.
pub trait FeatureMap<S: ?Sized> {
    fn dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// Writes `φ(state, action)` into `out`, which has length [`dim`](Self::dim).
    fn write_features(&self, state: &S, action: usize, out: &mut [f64]);

    fn features(&self, state: &S, action: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write_features(state, action, &mut out);
        out
    }

    fn q_value(&self, state: &S, action: usize, weights: &Weights) -> f64 {
        weights.dot(&self.features(state, action))
    }

    /// `q_ω(state, a)` for every action.
    fn q_values(&self, state: &S, weights: &Weights) -> Vec<f64> {
        (0..self.num_actions())
            .map(|a| self.q_value(state, a, weights))
            .collect()
    }

    /// `weights += scale · φ(state, action)`.
    fn add_scaled(&self, state: &S, action: usize, scale: f64, weights: &mut Weights) {
        let phi = self.features(state, action);
        for (w, p) in weights.as_mut_slice().iter_mut().zip(phi) {
            *w += scale * p;
        }
    }
}

/// `φ(state, action)ᵀω`, rejecting weight vectors of the wrong length.
pub fn q_value<S: ?Sized, F: FeatureMap<S>>(features: &F, weights: &Weights, state: &S, action: usize) -> Result<f64> {
    weights.check_dim(features.dim())?;
    if action >= features.num_actions() {
        return Err(Error::Index {
            what: "action",
            index: action,
            limit: features.num_actions(),
        });
    }
    Ok(features.q_value(state, action, weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn w2w_q_values() {
        let f = counterexample_features(Counterexample::W2w);
        let w = Weights::from_vec(vec![3.0]);
        assert_eq!(q_value(&f, &w, &0, 0).unwrap(), 3.0);
        assert_eq!(q_value(&f, &w, &1, 0).unwrap(), 6.0);
    }

    #[test]
    fn zero_weights_give_zero() {
        let f = counterexample_features(Counterexample::Star);
        let w = Weights::zeros(13);
        for s in 0..6 {
            for a in 0..2 {
                assert_eq!(q_value(&f, &w, &s, a).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn star_first_basis_vector() {
        let f = counterexample_features(Counterexample::Star);
        let mut e1 = vec![0.0; 13];
        e1[0] = 1.0;
        let w = Weights::from_vec(e1);
        assert_eq!(q_value(&f, &w, &0, 0).unwrap(), 1.0);
        assert_eq!(q_value(&f, &w, &0, 1).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let f = counterexample_features(Counterexample::W2w);
        let w = Weights::zeros(2);
        assert!(matches!(
            q_value(&f, &w, &0, 0),
            Err(Error::Dimension { expected: 1, actual: 2 })
        ));
    }
}
