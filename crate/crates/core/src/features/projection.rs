use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use super::{FeatureMap, TabularFeatures, Weights};
use crate::mdp::{QTable, StateActionDistribution};
use crate::{Error, Result};

/// Largest condition number of Σ still treated as invertible.
pub const MAX_CONDITION: f64 = 1e12;

/// `Σ = E_μ[φφᵀ]` and the spectral constants derived from it.
#[derive(Clone, Debug)]
pub struct CovarianceStats {
    pub sigma: DMatrix<f64>,
    pub sigma_inverse: DMatrix<f64>,
    /// `‖Σ⁻¹‖₂ = 1 / λ_min(Σ)`.
    pub sigma_max: f64,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub condition: f64,
}

fn check_domain(features: &TabularFeatures, mu: &StateActionDistribution) -> Result<()> {
    if features.num_states() != mu.num_states() {
        return Err(Error::Dimension {
            expected: features.num_states(),
            actual: mu.num_states(),
        });
    }
    if FeatureMap::<usize>::num_actions(features) != mu.num_actions() {
        return Err(Error::Dimension {
            expected: FeatureMap::<usize>::num_actions(features),
            actual: mu.num_actions(),
        });
    }
    Ok(())
}

fn sigma_matrix(features: &TabularFeatures, mu: &StateActionDistribution) -> DMatrix<f64> {
    let k = FeatureMap::<usize>::dim(features);
    let mut sigma = DMatrix::zeros(k, k);
    for (s, a, w) in mu.support() {
        let phi = features.row(s, a);
        for i in 0..k {
            let wi = w * phi[i];
            if wi == 0.0 {
                continue;
            }
            for j in i..k {
                sigma[(i, j)] += wi * phi[j];
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            sigma[(i, j)] = sigma[(j, i)];
        }
    }
    sigma
}

/// Computes Σ by exact enumeration over μ's support and inverts it.
///
/// Fails when μ misses a pair or when Σ has a non-positive eigenvalue or a
/// condition number above [`MAX_CONDITION`].
pub fn covariance(features: &TabularFeatures, mu: &StateActionDistribution) -> Result<CovarianceStats> {
    check_domain(features, mu)?;
    if !mu.is_full_support() {
        return Err(Error::NotFullSupport(0.0));
    }
    let sigma = sigma_matrix(features, mu);
    let eigen = SymmetricEigen::new(sigma.clone());
    let lambda_max = eigen.eigenvalues.max();
    let lambda_min = eigen.eigenvalues.min();
    let condition = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    if !(lambda_min > 0.0) || !(condition <= MAX_CONDITION) {
        return Err(Error::SingularCovariance { lambda_min, condition });
    }
    let sigma_inverse = sigma
        .clone()
        .cholesky()
        .ok_or(Error::SingularCovariance { lambda_min, condition })?
        .inverse();
    Ok(CovarianceStats {
        sigma,
        sigma_inverse,
        sigma_max: 1.0 / lambda_min,
        lambda_max,
        lambda_min,
        condition,
    })
}

/// The projection Π realised in weight space, with Σ factorised once.
#[derive(Clone, Debug)]
pub struct Projector<'a> {
    features: &'a TabularFeatures,
    mu: &'a StateActionDistribution,
    stats: CovarianceStats,
    factor: Cholesky<f64, Dyn>,
}

impl<'a> Projector<'a> {
    pub fn new(features: &'a TabularFeatures, mu: &'a StateActionDistribution) -> Result<Self> {
        let stats = covariance(features, mu)?;
        let factor = stats.sigma.clone().cholesky().ok_or(Error::SingularCovariance {
            lambda_min: stats.lambda_min,
            condition: stats.condition,
        })?;
        Ok(Self {
            features,
            mu,
            stats,
            factor,
        })
    }

    pub fn stats(&self) -> &CovarianceStats {
        &self.stats
    }

    pub fn features(&self) -> &'a TabularFeatures {
        self.features
    }

    pub fn mu(&self) -> &'a StateActionDistribution {
        self.mu
    }

    /// `E_μ[φ · q]`.
    pub fn correlation(&self, q: &QTable) -> DVector<f64> {
        let k = FeatureMap::<usize>::dim(self.features);
        let mut b = DVector::zeros(k);
        for (s, a, w) in self.mu.support() {
            let wq = w * q.get(s, a);
            for (bi, p) in b.iter_mut().zip(self.features.row(s, a)) {
                *bi += wq * p;
            }
        }
        b
    }

    /// Solves `Σ ω = v`.
    pub fn solve(&self, v: &DVector<f64>) -> Weights {
        Weights::from_vec(self.factor.solve(v).as_slice().to_vec())
    }

    /// `ω̂ = Σ⁻¹ E_μ[φ · q]`.
    pub fn project(&self, q: &QTable) -> Weights {
        self.solve(&self.correlation(q))
    }

    /// `Πq` as a table.
    pub fn project_table(&self, q: &QTable) -> QTable {
        expand(self.features, &self.project(q))
    }
}

pub fn project(features: &TabularFeatures, mu: &StateActionDistribution, q: &QTable) -> Result<Weights> {
    Ok(Projector::new(features, mu)?.project(q))
}

/// `√E_μ[q²]`.
pub fn mu_norm(mu: &StateActionDistribution, q: &QTable) -> f64 {
    mu.support()
        .map(|(s, a, w)| w * q.get(s, a) * q.get(s, a))
        .sum::<f64>()
        .sqrt()
}

/// `q_ω` as a table.
pub fn expand(features: &TabularFeatures, weights: &Weights) -> QTable {
    QTable::from_fn(
        features.num_states(),
        FeatureMap::<usize>::num_actions(features),
        |s, a| weights.dot(features.row(s, a)),
    )
}
