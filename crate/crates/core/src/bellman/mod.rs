//! Exact operators on tabular MDPs: `H`, `Hⁿ`, the projected map `ΠHⁿ`, its
//! contraction constants and fixed point, and the ODE diagnostics of the
//! learner's expected update.

use nalgebra::DVector;
use rand::Rng;

use crate::features::{covariance, expand, mu_norm, FeatureMap, Projector, TabularFeatures, Weights};
use crate::learner::expected_sampled_table;
use crate::mdp::{bellman_backup, value_iteration, QTable, StateActionDistribution, TabularMdp};
use crate::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_PAIRS: usize = 200;
/// Half-width of the box random tables and weight probes are drawn from.
pub const PROBE_RANGE: f64 = 10.0;

/// `(Hq)(x, a) = r(x, a) + γ Σ P(x'|x, a) max_a' q(x', a')`. Terminal
/// successors are worth zero.
pub fn apply_bellman(mdp: &TabularMdp, q: &QTable) -> Result<QTable> {
    check_table(mdp, q)?;
    Ok(bellman_backup(mdp, q))
}

/// `Hⁿq`.
pub fn apply_multi_bellman(mdp: &TabularMdp, q: &QTable, depth: usize) -> Result<QTable> {
    if depth == 0 {
        return Err(Error::Argument("the multi-Bellman operator needs n >= 1".into()));
    }
    check_table(mdp, q)?;
    let mut out = bellman_backup(mdp, q);
    for _ in 1..depth {
        out = bellman_backup(mdp, &out);
    }
    Ok(out)
}

fn check_table(mdp: &TabularMdp, q: &QTable) -> Result<()> {
    if q.num_states() != mdp.num_states() {
        return Err(Error::Dimension {
            expected: mdp.num_states(),
            actual: q.num_states(),
        });
    }
    if q.num_actions() != mdp.num_actions() {
        return Err(Error::Dimension {
            expected: mdp.num_actions(),
            actual: q.num_actions(),
        });
    }
    Ok(())
}

/// Smallest `n ≥ 1` with `constant·γⁿ < 1`, computed as `⌈ln C / ln(1/γ)⌉`.
pub fn threshold_depth(constant: f64, gamma: f64) -> usize {
    if gamma <= 0.0 || constant <= 1.0 {
        return 1;
    }
    let n = (constant.ln() / (1.0 / gamma).ln()).ceil();
    if !n.is_finite() {
        return usize::MAX;
    }
    (n as usize).max(1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionReport {
    pub n: usize,
    pub gamma: f64,
    pub sigma_max: f64,
    pub phi_max: f64,
    pub mu_min: f64,
    /// `σ_max·φ_max²/μ_min`.
    pub constant: f64,
    /// `constant·γⁿ`.
    pub lambda_n: f64,
    pub threshold_n: usize,
    /// The same modulus with `1/√μ_min` in place of `1/μ_min`.
    pub lambda_n_sharp: f64,
    pub threshold_n_sharp: usize,
    pub empirical_lipschitz: Option<f64>,
    pub pair_count: usize,
}

impl ContractionReport {
    pub fn from_constants(sigma_max: f64, phi_max: f64, mu_min: f64, gamma: f64, n: usize) -> Result<Self> {
        if !(mu_min > 0.0) {
            return Err(Error::NotFullSupport(mu_min));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Argument(format!("discount must lie in [0, 1), got {gamma}")));
        }
        let constant = sigma_max * phi_max * phi_max / mu_min;
        let sharp = sigma_max * phi_max * phi_max / mu_min.sqrt();
        let decay = gamma.powi(n as i32);
        Ok(Self {
            n,
            gamma,
            sigma_max,
            phi_max,
            mu_min,
            constant,
            lambda_n: constant * decay,
            threshold_n: threshold_depth(constant, gamma),
            lambda_n_sharp: sharp * decay,
            threshold_n_sharp: threshold_depth(sharp, gamma),
            empirical_lipschitz: None,
            pair_count: 0,
        })
    }
}

/// `λ(n)` and `N` for tabular features.
pub fn contraction_constants(
    features: &TabularFeatures,
    mu: &StateActionDistribution,
    gamma: f64,
    n: usize,
) -> Result<ContractionReport> {
    if !mu.is_full_support() {
        return Err(Error::NotFullSupport(0.0));
    }
    let stats = covariance(features, mu)?;
    ContractionReport::from_constants(stats.sigma_max, features.phi_max(), mu.mu_min(), gamma, n)
}

/// Which operator sits inside the projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backup {
    /// Exact `Hⁿ`.
    Exact,
    /// The exact expectation of the sampled n-step target.
    Sampled,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedPointResult {
    pub weights: Weights,
    pub iterations: usize,
    /// `‖ω_{k+1} − ω_k‖₂` at exit.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBound {
    /// `‖q* − q_ω̃ⁿ‖_μ`.
    pub lhs: f64,
    /// `‖q* − q_ω*‖_μ / (1 − λ(n))`.
    pub rhs: f64,
    /// `‖q* − q_ω*‖_μ`, the best the features can do.
    pub projection_error: f64,
    pub lambda_n: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovReport {
    /// Largest `l̇(ω) = −(ω̃ − ω)ᵀ g(ω)` over the probes.
    pub max_derivative: f64,
    pub probes: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriftLipschitz {
    pub estimate: f64,
    /// `(σ_max φ_max³ γⁿ + φ_max²)/μ_min`.
    pub analytic: f64,
    pub pair_count: usize,
}

/// A tabular MDP paired with features and a data distribution whose
/// covariance is invertible. Every projected quantity goes through here.
pub struct ProjectedProblem<'a> {
    mdp: &'a TabularMdp,
    projector: Projector<'a>,
}

impl<'a> ProjectedProblem<'a> {
    pub fn new(mdp: &'a TabularMdp, features: &'a TabularFeatures, mu: &'a StateActionDistribution) -> Result<Self> {
        if features.num_states() != mdp.num_states() || FeatureMap::<usize>::num_actions(features) != mdp.num_actions()
        {
            return Err(Error::Config("features do not match the MDP".into()));
        }
        Ok(Self {
            mdp,
            projector: Projector::new(features, mu)?,
        })
    }

    pub fn mdp(&self) -> &'a TabularMdp {
        self.mdp
    }

    pub fn features(&self) -> &'a TabularFeatures {
        self.projector.features()
    }

    pub fn mu(&self) -> &'a StateActionDistribution {
        self.projector.mu()
    }

    pub fn projector(&self) -> &Projector<'a> {
        &self.projector
    }

    pub fn dim(&self) -> usize {
        FeatureMap::<usize>::dim(self.features())
    }

    pub fn contraction(&self, n: usize) -> Result<ContractionReport> {
        ContractionReport::from_constants(
            self.projector.stats().sigma_max,
            self.features().phi_max(),
            self.mu().mu_min(),
            self.mdp.discount(),
            n,
        )
    }

    pub fn threshold(&self) -> Result<usize> {
        Ok(self.contraction(1)?.threshold_n)
    }

    /// `Hⁿ q_ω` or its sampled-target counterpart.
    pub fn backup(&self, weights: &Weights, n: usize, backup: Backup) -> Result<QTable> {
        weights.check_dim(self.dim())?;
        match backup {
            Backup::Exact => apply_multi_bellman(self.mdp, &expand(self.features(), weights), n),
            Backup::Sampled => expected_sampled_table(self.mdp, self.features(), weights, n),
        }
    }

    /// One Picard step `ω ↦ Σ⁻¹ E_μ[φ · backup(q_ω)]`.
    pub fn map(&self, weights: &Weights, n: usize, backup: Backup) -> Result<Weights> {
        Ok(self.projector.project(&self.backup(weights, n, backup)?))
    }

    /// Largest observed `‖ΠHⁿq − ΠHⁿp‖_μ / ‖q − p‖_μ` over random tables with
    /// entries uniform in `[−10, 10]`.
    pub fn empirical_lipschitz<R: Rng + ?Sized>(&self, n: usize, num_pairs: usize, rng: &mut R) -> Result<f64> {
        if num_pairs == 0 {
            return Err(Error::Argument("need at least one pair".into()));
        }
        let (s, a) = (self.mdp.num_states(), self.mdp.num_actions());
        let mut best: f64 = 0.0;
        let mut done = 0;
        while done < num_pairs {
            let q = QTable::from_fn(s, a, |_, _| rng.random_range(-PROBE_RANGE..PROBE_RANGE));
            let p = QTable::from_fn(s, a, |_, _| rng.random_range(-PROBE_RANGE..PROBE_RANGE));
            let denom = mu_norm(self.mu(), &q.sub(&p));
            if denom == 0.0 {
                continue;
            }
            let pq = self.projector.project_table(&apply_multi_bellman(self.mdp, &q, n)?);
            let pp = self.projector.project_table(&apply_multi_bellman(self.mdp, &p, n)?);
            best = best.max(mu_norm(self.mu(), &pq.sub(&pp)) / denom);
            done += 1;
        }
        Ok(best)
    }

    /// Picard iteration on the projected map from `initial`.
    pub fn solve_fixed_point(
        &self,
        n: usize,
        backup: Backup,
        tolerance: f64,
        max_iters: usize,
        initial: Weights,
    ) -> Result<FixedPointResult> {
        if !(tolerance > 0.0) {
            return Err(Error::Argument(format!("tolerance must be positive, got {tolerance}")));
        }
        initial.check_dim(self.dim())?;
        let mut weights = initial;
        let mut residual = f64::INFINITY;
        for k in 0..max_iters {
            let next = self.map(&weights, n, backup)?;
            residual = next.distance(&weights);
            weights = next;
            if !weights.is_finite() {
                break;
            }
            if residual <= tolerance {
                return Ok(FixedPointResult {
                    weights,
                    iterations: k + 1,
                    residual,
                    converged: true,
                });
            }
        }
        Ok(FixedPointResult {
            weights,
            iterations: max_iters,
            residual,
            converged: false,
        })
    }

    /// Compares `‖q* − q_ω̃ⁿ‖_μ` against `‖q* − q_ω*‖_μ/(1 − λ(n))`.
    pub fn error_bound(&self, n: usize, q_star: &QTable) -> Result<ErrorBound> {
        let report = self.contraction(n)?;
        if n < report.threshold_n {
            return Err(Error::Precondition(format!(
                "the error bound needs n >= N = {}, got n = {n}",
                report.threshold_n
            )));
        }
        check_table(self.mdp, q_star)?;
        let fixed = self.solve_fixed_point(
            n,
            Backup::Exact,
            DEFAULT_TOLERANCE,
            DEFAULT_MAX_ITERS,
            Weights::zeros(self.dim()),
        )?;
        let lhs = mu_norm(self.mu(), &q_star.sub(&expand(self.features(), &fixed.weights)));
        let projection_error = mu_norm(self.mu(), &q_star.sub(&self.projector.project_table(q_star)));
        Ok(ErrorBound {
            lhs,
            rhs: projection_error / (1.0 - report.lambda_n),
            projection_error,
            lambda_n: report.lambda_n,
        })
    }

    /// `g(ω) = E_μ[φ(x, a)(τⁿ(ω)(x, a) − q_ω(x, a))]`.
    pub fn ode_drift(&self, weights: &Weights, n: usize, backup: Backup) -> Result<Vec<f64>> {
        let target = self.backup(weights, n, backup)?;
        let mut g = vec![0.0; self.dim()];
        for (s, a, w) in self.mu().support() {
            let phi = self.features().row(s, a);
            let td = target.get(s, a) - weights.dot(phi);
            for (gi, p) in g.iter_mut().zip(phi) {
                *gi += w * td * p;
            }
        }
        Ok(g)
    }

    /// Evaluates `l̇(ω) = −(ω̃ − ω)ᵀ g(ω)` at random probes in `[−10, 10]ᵏ`
    /// with the sampled-target drift. Passing means every probe is negative.
    pub fn lyapunov_check<R: Rng + ?Sized>(
        &self,
        n: usize,
        equilibrium: &Weights,
        num_probes: usize,
        rng: &mut R,
    ) -> Result<LyapunovReport> {
        equilibrium.check_dim(self.dim())?;
        let mut max_derivative = f64::NEG_INFINITY;
        let mut probes = 0;
        while probes < num_probes {
            let probe = random_weights(self.dim(), rng);
            if probe == *equilibrium {
                continue;
            }
            let g = self.ode_drift(&probe, n, Backup::Sampled)?;
            let ldot: f64 = -equilibrium
                .as_slice()
                .iter()
                .zip(probe.as_slice())
                .zip(&g)
                .map(|((e, w), gi)| (e - w) * gi)
                .sum::<f64>();
            max_derivative = max_derivative.max(ldot);
            probes += 1;
        }
        Ok(LyapunovReport {
            max_derivative,
            probes,
            passed: probes > 0 && max_derivative < 0.0,
        })
    }

    /// Largest sampled `‖g(ω) − g(θ)‖₂ / ‖ω − θ‖₂`, next to the analytic bound.
    pub fn drift_lipschitz_estimate<R: Rng + ?Sized>(
        &self,
        n: usize,
        num_pairs: usize,
        rng: &mut R,
    ) -> Result<DriftLipschitz> {
        if num_pairs == 0 {
            return Err(Error::Argument("need at least one pair".into()));
        }
        let mut estimate: f64 = 0.0;
        let mut done = 0;
        while done < num_pairs {
            let w = random_weights(self.dim(), rng);
            let t = random_weights(self.dim(), rng);
            let dist = w.distance(&t);
            if dist == 0.0 {
                continue;
            }
            let gw = self.ode_drift(&w, n, Backup::Sampled)?;
            let gt = self.ode_drift(&t, n, Backup::Sampled)?;
            let diff = gw.iter().zip(&gt).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            estimate = estimate.max(diff / dist);
            done += 1;
        }
        let report = self.contraction(n)?;
        let phi = report.phi_max;
        Ok(DriftLipschitz {
            estimate,
            analytic: (report.sigma_max * phi.powi(3) * report.gamma.powi(n as i32) + phi * phi) / report.mu_min,
            pair_count: num_pairs,
        })
    }
}

fn random_weights<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Weights {
    Weights::from_vec((0..dim).map(|_| rng.random_range(-PROBE_RANGE..PROBE_RANGE)).collect())
}

/// Checks that `ω̇ = −Σω` is stable, i.e. `λ_min(Σ) > 0`.
pub fn stability_at_infinity(features: &TabularFeatures, mu: &StateActionDistribution) -> Result<StabilityReport> {
    let stats = covariance(features, mu)?;
    let minus_sigma = -stats.sigma.clone();
    // every eigenvalue of −Σ must be negative
    let eig = minus_sigma.symmetric_eigenvalues();
    let worst = eig.max();
    Ok(StabilityReport {
        lambda_min: stats.lambda_min,
        lambda_max: stats.lambda_max,
        stable: worst < 0.0,
    })
}

/// `q*` at the tolerance used throughout the exact analysis.
pub fn optimal_q(mdp: &TabularMdp) -> Result<QTable> {
    value_iteration(mdp, 1e-12, 1_000_000)
}

/// Euclidean norm of a drift vector.
pub fn vector_norm(v: &[f64]) -> f64 {
    DVector::from_column_slice(v).norm()
}
