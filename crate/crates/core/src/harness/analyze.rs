//! Exact analysis of a tabular config, rendered as aligned text and CSV.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{load_tabular, ExperimentConfig};
use crate::bellman::{
    optimal_q, stability_at_infinity, vector_norm, Backup, ContractionReport, DriftLipschitz, ErrorBound,
    FixedPointResult, LyapunovReport, ProjectedProblem, StabilityReport, DEFAULT_MAX_ITERS, DEFAULT_PAIRS,
    DEFAULT_TOLERANCE,
};
use crate::features::{FeatureMap, Weights};
use crate::{Error, Result};

const LYAPUNOV_PROBES: usize = 200;
const DRIFT_PAIRS: usize = 50;

#[derive(Clone, Debug)]
pub struct DepthAnalysis {
    pub n: usize,
    pub contraction: ContractionReport,
    pub exact: FixedPointResult,
    /// Fixed point under the expected sampled target; `None` when the tree is
    /// too large to enumerate.
    pub sampled: Option<FixedPointResult>,
    /// `None` below the threshold depth.
    pub bound: Option<ErrorBound>,
    pub drift_at_equilibrium: Option<f64>,
    pub lyapunov: Option<LyapunovReport>,
    pub drift_lipschitz: Option<DriftLipschitz>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct AnalysisReport {
    pub env: String,
    pub gamma: f64,
    pub stability: StabilityReport,
    pub depths: Vec<DepthAnalysis>,
}

/// Runs every exact diagnostic for each depth in `depths`.
///
/// Fails on non-tabular environments and when the feature covariance is not
/// invertible.
pub fn analyze(config: &ExperimentConfig, depths: &[usize]) -> Result<AnalysisReport> {
    if !config.env.is_tabular() {
        return Err(Error::Config(format!(
            "exact analysis needs a tabular environment, {} is continuous",
            config.env.name()
        )));
    }
    if depths.is_empty() || depths.contains(&0) {
        return Err(Error::Config("the n-list must hold positive depths".into()));
    }
    let problem = load_tabular(config)?;
    let stability = stability_at_infinity(&problem.features, &problem.mu)?;
    let pp = ProjectedProblem::new(&problem.mdp, &problem.features, &problem.mu)?;
    let q_star = optimal_q(&problem.mdp)?;
    let dim = FeatureMap::<usize>::dim(&problem.features);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed_base);

    let mut out = Vec::new();
    for &n in depths {
        let mut notes = Vec::new();
        let mut contraction = pp.contraction(n)?;
        contraction.empirical_lipschitz = Some(pp.empirical_lipschitz(n, DEFAULT_PAIRS, &mut rng)?);
        contraction.pair_count = DEFAULT_PAIRS;
        let exact = pp.solve_fixed_point(
            n,
            Backup::Exact,
            DEFAULT_TOLERANCE,
            DEFAULT_MAX_ITERS,
            Weights::zeros(dim),
        )?;
        let sampled = match pp.solve_fixed_point(
            n,
            Backup::Sampled,
            DEFAULT_TOLERANCE,
            DEFAULT_MAX_ITERS,
            Weights::zeros(dim),
        ) {
            Ok(r) => Some(r),
            Err(e @ Error::EnumerationTooLarge { .. }) => {
                notes.push(format!("sampled-target fixed point skipped: {e}"));
                None
            }
            Err(e) => return Err(e),
        };
        let bound = if n >= contraction.threshold_n {
            Some(pp.error_bound(n, &q_star)?)
        } else {
            notes.push(format!(
                "error bound not asserted below N = {}",
                contraction.threshold_n
            ));
            None
        };
        let (drift_at_equilibrium, lyapunov, drift_lipschitz) = match &sampled {
            Some(fp) if fp.converged => {
                let g = pp.ode_drift(&fp.weights, n, Backup::Sampled)?;
                let lyap = pp.lyapunov_check(n, &fp.weights, LYAPUNOV_PROBES, &mut rng)?;
                let lip = pp.drift_lipschitz_estimate(n, DRIFT_PAIRS, &mut rng)?;
                (Some(vector_norm(&g)), Some(lyap), Some(lip))
            }
            Some(_) => {
                notes.push("sampled-target fixed point did not converge; ODE checks skipped".into());
                (None, None, None)
            }
            None => (None, None, None),
        };
        out.push(DepthAnalysis {
            n,
            contraction,
            exact,
            sampled,
            bound,
            drift_at_equilibrium,
            lyapunov,
            drift_lipschitz,
            notes,
        });
    }
    Ok(AnalysisReport {
        env: config.env.name().to_string(),
        gamma: problem.mdp.discount(),
        stability,
        depths: out,
    })
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn weights_text(w: &Weights) -> String {
    let shown: Vec<String> = w.as_slice().iter().take(6).map(|v| format!("{v:.6e}")).collect();
    if w.len() > 6 {
        format!("[{}, ...] ({} entries)", shown.join(", "), w.len())
    } else {
        format!("[{}]", shown.join(", "))
    }
}

impl AnalysisReport {
    /// `(section, n, key, value)` tuples shared by both renderings.
    pub fn rows(&self) -> Vec<(String, Option<usize>, String, String)> {
        let mut rows = Vec::new();
        let mut put = |section: &str, n: Option<usize>, key: &str, value: String| {
            rows.push((section.to_string(), n, key.to_string(), value));
        };
        put("environment", None, "env", self.env.clone());
        put("environment", None, "gamma", num(self.gamma));
        put("stability", None, "lambda_min", num(self.stability.lambda_min));
        put("stability", None, "lambda_max", num(self.stability.lambda_max));
        put("stability", None, "stable", self.stability.stable.to_string());
        for d in &self.depths {
            let n = Some(d.n);
            let c = &d.contraction;
            put("contraction", n, "sigma_max", num(c.sigma_max));
            put("contraction", n, "phi_max", num(c.phi_max));
            put("contraction", n, "mu_min", num(c.mu_min));
            put("contraction", n, "lambda_n", num(c.lambda_n));
            put("contraction", n, "threshold_N", c.threshold_n.to_string());
            put("contraction", n, "lambda_n_sqrt_mu", num(c.lambda_n_sharp));
            put("contraction", n, "threshold_N_sqrt_mu", c.threshold_n_sharp.to_string());
            if let Some(l) = c.empirical_lipschitz {
                put("contraction", n, "empirical_lipschitz", num(l));
                put("contraction", n, "pair_count", c.pair_count.to_string());
            }
            for (section, fp) in [
                ("fixed_point_exact", Some(&d.exact)),
                ("fixed_point_sampled", d.sampled.as_ref()),
            ] {
                if let Some(fp) = fp {
                    put(section, n, "converged", fp.converged.to_string());
                    put(section, n, "iterations", fp.iterations.to_string());
                    put(section, n, "residual", num(fp.residual));
                    put(section, n, "weight_norm", num(fp.weights.norm()));
                    put(section, n, "weights", weights_text(&fp.weights));
                }
            }
            if let Some(b) = &d.bound {
                put("error_bound", n, "lhs", num(b.lhs));
                put("error_bound", n, "rhs", num(b.rhs));
                put("error_bound", n, "holds", (b.lhs <= b.rhs + 1e-8).to_string());
            }
            if let Some(g) = d.drift_at_equilibrium {
                put("ode", n, "drift_norm_at_equilibrium", num(g));
            }
            if let Some(l) = &d.lyapunov {
                put("ode", n, "lyapunov_max_derivative", num(l.max_derivative));
                put("ode", n, "lyapunov_passed", l.passed.to_string());
            }
            if let Some(l) = &d.drift_lipschitz {
                put("ode", n, "drift_lipschitz_estimate", num(l.estimate));
                put("ode", n, "drift_lipschitz_analytic", num(l.analytic));
            }
            for note in &d.notes {
                put("note", n, "note", note.clone());
            }
        }
        rows
    }

    pub fn render_text(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|r| r.2.len()).max().unwrap_or(0);
        let mut out = String::new();
        let mut current: Option<(String, Option<usize>)> = None;
        for (section, n, key, value) in rows {
            let head = (section.clone(), n);
            if current.as_ref() != Some(&head) {
                match n {
                    Some(n) => {
                        let _ = writeln!(out, "\n[{section}] n = {n}");
                    }
                    None => {
                        let _ = writeln!(out, "\n[{section}]");
                    }
                }
                current = Some(head);
            }
            let _ = writeln!(out, "  {key:<width$}  {value}");
        }
        out.push_str(
            "\nlambda_n uses 1/mu_min as in the printed bound; lambda_n_sqrt_mu uses the sharper 1/sqrt(mu_min).\n",
        );
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["section", "n", "key", "value"])?;
        for (section, n, key, value) in self.rows() {
            let n = n.map(|n| n.to_string()).unwrap_or_default();
            w.write_record([section.as_str(), &n, &key, &value])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::RawConfig;

    fn config(text: &str) -> ExperimentConfig {
        RawConfig::parse("t", text).unwrap().resolve().unwrap()
    }

    #[test]
    fn w2w_report() {
        let report = analyze(&config("env = w2w"), &[1, 2, 4, 12]).unwrap();
        let d12 = &report.depths[3];
        assert_eq!(d12.contraction.threshold_n, 12);
        assert!((d12.contraction.lambda_n - 3.2 * 0.9f64.powi(12)).abs() < 1e-12);
        assert!(d12.contraction.empirical_lipschitz.unwrap() < 1.0);
        assert!(report.depths[0].contraction.empirical_lipschitz.unwrap() > 1.0);
        for d in &report.depths {
            assert!(d.exact.converged);
            assert_eq!(d.exact.weights.as_slice(), &[0.0]);
        }
        assert!(report.depths[1].lyapunov.as_ref().unwrap().passed);
        assert!(!report.depths[0].lyapunov.as_ref().unwrap().passed);
        let text = report.render_text();
        assert!(text.contains("threshold_N"));
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("section,n,key,value\n"));
    }

    #[test]
    fn control_envs_are_rejected() {
        assert!(matches!(
            analyze(&config("env = cartpole"), &[1]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn star_features_are_singular() {
        assert!(matches!(
            analyze(&config("env = star"), &[4]),
            Err(Error::SingularCovariance { .. })
        ));
    }
}
