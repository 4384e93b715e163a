//! Normalised Gaussian features on a regular grid, laid out in action blocks.
//!
//! The state part ψ(x) ∈ ℝᵐ has one bump per grid cell, centred at the cell
//! midpoint with a per-dimension bandwidth equal to the cell width, and is
//! normalised to sum to one. The bump is separable, so ψ is the tensor product
//! of per-dimension normalised kernels. Normalisation can be switched off,
//! leaving raw bumps with a peak of one. `φ(x, a)` holds ψ(x) in block `a` and
//! zeros elsewhere, giving `k = m · |A|`.

use super::{FeatureMap, Weights};
use crate::{Error, Result};

/// Anything that can be turned into a real observation vector.
pub trait Observation {
    fn observation(&self) -> Vec<f64>;
}

impl Observation for Vec<f64> {
    fn observation(&self) -> Vec<f64> {
        self.clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhiMaxEstimate {
    pub value: f64,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFeatures {
    cells: Vec<usize>,
    bounds: Vec<(f64, f64)>,
    num_actions: usize,
    state_dim: usize,
    normalised: bool,
}

/// Points per dimension used by [`GaussianFeatures::estimate_phi_max`].
const SWEEP_POINTS: usize = 100_000;

pub fn build_gaussian_features(cells: &[usize], bounds: &[(f64, f64)], num_actions: usize) -> Result<GaussianFeatures> {
    if cells.is_empty() || cells.len() != bounds.len() {
        return Err(Error::Config(format!(
            "feature grid has {} dimensions but bounds have {}",
            cells.len(),
            bounds.len()
        )));
    }
    if let Some(d) = cells.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("grid dimension {d} has zero cells")));
    }
    for (d, &(lo, hi)) in bounds.iter().enumerate() {
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(Error::Config(format!(
                "bounds [{lo}, {hi}] of dimension {d} have no volume"
            )));
        }
    }
    if num_actions == 0 {
        return Err(Error::Config("need at least one action".into()));
    }
    let state_dim = cells
        .iter()
        .try_fold(1usize, |acc, &c| acc.checked_mul(c))
        .ok_or_else(|| Error::Config("feature grid too large".into()))?;
    Ok(GaussianFeatures {
        cells: cells.to_vec(),
        bounds: bounds.to_vec(),
        num_actions,
        state_dim,
        normalised: true,
    })
}

impl GaussianFeatures {
    /// `m`, the number of state features per action block.
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Switches between ψ summing to one (the default) and raw bumps with a
    /// peak of one.
    pub fn with_normalisation(mut self, normalised: bool) -> Self {
        self.normalised = normalised;
        self
    }

    pub fn is_normalised(&self) -> bool {
        self.normalised
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn kernel_1d(&self, d: usize, x: f64, out: &mut Vec<f64>) {
        let (lo, hi) = self.bounds[d];
        let cells = self.cells[d];
        let width = (hi - lo) / cells as f64;
        out.clear();
        if !self.normalised {
            out.extend((0..cells).map(|i| {
                let z = (x - (lo + (i as f64 + 0.5) * width)) / width;
                (-0.5 * z * z).exp()
            }));
            return;
        }
        let mut max_log = f64::NEG_INFINITY;
        for i in 0..cells {
            let centre = lo + (i as f64 + 0.5) * width;
            let z = (x - centre) / width;
            let log = -0.5 * z * z;
            max_log = max_log.max(log);
            out.push(log);
        }
        // shift by the max exponent so far-away points do not underflow to zero
        let mut total = 0.0;
        for v in out.iter_mut() {
            *v = (*v - max_log).exp();
            total += *v;
        }
        for v in out.iter_mut() {
            *v /= total;
        }
    }

    /// ψ(x): non-negative; sums to one when normalised.
    pub fn state_features(&self, obs: &[f64]) -> Vec<f64> {
        assert_eq!(obs.len(), self.cells.len(), "observation dimension");
        let mut psi = Vec::with_capacity(self.state_dim);
        psi.push(1.0);
        let mut kernel = Vec::new();
        for (d, &x) in obs.iter().enumerate() {
            self.kernel_1d(d, x, &mut kernel);
            let mut next = Vec::with_capacity(psi.len() * kernel.len());
            for &p in &psi {
                for &k in &kernel {
                    next.push(p * k);
                }
            }
            psi = next;
        }
        psi
    }

    /// `max ‖ψ(x)‖₂` over the bounding box. The norm factorises over
    /// dimensions, so each dimension is swept on its own with a uniform grid of
    /// [`SWEEP_POINTS`] points including both ends.
    pub fn estimate_phi_max(&self) -> PhiMaxEstimate {
        let mut value = 1.0;
        let mut kernel = Vec::new();
        for d in 0..self.cells.len() {
            let (lo, hi) = self.bounds[d];
            let mut best: f64 = 0.0;
            for i in 0..SWEEP_POINTS {
                let x = lo + (hi - lo) * i as f64 / (SWEEP_POINTS - 1) as f64;
                self.kernel_1d(d, x, &mut kernel);
                best = best.max(kernel.iter().map(|k| k * k).sum::<f64>().sqrt());
            }
            value *= best;
        }
        PhiMaxEstimate {
            value,
            method: format!("separable per-dimension grid sweep, {SWEEP_POINTS} points per dimension"),
        }
    }

    fn block_dot(&self, psi: &[f64], action: usize, weights: &Weights) -> f64 {
        let start = action * self.state_dim;
        psi.iter()
            .zip(&weights.as_slice()[start..start + self.state_dim])
            .map(|(p, w)| p * w)
            .sum()
    }
}

impl<S: Observation + ?Sized> FeatureMap<S> for GaussianFeatures {
    fn dim(&self) -> usize {
        self.state_dim * self.num_actions
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn write_features(&self, state: &S, action: usize, out: &mut [f64]) {
        out.fill(0.0);
        let psi = self.state_features(&state.observation());
        out[action * self.state_dim..(action + 1) * self.state_dim].copy_from_slice(&psi);
    }

    fn q_value(&self, state: &S, action: usize, weights: &Weights) -> f64 {
        let psi = self.state_features(&state.observation());
        self.block_dot(&psi, action, weights)
    }

    fn q_values(&self, state: &S, weights: &Weights) -> Vec<f64> {
        let psi = self.state_features(&state.observation());
        (0..self.num_actions)
            .map(|a| self.block_dot(&psi, a, weights))
            .collect()
    }

    fn add_scaled(&self, state: &S, action: usize, scale: f64, weights: &mut Weights) {
        let psi = self.state_features(&state.observation());
        let start = action * self.state_dim;
        for (w, p) in weights.as_mut_slice()[start..start + self.state_dim]
            .iter_mut()
            .zip(psi)
        {
            *w += scale * p;
        }
    }
}
