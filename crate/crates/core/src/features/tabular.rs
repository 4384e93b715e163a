use super::{FeatureMap, Weights};
use crate::{Error, Result};

/// Explicit feature table for a finite state-action space.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularFeatures {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    /// `rows[(s * A + a) * k + i] = φ_i(s, a)`.
    rows: Vec<f64>,
}

impl TabularFeatures {
    pub fn new(num_states: usize, num_actions: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if rows.len() != num_states * num_actions * dim {
            return Err(Error::Dimension {
                expected: num_states * num_actions * dim,
                actual: rows.len(),
            });
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("feature entries must be finite".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            dim,
            rows,
        })
    }

    /// One indicator per state-action pair.
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        let pairs = num_states * num_actions;
        let mut rows = vec![0.0; pairs * pairs];
        for i in 0..pairs {
            rows[i * pairs + i] = 1.0;
        }
        Self {
            num_states,
            num_actions,
            dim: pairs,
            rows,
        }
    }

    /// Parses whitespace-separated rows, one per pair in `(s, a)` row-major
    /// order. Lines starting with `#` are skipped.
    pub fn parse(num_states: usize, num_actions: usize, text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    source_name: "features".into(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
            match dim {
                None => dim = Some(values.len()),
                Some(k) if k != values.len() => {
                    return Err(Error::Parse {
                        source_name: "features".into(),
                        line: lineno + 1,
                        message: format!("expected {k} columns, found {}", values.len()),
                    })
                }
                _ => {}
            }
            rows.extend(values);
        }
        let dim = dim.unwrap_or(0);
        Self::new(num_states, num_actions, dim, rows)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        let start = (state * self.num_actions + action) * self.dim;
        &self.rows[start..start + self.dim]
    }

    /// `max_{x,a} ‖φ(x, a)‖₂`, exact.
    pub fn phi_max(&self) -> f64 {
        self.rows
            .chunks(self.dim.max(1))
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

impl FeatureMap<usize> for TabularFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn write_features(&self, state: &usize, action: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row(*state, action));
    }

    fn q_value(&self, state: &usize, action: usize, weights: &Weights) -> f64 {
        weights.dot(self.row(*state, action))
    }

    fn add_scaled(&self, state: &usize, action: usize, scale: f64, weights: &mut Weights) {
        for (w, p) in weights.as_mut_slice().iter_mut().zip(self.row(*state, action)) {
            *w += scale * p;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Counterexample {
    /// Two states, one action, `φ(y1) = 1`, `φ(y2) = 2`.
    W2w,
    /// Six states, two actions, thirteen features.
    Star,
}

pub fn counterexample_features(which: Counterexample) -> TabularFeatures {
    match which {
        Counterexample::W2w => TabularFeatures::new(2, 1, 1, vec![1.0, 2.0]).expect("static table"),
        Counterexample::Star => {
            const K: usize = 13;
            let mut rows = vec![0.0; 6 * 2 * K];
            for s in 0..6 {
                let b1 = (s * 2) * K;
                let b2 = (s * 2 + 1) * K;
                // second action: indicator on coordinate s + 1
                rows[b2 + s + 1] = 1.0;
                if s < 5 {
                    rows[b1] = 1.0;
                    rows[b1 + s + 1] = 2.0;
                } else {
                    rows[b1] = 2.0;
                }
            }
            TabularFeatures::new(6, 2, K, rows).expect("static table")
        }
    }
}
