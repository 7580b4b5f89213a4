//! Gaussian naive Bayes with optional sample weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound on every per-class feature variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub class_count: usize,
    pub dim: usize,
    /// Zero for classes absent from the training data.
    pub priors: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianNb {
    /// Fits class priors, means and variances from weighted rows.
    pub fn fit(x: &[Vec<f64>], y: &[usize], weights: Option<&[f64]>, class_count: usize) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InvalidArgument("no training rows".into()));
        }
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if let Some(w) = weights {
            if w.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: x.len(),
                    got: w.len(),
                });
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidArgument("weights must be finite and >= 0".into()));
            }
        }
        let dim = x[0].len();
        if let Some(bad) = x.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        if let Some(&c) = y.iter().find(|&&c| c >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {c} out of range for {class_count} classes"
            )));
        }
        let w = |i: usize| weights.map_or(1.0, |w| w[i]);

        let mut mass = vec![0.0; class_count];
        let mut means = vec![vec![0.0; dim]; class_count];
        for (i, (row, &c)) in x.iter().zip(y).enumerate() {
            mass[c] += w(i);
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += w(i) * v;
            }
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("total training weight is zero".into()));
        }
        for c in 0..class_count {
            if mass[c] > 0.0 {
                for m in &mut means[c] {
                    *m /= mass[c];
                }
            }
        }
        let mut variances = vec![vec![0.0; dim]; class_count];
        for (i, (row, &c)) in x.iter().zip(y).enumerate() {
            for ((s, v), m) in variances[c].iter_mut().zip(row).zip(&means[c]) {
                *s += w(i) * (v - m) * (v - m);
            }
        }
        for c in 0..class_count {
            for s in &mut variances[c] {
                *s = if mass[c] > 0.0 { *s / mass[c] } else { 0.0 };
                *s = s.max(VARIANCE_FLOOR);
            }
        }
        Ok(GaussianNb {
            class_count,
            dim,
            priors: mass.iter().map(|m| m / total).collect(),
            means,
            variances,
        })
    }

    /// Unnormalized log posterior per class; `-inf` for absent classes.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        (0..self.class_count)
            .map(|c| {
                if self.priors[c] <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let mut lp = self.priors[c].ln();
                for ((v, m), s) in x.iter().zip(&self.means[c]).zip(&self.variances[c]) {
                    lp -= 0.5 * ((std::f64::consts::TAU * s).ln() + (v - m) * (v - m) / s);
                }
                lp
            })
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.log_joint(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::stats::argmax(&self.log_joint(x))
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

/// Numerically stable softmax; `-inf` entries map to 0.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let n = logits.len().max(1) as f64;
        return vec![1.0 / n; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}
