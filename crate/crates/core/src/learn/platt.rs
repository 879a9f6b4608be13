//! Platt scaling: post-hoc sigmoid calibration fit on validation scores.
//!
//! Model: `p' = 1 / (1 + exp(A*s + B))` over raw decision scores `s`, so a
//! fitted `A < 0` means higher scores map to higher calibrated risk. The
//! fit minimizes the NLL of the standard smoothed targets
//! `t+ = (N+ + 1)/(N+ + 2)`, `t- = 1/(N- + 2)` by Newton iteration with
//! backtracking, a two-parameter convex problem. Base-model weights are
//! never touched.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlattError {
    #[error("validation data must contain both classes")]
    SingleClass,
    #[error("empty validation data")]
    Empty,
    #[error("length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
}

impl PlattCalibrator {
    /// Identity-like calibrator mapping score s to sigmoid(s).
    pub fn identity() -> Self {
        PlattCalibrator { a: -1.0, b: 0.0 }
    }

    /// Calibrated probability for one raw score.
    pub fn apply(&self, score: f64) -> f64 {
        let z = self.a * score + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    pub fn apply_all(&self, scores: &[f64]) -> Vec<f64> {
        scores.iter().map(|&s| self.apply(s)).collect()
    }
}

fn nll(scores: &[f64], targets: &[f64], a: f64, b: f64) -> f64 {
    let mut total = 0.0;
    for (&s, &t) in scores.iter().zip(targets) {
        let z = a * s + b;
        // F_i = ln(1 + e^z) - (1 - t) * z, stable in both tails.
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        total += softplus - (1.0 - t) * z;
    }
    total
}

/// Fit (A, B) on validation scores. Deterministic; at most 100 Newton
/// iterations with halving line search.
pub fn fit_platt(scores: &[f64], labels: &[u8]) -> Result<PlattCalibrator, PlattError> {
    if scores.is_empty() {
        return Err(PlattError::Empty);
    }
    if scores.len() != labels.len() {
        return Err(PlattError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(PlattError::SingleClass);
    }

    let hi = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let lo = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = labels
        .iter()
        .map(|&y| if y == 1 { hi } else { lo })
        .collect();

    let mut a = 0.0f64;
    let mut b = ((n_neg as f64 + 1.0) / (n_pos as f64 + 1.0)).ln();
    let mut fval = nll(scores, &targets, a, b);

    const MAX_ITER: usize = 100;
    const GRAD_EPS: f64 = 1e-10;
    const MIN_STEP: f64 = 1e-12;
    const RIDGE: f64 = 1e-12;

    for _ in 0..MAX_ITER {
        // With p = sigma(-(a s + b)): dF/dz = t - p and d2F/dz2 = p(1 - p).
        let mut grad_a = 0.0;
        let mut grad_b = 0.0;
        let mut h11 = RIDGE;
        let mut h22 = RIDGE;
        let mut h21 = 0.0;
        for (&s, &t) in scores.iter().zip(&targets) {
            let z = a * s + b;
            let p = if z >= 0.0 {
                let e = (-z).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + z.exp())
            };
            let w = p * (1.0 - p);
            let d = t - p;
            grad_a += s * d;
            grad_b += d;
            h11 += s * s * w;
            h22 += w;
            h21 += s * w;
        }
        if grad_a.abs() < GRAD_EPS && grad_b.abs() < GRAD_EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let step_a = -(h22 * grad_a - h21 * grad_b) / det;
        let step_b = -(-h21 * grad_a + h11 * grad_b) / det;
        let slope = grad_a * step_a + grad_b * step_b;

        let mut stepsize = 1.0;
        let mut advanced = false;
        while stepsize >= MIN_STEP {
            let na = a + stepsize * step_a;
            let nb = b + stepsize * step_b;
            let nf = nll(scores, &targets, na, nb);
            if nf <= fval + 1e-4 * stepsize * slope {
                a = na;
                b = nb;
                fval = nf;
                advanced = true;
                break;
            }
            stepsize *= 0.5;
        }
        if !advanced {
            break;
        }
    }
    Ok(PlattCalibrator { a, b })
}
