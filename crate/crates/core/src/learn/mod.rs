//! L2-regularized logistic regression, calibration, threshold tuning, and
//! stacked ensembles.
//!
//! Objective: weighted negative log-likelihood plus `(1/(2C)) * ||w||^2`,
//! bias unpenalized. The optimizer is full-batch gradient descent with
//! Armijo backtracking (the problem is convex at desk scale; the
//! backtracking rule makes the loss non-increasing by construction and the
//! whole path deterministic). Convergence: gradient norm <= 1e-6 or 1000
//! iterations, after which the model is flagged, not failed.

mod platt;

pub use platt::{fit_platt, PlattCalibrator, PlattError};

use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::eval::metrics::{self, MetricError};
use crate::features::{DenseMatrix, FeatureData, FeatureKind, FeatureSet, RowFeatures};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("empty training data")]
    Empty,
    #[error("non-finite value in features or labels")]
    NonFinite,
    #[error("labels length {labels} does not match {rows} feature rows")]
    LabelMismatch { labels: usize, rows: usize },
    #[error("feature space mismatch: model {model}, data {data}")]
    FeatureSpaceMismatch { model: String, data: String },
    #[error(transparent)]
    Platt(#[from] PlattError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Descriptor binding a model to the exact column space it was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub kind: FeatureKind,
    pub dim: usize,
    pub hash: String,
}

impl FeatureSpace {
    pub fn of(set: &FeatureSet) -> FeatureSpace {
        FeatureSpace {
            kind: set.kind,
            dim: set.ncols(),
            hash: set.space_hash.clone(),
        }
    }
}

/// Per-class weights `w_c = n / (2 * n_c)`.
pub fn balanced_weights(labels: &[u8]) -> Result<[f64; 2], TrainError> {
    if labels.is_empty() {
        return Err(TrainError::Empty);
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(TrainError::SingleClass);
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)])
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub class_weights: [f64; 2],
    pub feature_space: FeatureSpace,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub c: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            c: 1.0,
            max_iter: 1000,
            grad_tol: 1e-6,
            seed: 0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn compute_margins(x: &FeatureData, w: &[f64], b: f64) -> Vec<f64> {
    (0..x.nrows()).map(|i| x.dot_row(i, w) + b).collect()
}

/// Weighted NLL plus ridge term, from precomputed margins.
fn objective_from_margins(margins: &[f64], y: &[u8], cw: &[f64; 2], w: &[f64], c: f64) -> f64 {
    let mut loss = 0.0;
    for (&z, &label) in margins.iter().zip(y) {
        // ln(1 + e^z) - y z, stable in both tails.
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        loss += cw[label as usize] * (softplus - f64::from(label) * z);
    }
    let ridge: f64 = w.iter().map(|v| v * v).sum::<f64>() / (2.0 * c);
    loss + ridge
}

/// Analytic gradient of the objective at (w, b).
pub fn objective_gradient(
    x: &FeatureData,
    y: &[u8],
    cw: &[f64; 2],
    c: f64,
    w: &[f64],
    b: f64,
) -> (Vec<f64>, f64) {
    let mut grad_w = vec![0.0; w.len()];
    let mut grad_b = 0.0;
    for i in 0..x.nrows() {
        let z = x.dot_row(i, w) + b;
        let r = cw[y[i] as usize] * (sigmoid(z) - f64::from(y[i]));
        x.add_scaled_row(i, r, &mut grad_w);
        grad_b += r;
    }
    for (g, v) in grad_w.iter_mut().zip(w) {
        *g += v / c;
    }
    (grad_w, grad_b)
}

/// Objective value at (w, b); exposed for verification tests.
pub fn objective_value(
    x: &FeatureData,
    y: &[u8],
    cw: &[f64; 2],
    c: f64,
    w: &[f64],
    b: f64,
) -> f64 {
    objective_from_margins(&compute_margins(x, w, b), y, cw, w, c)
}

/// Train by full-batch gradient descent with Armijo backtracking from the
/// zero start. Deterministic given data order; the seed is recorded in the
/// artifact for provenance, not consumed here.
pub fn train_logreg(
    x: &FeatureSet,
    y: &[u8],
    class_weights: [f64; 2],
    options: &TrainOptions,
) -> Result<LogRegModel, TrainError> {
    let n = x.nrows();
    if n == 0 {
        return Err(TrainError::Empty);
    }
    if y.len() != n {
        return Err(TrainError::LabelMismatch {
            labels: y.len(),
            rows: n,
        });
    }
    if !x.data.all_finite() || !class_weights.iter().all(|w| w.is_finite()) {
        return Err(TrainError::NonFinite);
    }

    let dim = x.ncols();
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let cw = class_weights;
    let c = options.c;

    let mut fval = objective_from_margins(&compute_margins(&x.data, &w, b), y, &cw, &w, c);
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut prev: Option<(Vec<f64>, f64, Vec<f64>, f64)> = None;

    const ARMIJO: f64 = 1e-4;
    const MIN_STEP: f64 = 1e-18;
    const MAX_STEP: f64 = 1e6;

    for iter in 0..options.max_iter {
        iterations = iter + 1;
        let (grad_w, grad_b) = objective_gradient(&x.data, y, &cw, c, &w, b);
        let grad_sq: f64 = grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        if grad_sq.sqrt() <= options.grad_tol {
            converged = true;
            iterations = iter;
            break;
        }

        // Initial step: spectral (Barzilai-Borwein) when the curvature
        // estimate is usable, otherwise double the last accepted step. The
        // Armijo backtracking below safeguards either choice, keeping the
        // loss non-increasing.
        step = match &prev {
            Some((pw, pb, pgw, pgb)) => {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for ((wi, pwi), (gi, pgi)) in
                    w.iter().zip(pw).zip(grad_w.iter().zip(pgw))
                {
                    let s = wi - pwi;
                    ss += s * s;
                    sy += s * (gi - pgi);
                }
                let s = b - pb;
                ss += s * s;
                sy += s * (grad_b - pgb);
                if sy > 0.0 {
                    (ss / sy).clamp(MIN_STEP, MAX_STEP)
                } else {
                    (step * 2.0).min(MAX_STEP)
                }
            }
            None => step,
        };
        prev = Some((w.clone(), b, grad_w.clone(), grad_b));

        let mut advanced = false;
        while step >= MIN_STEP {
            let cand_w: Vec<f64> = w.iter().zip(&grad_w).map(|(v, g)| v - step * g).collect();
            let cand_b = b - step * grad_b;
            let cand_f =
                objective_from_margins(&compute_margins(&x.data, &cand_w, cand_b), y, &cw, &cand_w, c);
            if cand_f <= fval - ARMIJO * step * grad_sq {
                w = cand_w;
                b = cand_b;
                fval = cand_f;
                advanced = true;
                break;
            }
            step *= 0.5;
        }
        if !advanced {
            // Line search exhausted: numerically stationary.
            let (grad_w, grad_b) = objective_gradient(&x.data, y, &cw, c, &w, b);
            let norm = (grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b).sqrt();
            converged = norm <= options.grad_tol;
            break;
        }
    }

    Ok(LogRegModel {
        weights: w,
        bias: b,
        c,
        class_weights: cw,
        feature_space: FeatureSpace::of(x),
        converged,
        iterations,
        seed: options.seed,
    })
}

impl LogRegModel {
    fn check_space(&self, x: &FeatureSet) -> Result<(), TrainError> {
        if self.feature_space.hash != x.space_hash {
            return Err(TrainError::FeatureSpaceMismatch {
                model: self.feature_space.hash.clone(),
                data: x.space_hash.clone(),
            });
        }
        Ok(())
    }

    /// Raw decision scores `w . x + b`.
    pub fn decision_scores(&self, x: &FeatureSet) -> Result<Vec<f64>, TrainError> {
        self.check_space(x)?;
        Ok(compute_margins(&x.data, &self.weights, self.bias))
    }

    /// `sigmoid(w . x + b)`.
    pub fn predict_proba(&self, x: &FeatureSet) -> Result<Vec<f64>, TrainError> {
        Ok(self.decision_scores(x)?.into_iter().map(sigmoid).collect())
    }
}

// ---------------------------------------------------------------------------
// Decision threshold
// ---------------------------------------------------------------------------

/// Fixed sweep grid {0.05, 0.10, ..., 0.95}.
pub fn threshold_grid() -> Vec<f64> {
    (1..=19).map(|i| f64::from(i) * 0.05).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionThreshold {
    pub t: f64,
    pub macro_f1: f64,
}

/// Apply a threshold: predict 1 when `p >= t`.
pub fn apply_threshold(probs: &[f64], t: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= t)).collect()
}

/// Grid threshold maximizing macro-F1; ties go to the smallest t.
pub fn sweep_threshold(probs: &[f64], labels: &[u8]) -> DecisionThreshold {
    let mut best = DecisionThreshold {
        t: 0.05,
        macro_f1: -1.0,
    };
    for t in threshold_grid() {
        let preds = apply_threshold(probs, t);
        let f1 = metrics::macro_f1(&preds, labels).unwrap_or(0.0);
        if f1 > best.macro_f1 {
            best = DecisionThreshold { t, macro_f1: f1 };
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Full training protocol
// ---------------------------------------------------------------------------

/// Metrics of one evaluation pass.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvalRow {
    pub accuracy: f64,
    pub roc_auc: f64,
    pub macro_f1: f64,
    pub brier: f64,
    pub ece: f64,
}

pub fn evaluate_probs(probs: &[f64], threshold: f64, labels: &[u8]) -> Result<EvalRow, TrainError> {
    let preds = apply_threshold(probs, threshold);
    Ok(EvalRow {
        accuracy: metrics::accuracy(&preds, labels)?,
        roc_auc: metrics::roc_auc(probs, labels)?,
        macro_f1: metrics::macro_f1(&preds, labels)?,
        brier: metrics::brier(probs, labels)?,
        ece: metrics::ece(probs, labels, metrics::ECE_BINS)?,
    })
}

/// The complete trained artifact: base weights, calibrator, threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedModel {
    pub base: LogRegModel,
    pub calibrator: PlattCalibrator,
    pub threshold: f64,
    /// Validation macro-F1 per C-grid entry, for the record.
    pub c_search: Vec<(f64, f64)>,
}

impl TrainedModel {
    /// Calibrated probabilities on a feature set.
    pub fn predict(&self, x: &FeatureSet) -> Result<Vec<f64>, TrainError> {
        let scores = self.base.decision_scores(x)?;
        Ok(self.calibrator.apply_all(&scores))
    }

    pub fn save(&self, path: &Path, extra: &serde_json::Value) -> std::io::Result<()> {
        let doc = serde_json::json!({
            "schema_version": crate::artifact::SCHEMA_VERSION,
            "model": self,
            "provenance": extra,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).expect("model serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<TrainedModel> {
        let text = std::fs::read_to_string(path)?;
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        serde_json::from_value(doc["model"].clone())
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub c_grid: Vec<f64>,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            c_grid: vec![0.1, 1.0, 10.0],
            max_iter: 1000,
            seed: 0,
        }
    }
}

/// Outcome of the full protocol on one split.
#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub model: TrainedModel,
    pub test: EvalRow,
    pub test_probs: Vec<f64>,
    pub test_preds: Vec<u8>,
}

/// The supervised protocol for one representation and one split:
///
/// 1. select C from the grid by validation macro-F1 (raw probabilities,
///    threshold swept per C; ties go to the smaller C),
/// 2. fit Platt on validation decision scores of the selected model,
/// 3. re-sweep the threshold on calibrated validation probabilities,
/// 4. evaluate on test with calibrated probabilities at that threshold.
pub fn full_protocol(
    train: (&FeatureSet, &[u8]),
    val: (&FeatureSet, &[u8]),
    test: (&FeatureSet, &[u8]),
    config: &ProtocolConfig,
) -> Result<ProtocolOutcome, TrainError> {
    let cw = balanced_weights(train.1)?;

    let mut best: Option<(f64, LogRegModel, Vec<f64>)> = None;
    let mut c_search = Vec::new();
    for &c in &config.c_grid {
        let model = train_logreg(
            train.0,
            train.1,
            cw,
            &TrainOptions {
                c,
                max_iter: config.max_iter,
                grad_tol: 1e-6,
                seed: config.seed,
            },
        )?;
        let scores = model.decision_scores(val.0)?;
        let probs: Vec<f64> = scores.iter().map(|&z| sigmoid(z)).collect();
        let swept = sweep_threshold(&probs, val.1);
        c_search.push((c, swept.macro_f1));
        let better = best
            .as_ref()
            .is_none_or(|(best_f1, _, _)| swept.macro_f1 > *best_f1);
        if better {
            best = Some((swept.macro_f1, model, scores));
        }
    }
    let (_, base, val_scores) = best.expect("c grid is non-empty");

    let calibrator = fit_platt(&val_scores, val.1)?;
    let calibrated_val = calibrator.apply_all(&val_scores);
    let threshold = sweep_threshold(&calibrated_val, val.1);

    let model = TrainedModel {
        base,
        calibrator,
        threshold: threshold.t,
        c_search,
    };
    let test_probs = model.predict(test.0)?;
    let test_preds = apply_threshold(&test_probs, threshold.t);
    let test_row = evaluate_probs(&test_probs, threshold.t, test.1)?;
    Ok(ProtocolOutcome {
        model,
        test: test_row,
        test_probs,
        test_preds,
    })
}

// ---------------------------------------------------------------------------
// Stacked ensembles
// ---------------------------------------------------------------------------

/// Meta logistic regression over base-model probability columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackedModel {
    pub meta: LogRegModel,
    pub base_ids: Vec<String>,
}

/// Build the stacked feature set from per-base probability columns.
pub fn stacked_features(
    base_probs: &[Vec<f64>],
    base_ids: &[String],
    ids: &[String],
) -> FeatureSet {
    let rows = ids.len();
    let cols = base_probs.len();
    let mut matrix = DenseMatrix::zeros(rows, cols);
    for (col, probs) in base_probs.iter().enumerate() {
        assert_eq!(probs.len(), rows, "base column length mismatch");
        for (row, &p) in probs.iter().enumerate() {
            matrix.row_mut(row)[col] = p;
        }
    }
    let descriptor = format!("stacked:{}", base_ids.join("+"));
    FeatureSet {
        kind: FeatureKind::StackedProbs,
        space_hash: crate::hashing::sha256_hex(descriptor.as_bytes()),
        ids: ids.to_vec(),
        data: FeatureData::Dense(matrix),
    }
}

/// Train the meta-model on base probability columns (C fixed at 1.0 by
/// default; same convergence contract as the base trainer).
pub fn train_stacked(
    base_probs: &FeatureSet,
    y: &[u8],
    c: f64,
    seed: u64,
) -> Result<StackedModel, TrainError> {
    let cw = balanced_weights(y)?;
    let meta = train_logreg(
        base_probs,
        y,
        cw,
        &TrainOptions {
            c,
            seed,
            ..TrainOptions::default()
        },
    )?;
    Ok(StackedModel {
        meta,
        base_ids: Vec::new(),
    })
}

/// One base representation's train/val/test feature sets.
pub struct EnsemblePart<'a> {
    pub name: String,
    pub train: &'a FeatureSet,
    pub val: &'a FeatureSet,
    pub test: &'a FeatureSet,
}

#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub bases: Vec<(String, LogRegModel)>,
    /// Per-base calibrators when the meta-model consumes calibrated
    /// probabilities; empty otherwise.
    pub base_calibrators: Vec<PlattCalibrator>,
    pub meta: TrainedModel,
    pub test: EvalRow,
    pub test_probs: Vec<f64>,
    pub test_preds: Vec<u8>,
}

impl EnsembleOutcome {
    /// Meta-model probabilities for aligned feature sets (one per base).
    pub fn predict(&self, sets: &[&FeatureSet]) -> Result<Vec<f64>, TrainError> {
        assert_eq!(sets.len(), self.bases.len(), "one feature set per base");
        let mut columns = Vec::with_capacity(sets.len());
        let names: Vec<String> = self.bases.iter().map(|(n, _)| n.clone()).collect();
        for (i, (set, (_, model))) in sets.iter().zip(&self.bases).enumerate() {
            let scores = model.decision_scores(set)?;
            let probs = match self.base_calibrators.get(i) {
                Some(cal) => cal.apply_all(&scores),
                None => scores.iter().map(|&z| sigmoid(z)).collect(),
            };
            columns.push(probs);
        }
        let stacked = stacked_features(&columns, &names, &sets[0].ids);
        self.meta.predict(&stacked)
    }
}

/// Stacked-ensemble protocol under one shared split.
///
/// Each base model is fit on the training split with its own C search on
/// validation macro-F1; the meta logistic regression is then trained on
/// the validation-split base probabilities (raw sigmoid outputs by
/// default, calibrated when `use_calibrated_bases`), keeping the meta fit
/// off the training split the bases already saw. Platt calibration and the
/// threshold re-sweep for the meta-model use the validation split, and the
/// test split is touched once at the end.
pub fn ensemble_protocol(
    parts: &[EnsemblePart<'_>],
    train_y: &[u8],
    val_y: &[u8],
    test_y: &[u8],
    config: &ProtocolConfig,
    use_calibrated_bases: bool,
) -> Result<EnsembleOutcome, TrainError> {
    assert!(!parts.is_empty(), "ensemble needs at least one base");
    let cw = balanced_weights(train_y)?;

    let mut bases = Vec::new();
    let mut base_calibrators = Vec::new();
    let mut names = Vec::new();
    let mut val_columns: Vec<Vec<f64>> = Vec::new();
    let mut test_columns: Vec<Vec<f64>> = Vec::new();
    for part in parts {
        let mut best: Option<(f64, LogRegModel)> = None;
        for &c in &config.c_grid {
            let model = train_logreg(
                part.train,
                train_y,
                cw,
                &TrainOptions {
                    c,
                    max_iter: config.max_iter,
                    grad_tol: 1e-6,
                    seed: config.seed,
                },
            )?;
            let probs = model.predict_proba(part.val)?;
            let swept = sweep_threshold(&probs, val_y);
            if best
                .as_ref()
                .is_none_or(|(best_f1, _)| swept.macro_f1 > *best_f1)
            {
                best = Some((swept.macro_f1, model));
            }
        }
        let (_, model) = best.expect("c grid is non-empty");
        let val_scores = model.decision_scores(part.val)?;
        let test_scores = model.decision_scores(part.test)?;
        if use_calibrated_bases {
            let cal = fit_platt(&val_scores, val_y)?;
            val_columns.push(cal.apply_all(&val_scores));
            test_columns.push(cal.apply_all(&test_scores));
            base_calibrators.push(cal);
        } else {
            val_columns.push(val_scores.iter().map(|&z| sigmoid(z)).collect());
            test_columns.push(test_scores.iter().map(|&z| sigmoid(z)).collect());
        }
        names.push(part.name.clone());
        bases.push((part.name.clone(), model));
    }

    let meta_train = stacked_features(&val_columns, &names, &parts[0].val.ids);
    let meta_test = stacked_features(&test_columns, &names, &parts[0].test.ids);

    let meta_cw = balanced_weights(val_y)?;
    let meta_base = train_logreg(
        &meta_train,
        val_y,
        meta_cw,
        &TrainOptions {
            c: 1.0,
            max_iter: config.max_iter,
            grad_tol: 1e-6,
            seed: config.seed,
        },
    )?;
    let meta_val_scores = meta_base.decision_scores(&meta_train)?;
    let calibrator = fit_platt(&meta_val_scores, val_y)?;
    let calibrated_val = calibrator.apply_all(&meta_val_scores);
    let threshold = sweep_threshold(&calibrated_val, val_y);

    let meta = TrainedModel {
        base: meta_base,
        calibrator,
        threshold: threshold.t,
        c_search: vec![(1.0, threshold.macro_f1)],
    };
    let test_probs = meta.predict(&meta_test)?;
    let test_preds = apply_threshold(&test_probs, threshold.t);
    let test_row = evaluate_probs(&test_probs, threshold.t, test_y)?;
    Ok(EnsembleOutcome {
        bases,
        base_calibrators,
        meta,
        test: test_row,
        test_probs,
        test_preds,
    })
}
