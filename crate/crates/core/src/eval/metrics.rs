//! Classification and calibration metrics.
//!
//! ROC-AUC is computed exactly (midranks for ties), equal to the O(n^2)
//! pair-counting definition. Macro-F1 uses the declared zero-denominator
//! conventions needed by degenerate threshold sweeps. ECE uses 15
//! equal-width right-closed bins weighted by sample frequency.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricError> {
    if a == 0 {
        return Err(MetricError::Empty);
    }
    if a != b {
        return Err(MetricError::LengthMismatch { left: a, right: b });
    }
    Ok(())
}

/// Fraction of predictions equal to the label.
pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Probability that a random positive outranks a random negative, ties
/// counted one half. Midrank computation; exactly equals pair counting.
pub fn roc_auc(probs: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(probs.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].partial_cmp(&probs[b]).expect("finite probabilities"));
    // Midranks over tie groups; rank sums of halves stay exact in f64.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// O(n^2) pair-counting ROC-AUC used as the verification oracle.
pub fn roc_auc_pair_oracle(probs: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(probs.len(), labels.len())?;
    let mut wins = 0.0f64;
    let mut pairs = 0.0f64;
    for i in 0..probs.len() {
        if labels[i] != 1 {
            continue;
        }
        for j in 0..probs.len() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if probs[i] > probs[j] {
                wins += 1.0;
            } else if probs[i] == probs[j] {
                wins += 0.5;
            }
        }
    }
    if pairs == 0.0 {
        return Err(MetricError::SingleClass);
    }
    Ok(wins / pairs)
}

/// Unweighted mean of per-class F1. A class with zero predicted and zero
/// actual members contributes F1 = 1; any other zero denominator
/// contributes 0.
pub fn macro_f1(preds: &[u8], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(preds.len(), labels.len())?;
    let mut sum = 0.0;
    for class in [0u8, 1u8] {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &y) in preds.iter().zip(labels) {
            let predicted = p == class;
            let actual = y == class;
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        sum += if denom == 0 {
            1.0
        } else {
            2.0 * tp as f64 / denom as f64
        };
    }
    Ok(sum / 2.0)
}

/// Mean squared error between probabilities and binary outcomes.
pub fn brier(probs: &[f64], labels: &[u8]) -> Result<f64, MetricError> {
    check_lengths(probs.len(), labels.len())?;
    let sum: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let d = p - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / probs.len() as f64)
}

/// Number of equal-width ECE bins.
pub const ECE_BINS: usize = 15;

/// Bin index for a probability: right-closed bins, p = 0 in bin 0.
fn ece_bin(p: f64, bins: usize) -> usize {
    if p <= 0.0 {
        return 0;
    }
    let b = (p * bins as f64).ceil() as usize;
    b.saturating_sub(1).min(bins - 1)
}

/// Expected calibration error over `bins` equal-width intervals, weighted
/// by sample frequency; empty bins contribute nothing.
pub fn ece(probs: &[f64], labels: &[u8], bins: usize) -> Result<f64, MetricError> {
    check_lengths(probs.len(), labels.len())?;
    let mut count = vec![0usize; bins];
    let mut conf = vec![0.0f64; bins];
    let mut acc = vec![0.0f64; bins];
    for (&p, &y) in probs.iter().zip(labels) {
        let b = ece_bin(p, bins);
        count[b] += 1;
        conf[b] += p;
        acc[b] += f64::from(y);
    }
    let n = probs.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let nb = count[b] as f64;
        total += (nb / n) * ((acc[b] / nb) - (conf[b] / nb)).abs();
    }
    Ok(total)
}

/// Mean and population standard deviation of a per-seed metric series.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_perfect_and_constant() {
        let labels = [1, 1, 0, 0];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5, 0.5, 0.5], &labels).unwrap(), 0.5);
        assert_eq!(
            roc_auc(&[0.9, 0.8], &[1, 1]),
            Err(MetricError::SingleClass)
        );
    }

    #[test]
    fn auc_equals_pair_oracle_exactly_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..50 {
            let n = rng.gen_range(10..=1000);
            // Coarse grid of probabilities forces plenty of ties.
            let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=20) as f64 / 20.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.4))).collect();
            labels[0] = 1;
            labels[1] = 0;
            let fast = roc_auc(&probs, &labels).unwrap();
            let oracle = roc_auc_pair_oracle(&probs, &labels).unwrap();
            assert_eq!(fast, oracle, "trial {trial}: fast {fast} != oracle {oracle}");
        }
    }

    #[test]
    fn macro_f1_examples() {
        assert_eq!(macro_f1(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), 1.0);
        assert_eq!(macro_f1(&[0, 1, 0, 1], &[1, 0, 1, 0]).unwrap(), 0.0);
        // TP=2 FP=1 FN=1 TN=6: F1 for class 1 = 4/6; for class 0 = 12/14.
        let labels = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
        let preds = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
        let expected = (2.0 * 2.0 / (2.0 * 2.0 + 1.0 + 1.0) + 12.0 / 14.0) / 2.0;
        assert!((macro_f1(&preds, &labels).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_vacuous_class_convention() {
        // No positives anywhere: class 1 has zero predicted and zero actual
        // members and contributes 1 by convention.
        assert_eq!(macro_f1(&[0, 0], &[0, 0]).unwrap(), 1.0);
        // All positives predicted on all-positive labels: same for class 0.
        assert_eq!(macro_f1(&[1, 1], &[1, 1]).unwrap(), 1.0);
        // Predicted positives with no actual positives: class 1 denominator
        // is nonzero with TP = 0, so it contributes 0.
        assert_eq!(macro_f1(&[1, 1], &[0, 0]).unwrap(), 0.0);
    }

    #[test]
    fn brier_examples() {
        assert_eq!(brier(&[1.0, 0.0], &[1, 0]).unwrap(), 0.0);
        assert_eq!(brier(&[0.5, 0.5], &[1, 0]).unwrap(), 0.25);
        let b = brier(&[0.8, 0.2], &[1, 0]).unwrap();
        assert!((b - 0.04).abs() < 1e-15);
    }

    #[test]
    fn ece_examples() {
        // Perfect one-hot predictions: every occupied bin is calibrated.
        assert_eq!(ece(&[1.0, 0.0, 1.0], &[1, 0, 1], ECE_BINS).unwrap(), 0.0);
        // Constant 0.9 on all-negative labels: single bin, gap 0.9.
        let e = ece(&[0.9; 10], &[0; 10], ECE_BINS).unwrap();
        assert!((e - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ece_bin_boundaries_right_closed() {
        assert_eq!(ece_bin(0.0, 15), 0);
        assert_eq!(ece_bin(1.0 / 15.0, 15), 0);
        assert_eq!(ece_bin(1.0 / 15.0 + 1e-12, 15), 1);
        assert_eq!(ece_bin(1.0, 15), 14);
    }

    #[test]
    fn ece_small_for_calibrated_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mut probs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let p: f64 = rng.gen();
            probs.push(p);
            labels.push(u8::from(rng.gen_bool(p)));
        }
        let e = ece(&probs, &labels, ECE_BINS).unwrap();
        assert!(e <= 0.02, "calibrated-by-construction ECE was {e}");
    }

    #[test]
    fn metrics_bounded_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(5..200);
            let probs: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
            labels[0] = 1;
            if n > 1 {
                labels[1] = 0;
            }
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            for value in [
                roc_auc(&probs, &labels).unwrap(),
                macro_f1(&preds, &labels).unwrap(),
                brier(&probs, &labels).unwrap(),
                ece(&probs, &labels, ECE_BINS).unwrap(),
                accuracy(&preds, &labels).unwrap(),
            ] {
                assert!((0.0..=1.0).contains(&value));
            }
        }
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[2.0, 4.0]);
        assert_eq!(m, 3.0);
        assert_eq!(s, 1.0);
    }
}
