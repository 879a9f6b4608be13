//! Acceptance suite: one test per criterion, each printing a PASS line.
//!
//! These are the exit gates for the shipped pipeline: exact mapping
//! enumerations, oracle equivalences, optimizer and calibration checks,
//! leakage guarantees, end-to-end synthetic reproduction of the qualitative
//! claims, monitoring math fixtures, and byte-level determinism of the
//! staged CLI. Criteria run against the public library surface plus the
//! installed binary; every tolerance is pinned here, in code.

use std::collections::{BTreeSet, HashMap};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tagrisk_core::corpus::{
    brute_force_clusters, cluster_near_duplicates, compute_fingerprints, estimate_jaccard,
    exact_jaccard, exact_prints, normalize_text, pairwise_agreement, token_shingles,
    DedupThresholds, FingerprintParams, MessagePrints, NormalizedMessage,
};
use tagrisk_core::eval::metrics::{brier, ece, roc_auc, roc_auc_pair_oracle, ECE_BINS};
use tagrisk_core::eval::{
    ablation_suite, channel_disjoint_split, domain_disjoint_split, noise_stress, run_experiment,
    standard_ablation_subsets, ExperimentConfig, SplitConfig,
};
use tagrisk_core::features::{DenseMatrix, FeatureData};
use tagrisk_core::learn::{
    fit_platt, objective_gradient, objective_value, sigmoid,
};
use tagrisk_core::monitor::{
    high_risk_tail, jensen_shannon, log_odds_enrichment, peak_to_median, ScoredMessage,
};
use tagrisk_core::supervision::{
    assign_label, domain_risk, risk_components, Credibility, Factual, Label, Thresholds,
};
use tagrisk_core::synth::{
    generate_dedup_corpus, generate_experiment, SignalProfile, SynthExperimentConfig,
};
use tagrisk_core::urlkit::{canonical_domain, extract_urls, mask_urls, SuffixRules};
use tagrisk_core::Field;

fn pass(criterion: u32, name: &str, elapsed: std::time::Duration) {
    println!(
        "ACCEPTANCE {criterion:02} {name}: PASS ({:.2}s)",
        elapsed.as_secs_f64()
    );
}

// -------------------------------------------------------------------------
// Criterion 1: risk-mapping enumeration, tolerance zero.
// -------------------------------------------------------------------------
#[test]
fn a01_risk_mapping_enumeration() {
    let start = Instant::now();
    let thresholds = Thresholds::default();
    // Hand-derived table over all 18 (credibility, factual) pairs.
    let expected_label = |c: Credibility, f: Factual| -> Label {
        use Credibility as C;
        use Factual as F;
        match (c, f) {
            (C::High, F::VeryHigh) | (C::High, F::High) => Label::Safe,
            (C::High, F::MostlyFactual)
            | (C::High, F::Mixed)
            | (C::Medium, F::VeryHigh)
            | (C::Medium, F::High)
            | (C::Medium, F::MostlyFactual) => Label::Unlabeled,
            _ => Label::Risky,
        }
    };
    let mut checked = 0;
    for c in Credibility::ALL {
        for f in Factual::ALL {
            let (r_c, r_f) = risk_components(c, f);
            let r = domain_risk(r_c, r_f);
            let closed_form = 1.0 - (1.0 - r_c) * (1.0 - r_f);
            assert_eq!(r, closed_form, "exact closed form for {c:?}/{f:?}");
            assert_eq!(
                assign_label(r, &thresholds).unwrap(),
                expected_label(c, f),
                "label for {c:?}/{f:?} with R = {r}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 18);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "runtime budget exceeded");
    pass(1, "risk-mapping enumeration", elapsed);
}

// -------------------------------------------------------------------------
// Criterion 2: dedup oracle equivalence on 20 seeded corpora.
// -------------------------------------------------------------------------
fn prints_for(messages: &[NormalizedMessage], params: &FingerprintParams) -> Vec<MessagePrints> {
    messages
        .iter()
        .map(|m| match compute_fingerprints(&m.canonical_text, params) {
            Ok(fp) => MessagePrints::Full(fp),
            Err(_) => {
                let (canon_hash, tokenset_hash) = exact_prints(&m.canonical_text);
                MessagePrints::ExactOnly {
                    canon_hash,
                    tokenset_hash,
                }
            }
        })
        .collect()
}

#[test]
fn a02_dedup_oracle_equivalence() {
    let start = Instant::now();
    let params = FingerprintParams::default();
    for seed in 0..20u64 {
        let raw = generate_dedup_corpus(1000 + seed, 170);
        assert!(raw.len() <= 500, "corpus size {}", raw.len());
        let messages: Vec<NormalizedMessage> = raw
            .iter()
            .map(|m| NormalizedMessage {
                id: m.id.clone(),
                channel_id: m.channel_id.clone(),
                timestamp: m.timestamp,
                fwd_id: m.fwd_id.clone(),
                canonical_text: normalize_text(&m.text),
            })
            .collect();
        let prints = prints_for(&messages, &params);

        // Full thresholds: agreement >= 0.95, slack only from MinHash.
        let thresholds = DedupThresholds::default();
        let greedy = cluster_near_duplicates(&messages, &prints, None, &thresholds);
        let oracle = brute_force_clusters(&messages, &prints, None, &thresholds);
        let agreement = pairwise_agreement(&greedy.assignments, &oracle);
        assert!(
            agreement >= 0.95,
            "seed {seed}: agreement {agreement} < 0.95"
        );

        // MinHash disabled: exact-fingerprint and SimHash decisions must
        // match the oracle exactly.
        let exact_only = DedupThresholds {
            min_jaccard: 1.1,
            ..thresholds
        };
        let greedy = cluster_near_duplicates(&messages, &prints, None, &exact_only);
        let oracle = brute_force_clusters(&messages, &prints, None, &exact_only);
        let agreement = pairwise_agreement(&greedy.assignments, &oracle);
        assert_eq!(
            agreement, 1.0,
            "seed {seed}: exact/simhash path disagreed with oracle"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "runtime budget exceeded");
    pass(2, "dedup oracle equivalence", elapsed);
}

// -------------------------------------------------------------------------
// Criterion 3: MinHash accuracy against exact Jaccard.
// -------------------------------------------------------------------------
#[test]
fn a03_minhash_accuracy() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let params = FingerprintParams::default();
    assert_eq!(params.permutations, 256);
    let vocab: Vec<String> = (0..120)
        .map(|_| {
            let len = rng.gen_range(4..9);
            (0..len)
                .map(|_| char::from(b'a' + rng.gen_range(0..26u8)))
                .collect()
        })
        .collect();
    let mut within = 0usize;
    let n_pairs = 200;
    for _ in 0..n_pairs {
        let len = rng.gen_range(15..45);
        let base: Vec<String> = (0..len)
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect();
        let mut other = base.clone();
        for _ in 0..rng.gen_range(0..len) {
            let pos = rng.gen_range(0..other.len());
            other[pos] = vocab[rng.gen_range(0..vocab.len())].clone();
        }
        let a = base.join(" ");
        let b = other.join(" ");
        let exact = exact_jaccard(&token_shingles(&a), &token_shingles(&b));
        let fa = compute_fingerprints(&a, &params).unwrap();
        let fb = compute_fingerprints(&b, &params).unwrap();
        let estimate = estimate_jaccard(&fa.minhash_sig, &fb.minhash_sig).unwrap();
        if (estimate - exact).abs() <= 0.08 {
            within += 1;
        }
    }
    assert!(
        within >= 190,
        "{within}/{n_pairs} within 0.08 (need >= 95%)"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "runtime budget exceeded");
    pass(3, "minhash accuracy", elapsed);
}

// -------------------------------------------------------------------------
// Criterion 4: URL hygiene on a fuzz corpus.
// -------------------------------------------------------------------------
#[test]
fn a04_url_hygiene_fuzz() {
    let start = Instant::now();
    let rules = SuffixRules::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let words = ["read", "this", "now", "от", "канал", "свежее", "big", "story", "ok"];
    let hosts = [
        "example.com",
        "www.Example.co.uk",
        "a.b.github.io",
        "sub.domain.notarealtld",
        "t.ly",
        "news.site",
        "foo.bar.example",
        "shop.foo.ck",
    ];
    let mut masked_clean = 0usize;
    let n = 1000;
    for _ in 0..n {
        let mut parts: Vec<String> = Vec::new();
        for _ in 0..rng.gen_range(1..8) {
            match rng.gen_range(0..6) {
                0 => parts.push(format!(
                    "https://{}/p/{}?q=1",
                    hosts[rng.gen_range(0..hosts.len())],
                    rng.gen_range(0..1000)
                )),
                1 => parts.push(hosts[rng.gen_range(0..hosts.len())].to_string()),
                2 => parts.push(format!(
                    "user{}@{}",
                    rng.gen_range(0..50),
                    hosts[rng.gen_range(0..hosts.len())]
                )),
                3 => parts.push(format!("(see {})", hosts[rng.gen_range(0..hosts.len())])),
                4 => parts.push("!!!:)??,.".to_string()),
                _ => parts.push(words[rng.gen_range(0..words.len())].to_string()),
            }
        }
        let text = parts.join(" ");
        let masked = mask_urls(&text, &rules);
        let residual = extract_urls(&masked.text, &rules);
        assert!(
            residual.is_empty(),
            "residual URLs {residual:?} in masked {:?}",
            masked.text
        );
        masked_clean += 1;

        for span in extract_urls(&text, &rules) {
            if let Ok(outcome) = canonical_domain(&span.raw, &rules) {
                let again = canonical_domain(&outcome.domain, &rules).unwrap();
                assert_eq!(
                    again.domain, outcome.domain,
                    "canonical_domain not idempotent for {}",
                    span.raw
                );
            }
        }
    }
    assert_eq!(masked_clean, n);
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "runtime budget exceeded");
    pass(4, "url hygiene fuzz", elapsed);
}

// -------------------------------------------------------------------------
// Criterion 5: optimizer correctness.
// -------------------------------------------------------------------------
#[test]
fn a05_optimizer_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(15);

    // Analytic gradient vs central finite differences on 50 instances.
    for trial in 0..50 {
        let n = rng.gen_range(4..40);
        let d = rng.gen_range(1..8);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.5))).collect();
        let x = FeatureData::Dense(DenseMatrix::from_rows(rows));
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let b: f64 = rng.gen_range(-1.0..1.0);
        let cw = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
        let c = rng.gen_range(0.1..10.0);
        let (grad_w, grad_b) = objective_gradient(&x, &y, &cw, c, &w, b);
        let h = 1e-6;
        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (objective_value(&x, &y, &cw, c, &wp, b)
                - objective_value(&x, &y, &cw, c, &wm, b))
                / (2.0 * h);
            assert!(
                (fd - grad_w[j]).abs() <= 1e-5,
                "trial {trial}: |fd - grad| = {}",
                (fd - grad_w[j]).abs()
            );
        }
        let fd_b = (objective_value(&x, &y, &cw, c, &w, b + h)
            - objective_value(&x, &y, &cw, c, &w, b - h))
            / (2.0 * h);
        assert!((fd_b - grad_b).abs() <= 1e-5);
    }

    // Monotone loss under the Armijo accept rule.
    for seed in [3u64, 9, 27] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..250)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<u8> = rows
            .iter()
            .map(|r| u8::from(r[0] - r[2] + rng.gen_range(-0.4..0.4) > 0.0))
            .collect();
        let x = FeatureData::Dense(DenseMatrix::from_rows(rows));
        let cw = [1.0, 1.0];
        let mut w = vec![0.0; 5];
        let mut b = 0.0;
        let mut fval = objective_value(&x, &y, &cw, 1.0, &w, b);
        let mut step = 1.0;
        let mut losses = vec![fval];
        for _ in 0..60 {
            let (gw, gb) = objective_gradient(&x, &y, &cw, 1.0, &w, b);
            let gsq: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
            step *= 2.0;
            loop {
                let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(v, g)| v - step * g).collect();
                let cand_b = b - step * gb;
                let f = objective_value(&x, &y, &cw, 1.0, &cand_w, cand_b);
                if f <= fval - 1e-4 * step * gsq {
                    w = cand_w;
                    b = cand_b;
                    fval = f;
                    break;
                }
                step *= 0.5;
            }
            losses.push(fval);
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0], "loss increased under Armijo rule");
        }
    }

    // Label-shuffled control at chance level over 10 seeds.
    let experiment = generate_experiment(&SynthExperimentConfig {
        n_messages: 8000,
        seed: 51,
        ..SynthExperimentConfig::default()
    });
    let mut data = experiment.into_experiment_data();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(52);
    data.labels.shuffle(&mut shuffle_rng);
    let config = ExperimentConfig {
        seeds: (0..10).map(|i| 300 + i).collect(),
        ..ExperimentConfig::default()
    };
    let outcome = run_experiment(&data, &config).unwrap();
    let mean_auc = outcome.report.mean.roc_auc;
    assert!(
        (0.45..=0.55).contains(&mean_auc),
        "label-shuffled mean AUC {mean_auc} outside [0.45, 0.55]"
    );
    pass(5, "optimizer correctness", start.elapsed());
}

// -------------------------------------------------------------------------
// Criterion 6: calibration on a known generator.
// -------------------------------------------------------------------------
#[test]
fn a06_calibration_known_generator() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let truth = |s: f64| sigmoid(2.0 * s - 1.0);
    let draw = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<f64>, Vec<u8>) {
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let s: f64 = rng.gen_range(-3.0..3.0);
            scores.push(s);
            labels.push(u8::from(rng.gen_bool(truth(s))));
        }
        (scores, labels)
    };
    let n = 100_000;
    let (fit_scores, fit_labels) = draw(&mut rng, n);
    let (eval_scores, eval_labels) = draw(&mut rng, n);

    let calibrator = fit_platt(&fit_scores, &fit_labels).unwrap();
    let calibrated = calibrator.apply_all(&eval_scores);

    let e = ece(&calibrated, &eval_labels, ECE_BINS).unwrap();
    assert!(e <= 0.02, "post-Platt ECE {e} > 0.02");

    let bayes_brier: f64 = eval_scores
        .iter()
        .map(|&s| {
            let p = truth(s);
            p * (1.0 - p)
        })
        .sum::<f64>()
        / n as f64;
    let fitted_brier = brier(&calibrated, &eval_labels).unwrap();
    assert!(
        (fitted_brier - bayes_brier).abs() <= 0.005,
        "Brier {fitted_brier} vs Bayes {bayes_brier}"
    );

    let auc_raw = roc_auc(&eval_scores, &eval_labels).unwrap();
    let auc_cal = roc_auc(&calibrated, &eval_labels).unwrap();
    assert_eq!(auc_raw, auc_cal, "monotone calibration must preserve AUC");

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "runtime budget exceeded");
    pass(6, "calibration known generator", elapsed);
}

// -------------------------------------------------------------------------
// Criterion 7: metric oracles.
// -------------------------------------------------------------------------
#[test]
fn a07_metric_oracles() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..50 {
        let n = rng.gen_range(10..=1000);
        let grid: f64 = rng.gen_range(5..40) as f64;
        let probs: Vec<f64> = (0..n)
            .map(|_| (rng.gen_range(0..=grid as u32) as f64) / grid)
            .collect();
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.35))).collect();
        labels[0] = 1;
        labels[1] = 0;
        let fast = roc_auc(&probs, &labels).unwrap();
        let oracle = roc_auc_pair_oracle(&probs, &labels).unwrap();
        assert_eq!(fast, oracle, "trial {trial}: AUC differs from pair oracle");
    }

    // Hand-computed fixtures to 1e-12.
    assert!((brier(&[0.8, 0.2], &[1, 0]).unwrap() - 0.04).abs() < 1e-12);
    assert!((brier(&[0.5; 4], &[1, 0, 1, 0]).unwrap() - 0.25).abs() < 1e-12);
    assert!(brier(&[1.0, 0.0], &[1, 0]).unwrap().abs() < 1e-12);
    // ECE: constant 0.9 on all negatives -> 0.9; two-bin mix by hand:
    // bin of 0.1 holds {0.1, 0.1} with acc 0.5 -> |0.5 - 0.1| * (2/4);
    // bin of 0.9 holds {0.9, 0.9} with acc 1.0 -> |1.0 - 0.9| * (2/4).
    assert!((ece(&[0.9; 10], &[0; 10], ECE_BINS).unwrap() - 0.9).abs() < 1e-12);
    let hand = 0.5 * 0.4 + 0.5 * 0.1;
    let e = ece(&[0.1, 0.1, 0.9, 0.9], &[0, 1, 1, 1], ECE_BINS).unwrap();
    assert!((e - hand).abs() < 1e-12, "ECE {e} vs hand {hand}");
    assert!(ece(&[1.0, 0.0], &[1, 0], ECE_BINS).unwrap().abs() < 1e-12);

    pass(7, "metric oracles", start.elapsed());
}

// -------------------------------------------------------------------------
// Criterion 8: leakage guarantee.
// -------------------------------------------------------------------------
#[test]
fn a08_leakage_guarantee() {
    let start = Instant::now();
    let experiment = generate_experiment(&SynthExperimentConfig {
        n_messages: 6000,
        seed: 61,
        ..SynthExperimentConfig::default()
    });
    let config = SplitConfig::default();
    for seed in 0..10u64 {
        let split = domain_disjoint_split(&experiment.domains, seed, &config).unwrap();
        let side: BTreeSet<&str> = split
            .train
            .iter()
            .chain(&split.val)
            .map(|&i| experiment.domains[i].as_str())
            .collect();
        let overlap = split
            .test
            .iter()
            .filter(|&&i| side.contains(experiment.domains[i].as_str()))
            .count();
        assert_eq!(overlap, 0, "seed {seed}: {overlap} leaking domain rows");

        let split =
            channel_disjoint_split(&experiment.channels, &experiment.labels, seed, &config)
                .unwrap();
        let side: BTreeSet<&str> = split
            .train
            .iter()
            .chain(&split.val)
            .map(|&i| experiment.channels[i].as_str())
            .collect();
        let overlap = split
            .test
            .iter()
            .filter(|&&i| side.contains(experiment.channels[i].as_str()))
            .count();
        assert_eq!(overlap, 0, "seed {seed}: {overlap} leaking channel rows");
    }
    pass(8, "leakage guarantee", start.elapsed());
}

// -------------------------------------------------------------------------
// Criterion 9: end-to-end synthetic reproduction of qualitative claims.
// -------------------------------------------------------------------------
#[test]
fn a09_end_to_end_synthetic() {
    let start = Instant::now();

    // Strong generator: full protocol across 10 domain partitions.
    let experiment = generate_experiment(&SynthExperimentConfig {
        n_messages: 50_000,
        seed: 71,
        ..SynthExperimentConfig::default()
    });
    let index = experiment.index.clone();
    let data = experiment.into_experiment_data();
    let config = ExperimentConfig {
        seeds: (0..10).map(|i| 400 + i).collect(),
        ..ExperimentConfig::default()
    };
    let outcome = run_experiment(&data, &config).unwrap();
    assert!(
        outcome.report.mean.roc_auc >= 0.95,
        "mean AUC {} < 0.95",
        outcome.report.mean.roc_auc
    );
    assert!(
        outcome.report.mean.macro_f1 >= 0.90,
        "mean macro-F1 {} < 0.90",
        outcome.report.mean.macro_f1
    );

    // Noise-stress curve strictly decreasing in flip rate.
    let curve = noise_stress(&data, &[0.0, 0.05, 0.10, 0.20], 405, &config).unwrap();
    for pair in curve.windows(2) {
        assert!(
            pair[1].1 < pair[0].1,
            "noise curve not strictly decreasing: {curve:?}"
        );
    }

    // CTA-only generator: cta-only tracks all-tags, theme-only is chance.
    let cta_experiment = generate_experiment(&SynthExperimentConfig {
        n_messages: 20_000,
        seed: 72,
        profile: SignalProfile::CtaOnly,
        ..SynthExperimentConfig::default()
    });
    let cta_index = cta_experiment.index.clone();
    let cta_data = cta_experiment.into_experiment_data();
    let cta_config = ExperimentConfig {
        seeds: (0..5).map(|i| 500 + i).collect(),
        ..ExperimentConfig::default()
    };
    let rows = ablation_suite(
        &cta_data,
        &cta_index,
        &standard_ablation_subsets(),
        &cta_config,
    )
    .unwrap();
    let auc_of = |name: &str| {
        rows.iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.mean.roc_auc)
            .unwrap()
    };
    assert!(
        (auc_of("cta_only") - auc_of("all_tags")).abs() <= 0.05,
        "cta_only {} vs all_tags {}",
        auc_of("cta_only"),
        auc_of("all_tags")
    );
    assert!(
        (0.42..=0.58).contains(&auc_of("theme_only")),
        "theme_only {} not at chance",
        auc_of("theme_only")
    );
    assert!(
        auc_of("all_minus_cta") < auc_of("all_tags") - 0.2,
        "removing CTA must cause the largest drop: {} vs {}",
        auc_of("all_minus_cta"),
        auc_of("all_tags")
    );
    // The full-signal index and the CTA index share the canonical layout.
    assert_eq!(index.fingerprint(), cta_index.fingerprint());

    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "runtime budget exceeded: {:.1}s",
        elapsed.as_secs_f64()
    );
    pass(9, "end-to-end synthetic reproduction", elapsed);
}

// -------------------------------------------------------------------------
// Criterion 10: monitoring math.
// -------------------------------------------------------------------------
#[test]
fn a10_monitoring_math() {
    let start = Instant::now();

    // JSD bounds with equality fixtures.
    let p = [0.5, 0.5, 0.0];
    let q = [0.0, 0.0, 1.0];
    assert!((jensen_shannon(&p, &q) - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(jensen_shannon(&p, &p), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let jsd = jensen_shannon(&a, &b);
        assert!((0.0..=std::f64::consts::LN_2 + 1e-12).contains(&jsd));
    }

    // Constructed tail-enrichment corpus: planted tag z > 3, neutral < 0.5.
    let vocab = tagrisk_core::Vocabulary::builtin();
    let mut planted = tagrisk_core::TagAssignment::new(
        vec!["Finance/Crypto".into()],
        vec!["Scarcity/FOMO tactic".into()],
        vec!["Buy / invest / donate".into()],
        vec!["Chart / price graph / TA diagram".into()],
    );
    planted.canonicalize(vocab);
    let mut neutral = tagrisk_core::TagAssignment::new(
        vec!["News/Information".into()],
        vec!["Verifiable factual statement".into()],
        vec!["No CTA".into()],
        vec!["Link/URL".into()],
    );
    neutral.canonicalize(vocab);
    let n = 4000;
    let messages: Vec<ScoredMessage> = (0..n)
        .map(|i| {
            let in_tail = i < n / 20;
            let use_planted = if in_tail { i % 2 == 0 } else { i % 20 == 0 };
            ScoredMessage {
                message_id: format!("m{i:05}"),
                channel_id: "ch".into(),
                week: format!("2025-W{:02}", 1 + i % 8),
                assignment: if use_planted {
                    planted.clone()
                } else {
                    neutral.clone()
                },
                p_hat: if in_tail { 0.99 } else { 0.3 },
            }
        })
        .collect();
    let (tail, _) = high_risk_tail(&messages, 0.05).unwrap();
    assert_eq!(tail.len(), n / 20, "tail size = ceil(0.05 n) exactly");
    let rows = log_odds_enrichment(&messages, &tail, 0.01).unwrap();
    let z_of = |field: Field, tag: &str| {
        rows.iter()
            .find(|r| r.field == field && r.tag == tag)
            .map(|r| r.z)
            .unwrap()
    };
    assert!(z_of(Field::Cta, "Buy / invest / donate") > 3.0);
    assert!(z_of(Field::Claim, "Scarcity/FOMO tactic") > 3.0);

    // A neutral corpus: each score level holds one message of each
    // assignment, so tail and rest proportions match exactly.
    let uniform: Vec<ScoredMessage> = (0..2000)
        .map(|i| ScoredMessage {
            message_id: format!("u{i:05}"),
            channel_id: "ch".into(),
            week: "2025-W01".into(),
            assignment: if i % 2 == 0 {
                planted.clone()
            } else {
                neutral.clone()
            },
            p_hat: ((i / 2) % 100) as f64 / 100.0,
        })
        .collect();
    let (utail, _) = high_risk_tail(&uniform, 0.05).unwrap();
    let urows = log_odds_enrichment(&uniform, &utail, 0.01).unwrap();
    for row in &urows {
        assert!(
            row.z.abs() < 0.5,
            "neutral tag {} has |z| = {}",
            row.tag,
            row.z.abs()
        );
    }

    // Tail size: ceiling rule on a non-multiple count.
    let odd: Vec<ScoredMessage> = (0..101)
        .map(|i| ScoredMessage {
            message_id: format!("t{i}"),
            channel_id: "c".into(),
            week: "2025-W01".into(),
            assignment: neutral.clone(),
            p_hat: i as f64 / 101.0,
        })
        .collect();
    let (tail, threshold) = high_risk_tail(&odd, 0.05).unwrap();
    assert_eq!(tail.len(), 6); // ceil(5.05)
    assert!(tail.iter().all(|&i| odd[i].p_hat >= threshold));

    // Peak-to-median fixtures, including the reported 2.88 pattern.
    assert!((peak_to_median(&[0.08, 0.08, 0.24]).unwrap() - 3.0).abs() < 1e-12);
    let ratio = peak_to_median(&[0.05, 0.0817, 0.235]).unwrap();
    assert!((ratio - 0.235 / 0.0817).abs() < 1e-12);
    assert!((ratio - 2.88).abs() < 0.01);
    assert!((peak_to_median(&[0.1, 0.1, 0.1]).unwrap() - 1.0).abs() < 1e-12);

    pass(10, "monitoring math", start.elapsed());
}

// -------------------------------------------------------------------------
// Criterion 11: determinism and provenance through the staged CLI.
// -------------------------------------------------------------------------
#[test]
fn a11_determinism_and_provenance() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let binary = env!("CARGO_BIN_EXE_tagrisk");

    let run = |args: &[&str]| {
        let output = Command::new(binary)
            .args(args)
            .output()
            .expect("binary runs");
        assert!(
            output.status.success(),
            "command {args:?} failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    let out_str = out.to_str().unwrap();
    run(&[
        "--out-dir", out_str, "--seed", "7", "demo", "--messages", "1200", "--weeks", "6",
    ]);

    let tracked = [
        "clean.jsonl",
        "urls.jsonl",
        "supervision.jsonl",
        "tags.jsonl",
        "model.json",
        "scored.jsonl",
        "evaluate_report.json",
        "evaluate_report.csv",
        "monitor_summary.json",
        "enrichment.csv",
        "drift.csv",
    ];
    let snapshot: HashMap<&str, Vec<u8>> = tracked
        .iter()
        .map(|name| (*name, std::fs::read(out.join(name)).expect(name)))
        .collect();

    // Re-run a representative subset of stages with identical config+seed.
    let config = out.join("demo_config.toml");
    let config_str = config.to_str().unwrap();
    for stage in ["dedup", "urls", "supervise", "tag", "train", "evaluate", "monitor"] {
        run(&["--config", config_str, "--out-dir", out_str, "--seed", "7", stage]);
    }
    for name in tracked {
        let rerun = std::fs::read(out.join(name)).expect(name);
        assert_eq!(
            snapshot[name], rerun,
            "{name} not byte-identical after re-run"
        );
    }

    // Provenance: every stage meta carries the same config hash and
    // non-empty output digests.
    let config_hash = {
        let meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out.join("train.meta.json")).unwrap(),
        )
        .unwrap();
        meta["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(config_hash.len(), 64);
    for stage in [
        "ingest", "dedup", "urls", "supervise", "tag", "featurize", "train", "evaluate",
        "monitor",
    ] {
        let meta: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out.join(format!("{stage}.meta.json"))).unwrap(),
        )
        .unwrap();
        assert_eq!(
            meta["config_hash"].as_str().unwrap(),
            config_hash,
            "{stage} config hash differs"
        );
        assert!(
            !meta["outputs"].as_object().unwrap().is_empty(),
            "{stage} recorded no outputs"
        );
    }
    // Model artifact embeds the hash chain.
    let model: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    assert_eq!(model["config_hash"].as_str().unwrap(), config_hash);
    assert_eq!(model["vocabulary_fingerprint"].as_str().unwrap().len(), 64);

    pass(11, "determinism and provenance", start.elapsed());
}
