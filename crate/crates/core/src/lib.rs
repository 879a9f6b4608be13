//! Credibility-risk scoring for short messages from closed-vocabulary
//! rhetorical tags.
//!
//! The crate implements an end-to-end, URL-agnostic analytics pipeline:
//!
//! 1. [`corpus`] — deterministic text normalization, low-information
//!    filtering, and single-pass greedy near-duplicate clustering backed by
//!    exact fingerprints, MinHash/LSH, and SimHash.
//! 2. [`urlkit`] — URL extraction, offline redirect resolution,
//!    public-suffix domain canonicalization, and URL masking. Masking is the
//!    single shared choke point: no downstream feature path ever sees a raw
//!    URL.
//! 3. [`supervision`] — distant supervision from per-domain
//!    credibility/factual-reporting ratings: ordinal risk components, the
//!    domain risk score, worst-linked-source message risk, and
//!    high-confidence binary labels.
//! 4. [`codebook`] — the closed rhetorical vocabulary (theme, claim type,
//!    call to action, evidence) with machine-checkable constraints, tagger
//!    output parsing, and field agreement metrics.
//! 5. [`tagger`] — tag acquisition via an HTTP endpoint, a precomputed tag
//!    file, or a deterministic rule-based mock for tests and synthetic runs.
//! 6. [`features`] — multi-hot tag vectors, TF-IDF over masked text,
//!    external embeddings with train-fit standardization, field-subset
//!    selection, and bit-flip noise injection.
//! 7. [`learn`] — L2-regularized logistic regression with balanced class
//!    weights, Platt calibration on validation scores, threshold sweeps, and
//!    stacked ensembles.
//! 8. [`eval`] — leakage-safe domain- and channel-disjoint splits, metric
//!    oracles (ROC-AUC, macro-F1, Brier, ECE), the repeated-seed experiment
//!    harness, tag-field ablations, and the tagger-noise stress test.
//! 9. [`monitor`] — risk-weighted monitoring: high-risk tail, Dirichlet
//!    prior log-odds enrichment, tail lift, prototypes with coverage,
//!    k-means strategy families, weekly Jensen-Shannon drift, and
//!    peak-to-median burstiness.
//!
//! [`synth`] ships the seeded synthetic corpus generators used by the demo
//! subcommand and the acceptance suite; [`config`] and [`artifact`] provide
//! the pipeline configuration and provenance plumbing shared by the CLI.

pub mod artifact;
pub mod codebook;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod hashing;
pub mod learn;
pub mod monitor;
pub mod net;
pub mod supervision;
pub mod synth;
pub mod tagger;
pub mod urlkit;

pub use codebook::{Field, TagAssignment, Vocabulary};
pub use corpus::{CleanMessage, NormalizedMessage, RawMessage};
pub use features::{FeatureKind, FeatureSet};
pub use learn::TrainedModel;
pub use supervision::{DomainRisk, Label, Supervision};
