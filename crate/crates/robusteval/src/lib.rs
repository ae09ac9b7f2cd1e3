//! Robust machine-translation evaluation toolkit.
//!
//! Combines lexical overlap metrics (sentence BLEU and chrF) with a small
//! trainable quality regressor in three ways: weighted score ensembling,
//! sentence-level lexical features fused through a bottleneck layer, and
//! word-level OK/BAD tags derived from a Levenshtein alignment between
//! hypothesis and reference tokens. A challenge-set harness scores
//! contrastive good/bad translation pairs and aggregates them into
//! per-phenomenon rank correlations, a severity-weighted summary score,
//! severity-bucket accuracies, and language-pair group averages.

pub mod align;
pub mod challenge;
pub mod cli;
pub mod data;
pub mod ensemble;
pub mod fusion;
pub mod lexmetrics;
pub mod stats;
pub mod text;

pub use data::{MetricVector, SegmentTriplet};
