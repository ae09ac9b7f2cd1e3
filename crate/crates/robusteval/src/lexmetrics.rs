//! Sentence-level lexical metrics: BLEU and chrF.
//!
//! Both scores are kept in [0, 1] so they can be ensembled and fed to the
//! fusion regressor on a uniform scale; display scaling is left to callers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_ngrams, TokenSequence};

pub const DEFAULT_BLEU_ORDER: usize = 4;
pub const DEFAULT_CHRF_ORDER: usize = 6;
pub const DEFAULT_CHRF_BETA: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("reference must not be empty")]
    EmptyReference,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),
}

/// Smoothing applied to zero n-gram precisions in sentence BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// For the k-th order with zero matches, substitute a numerator that
    /// halves with each successive zero order: 1/2, 1/4, ...
    #[default]
    Exponential,
    /// Zero match counts are replaced by a fixed numerator floor.
    Floor(f64),
    /// No smoothing; any zero precision makes the whole score 0.
    None,
}

/// Configuration snapshot stored alongside every score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricParams {
    Bleu {
        max_order: usize,
        smoothing: Smoothing,
    },
    Chrf {
        max_char_order: usize,
        beta: f64,
    },
}

/// A sentence-level lexical score in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexicalScore {
    pub value: f64,
    pub metric_name: &'static str,
    pub params: MetricParams,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence BLEU: brevity-penalized geometric mean of clipped n-gram
/// precisions. Orders beyond the hypothesis length contribute no n-grams and
/// are skipped, so identical hypothesis and reference score exactly 1.
pub fn sentence_bleu(
    hyp: &TokenSequence,
    reference: &TokenSequence,
    max_order: usize,
    smoothing: Smoothing,
) -> Result<LexicalScore, MetricError> {
    if max_order == 0 {
        return Err(MetricError::InvalidOrder);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let params = MetricParams::Bleu {
        max_order,
        smoothing,
    };
    if hyp.is_empty() {
        return Ok(LexicalScore {
            value: 0.0,
            metric_name: "bleu",
            params,
        });
    }

    let hyp_len = hyp.len();
    let ref_len = reference.len();
    let effective_order = max_order.min(hyp_len);

    let mut log_precision_sum = 0.0;
    let mut smoothing_numerator = 1.0;
    for n in 1..=effective_order {
        let hyp_counts = ngram_counts(hyp.tokens(), n);
        let ref_counts = ngram_counts(reference.tokens(), n);
        let total = (hyp_len - n + 1) as f64;
        let matched: usize = hyp_counts
            .iter()
            .map(|(gram, count)| (*count).min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();

        let precision = if matched > 0 {
            matched as f64 / total
        } else {
            match smoothing {
                Smoothing::Exponential => {
                    smoothing_numerator /= 2.0;
                    smoothing_numerator / total
                }
                Smoothing::Floor(eps) => eps / total,
                Smoothing::None => {
                    return Ok(LexicalScore {
                        value: 0.0,
                        metric_name: "bleu",
                        params,
                    })
                }
            }
        };
        log_precision_sum += precision.ln();
    }

    let brevity_penalty = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let value = brevity_penalty * (log_precision_sum / effective_order as f64).exp();

    Ok(LexicalScore {
        value: value.clamp(0.0, 1.0),
        metric_name: "bleu",
        params,
    })
}

/// chrF: arithmetic mean over character n-gram orders of the F-beta score of
/// precision and recall. Whitespace is removed before n-gram extraction;
/// orders where neither side has any n-grams are skipped.
pub fn sentence_chrf(
    hyp: &str,
    reference: &str,
    max_char_order: usize,
    beta: f64,
) -> Result<LexicalScore, MetricError> {
    if max_char_order == 0 {
        return Err(MetricError::InvalidOrder);
    }
    if beta.is_nan() || beta <= 0.0 {
        return Err(MetricError::InvalidBeta(beta));
    }
    if reference.chars().all(char::is_whitespace) {
        return Err(MetricError::EmptyReference);
    }

    let beta_sq = beta * beta;
    let mut f_sum = 0.0;
    let mut used_orders = 0usize;
    for n in 1..=max_char_order {
        let hyp_grams = char_ngrams(hyp, n, true).expect("order is nonzero");
        let ref_grams = char_ngrams(reference, n, true).expect("order is nonzero");
        let hyp_total: usize = hyp_grams.values().sum();
        let ref_total: usize = ref_grams.values().sum();
        if hyp_total == 0 && ref_total == 0 {
            continue;
        }
        let matched: usize = hyp_grams
            .iter()
            .map(|(gram, count)| (*count).min(ref_grams.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if hyp_total > 0 {
            matched as f64 / hyp_total as f64
        } else {
            0.0
        };
        let recall = if ref_total > 0 {
            matched as f64 / ref_total as f64
        } else {
            0.0
        };
        let denom = beta_sq * precision + recall;
        let f = if denom > 0.0 {
            (1.0 + beta_sq) * precision * recall / denom
        } else {
            0.0
        };
        f_sum += f;
        used_orders += 1;
    }

    let value = if used_orders > 0 {
        f_sum / used_orders as f64
    } else {
        0.0
    };
    Ok(LexicalScore {
        value: value.clamp(0.0, 1.0),
        metric_name: "chrf",
        params: MetricParams::Chrf {
            max_char_order,
            beta,
        },
    })
}

/// Convenience wrappers with the default configurations.
pub fn bleu_default(hyp: &TokenSequence, reference: &TokenSequence) -> Result<f64, MetricError> {
    sentence_bleu(hyp, reference, DEFAULT_BLEU_ORDER, Smoothing::Exponential).map(|s| s.value)
}

pub fn chrf_default(hyp: &str, reference: &str) -> Result<f64, MetricError> {
    sentence_chrf(hyp, reference, DEFAULT_CHRF_ORDER, DEFAULT_CHRF_BETA).map(|s| s.value)
}
