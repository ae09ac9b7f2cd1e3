//! Challenge-set harness: contrastive good/bad translation pairs scored by
//! any metric, aggregated into per-phenomenon tau-like correlations, a
//! severity-weighted summary score over the ten top-level accuracy
//! categories, severity-bucket accuracies and language-pair group averages.
//!
//! Phenomenon labels may carry a sub-phenomenon after a `/` separator
//! (for example `mistranslation/number`); sub-phenomenon correlations are
//! averaged unweighted into their top-level category.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{kendall_tau_like, ContrastCounts, StatsError};

#[derive(Debug, Error, PartialEq)]
pub enum ChallengeError {
    #[error("expected one score pair per item: {items} items, {scores} score pairs")]
    IncompleteScores { items: usize, scores: usize },
    #[error("category `{0}` has no tau value")]
    IncompleteCategories(String),
    #[error("item {index}: {message}")]
    Schema { index: usize, message: String },
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Error severity label attached to DEMETR-style items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Base,
    Critical,
    Major,
    Minor,
}

impl Severity {
    pub const ALL: [Severity; 4] = [
        Severity::Base,
        Severity::Critical,
        Severity::Major,
        Severity::Minor,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Severity::Base => "base",
            Severity::Critical => "critical",
            Severity::Major => "major",
            Severity::Minor => "minor",
        }
    }
}

/// One contrastive challenge item: the good translation should outscore the
/// incorrect one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChallengeItem {
    pub source: String,
    #[serde(rename = "good-translation")]
    pub good_translation: String,
    #[serde(rename = "incorrect-translation")]
    pub incorrect_translation: String,
    pub reference: String,
    #[serde(rename = "phenomena")]
    pub phenomenon: String,
    pub langpair: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
}

impl ChallengeItem {
    pub fn validate(&self, index: usize) -> Result<(), ChallengeError> {
        if self.good_translation == self.incorrect_translation {
            return Err(ChallengeError::Schema {
                index,
                message: "good and incorrect translations must differ".into(),
            });
        }
        if self.phenomenon.is_empty() {
            return Err(ChallengeError::Schema {
                index,
                message: "phenomenon label must not be empty".into(),
            });
        }
        Ok(())
    }

    /// Top-level category: the phenomenon label up to an optional `/`.
    pub fn category(&self) -> &str {
        top_level_category(&self.phenomenon)
    }
}

pub fn top_level_category(phenomenon: &str) -> &str {
    phenomenon.split('/').next().unwrap_or(phenomenon)
}

/// Metric scores for one item: the good and the incorrect translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScorePair {
    pub good: f64,
    pub bad: f64,
}

/// Severity weights over accuracy categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcesWeights(pub BTreeMap<String, f64>);

/// The ten top-level categories with their severity weights: 5 for major
/// accuracy errors, 1 for minor ones, 0.1 for fluency/punctuation.
pub const DEFAULT_ACES_WEIGHTS: [(&str, f64); 10] = [
    ("addition", 5.0),
    ("omission", 5.0),
    ("mistranslation", 5.0),
    ("overtranslation", 5.0),
    ("undertranslation", 5.0),
    ("untranslated", 1.0),
    ("do-not-translate", 1.0),
    ("real-world-knowledge", 1.0),
    ("wrong-language", 1.0),
    ("punctuation", 0.1),
];

impl Default for AcesWeights {
    fn default() -> Self {
        Self(
            DEFAULT_ACES_WEIGHTS
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
        )
    }
}

fn check_lengths(items: usize, scores: usize) -> Result<(), ChallengeError> {
    if items != scores {
        return Err(ChallengeError::IncompleteScores { items, scores });
    }
    Ok(())
}

fn classify(pair: &ScorePair, counts: &mut ContrastCounts) {
    if pair.good > pair.bad {
        counts.concordant += 1;
    } else if pair.good < pair.bad {
        counts.discordant += 1;
    } else {
        counts.ties += 1;
    }
}

/// Counts concordant/discordant/tied contrasts per phenomenon label.
pub fn contrast_counts(
    items: &[ChallengeItem],
    scores: &[ScorePair],
) -> Result<BTreeMap<String, ContrastCounts>, ChallengeError> {
    check_lengths(items.len(), scores.len())?;
    let mut by_phenomenon: BTreeMap<String, ContrastCounts> = BTreeMap::new();
    for (item, pair) in items.iter().zip(scores) {
        classify(pair, by_phenomenon.entry(item.phenomenon.clone()).or_default());
    }
    Ok(by_phenomenon)
}

/// Tau-like value per phenomenon; phenomena with no decided contrasts are
/// omitted.
pub fn phenomenon_taus(counts: &BTreeMap<String, ContrastCounts>) -> BTreeMap<String, f64> {
    counts
        .iter()
        .filter_map(|(name, c)| kendall_tau_like(c).ok().map(|tau| (name.clone(), tau)))
        .collect()
}

/// Unweighted mean of sub-phenomenon taus within each top-level category.
pub fn category_taus(phenomenon_taus: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (phenomenon, tau) in phenomenon_taus {
        let entry = sums
            .entry(top_level_category(phenomenon).to_string())
            .or_insert((0.0, 0));
        entry.0 += tau;
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(cat, (sum, n))| (cat, sum / n as f64))
        .collect()
}

/// Severity-weighted sum of category taus. Every weighted category must have
/// a tau value.
pub fn aces_score(
    per_category_tau: &BTreeMap<String, f64>,
    weights: &AcesWeights,
) -> Result<f64, ChallengeError> {
    let mut total = 0.0;
    for (category, weight) in &weights.0 {
        let tau = per_category_tau
            .get(category)
            .ok_or_else(|| ChallengeError::IncompleteCategories(category.clone()))?;
        total += weight * tau;
    }
    Ok(total)
}

/// Plain unweighted mean; the macro-average used for summary rows.
pub fn macro_average(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Per-bucket and micro-averaged accuracy over severity-labelled items. An
/// item is correct only when the good translation scores strictly higher;
/// ties count as incorrect.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeverityAccuracy {
    pub per_bucket: BTreeMap<Severity, f64>,
    pub bucket_sizes: BTreeMap<Severity, usize>,
    /// Micro-average over items, not over buckets.
    pub micro_average: f64,
}

pub fn severity_accuracy(
    items: &[ChallengeItem],
    scores: &[ScorePair],
) -> Result<SeverityAccuracy, ChallengeError> {
    check_lengths(items.len(), scores.len())?;
    let mut correct: BTreeMap<Severity, usize> = BTreeMap::new();
    let mut sizes: BTreeMap<Severity, usize> = BTreeMap::new();
    for (index, (item, pair)) in items.iter().zip(scores).enumerate() {
        let severity = item.severity.ok_or_else(|| ChallengeError::Schema {
            index,
            message: "item has no severity label".into(),
        })?;
        *sizes.entry(severity).or_insert(0) += 1;
        if pair.good > pair.bad {
            *correct.entry(severity).or_insert(0) += 1;
        }
    }
    let per_bucket = sizes
        .iter()
        .map(|(&sev, &n)| {
            let c = correct.get(&sev).copied().unwrap_or(0);
            (sev, c as f64 / n as f64)
        })
        .collect();
    let total: usize = sizes.values().sum();
    let total_correct: usize = correct.values().sum();
    Ok(SeverityAccuracy {
        per_bucket,
        bucket_sizes: sizes,
        micro_average: total_correct as f64 / total as f64,
    })
}

/// Language-pair direction groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LangGroup {
    /// English source, any target.
    EnXx,
    /// Any source, English target.
    XxEn,
    /// Neither side is English.
    XxYy,
}

impl LangGroup {
    pub fn name(&self) -> &'static str {
        match self {
            LangGroup::EnXx => "en-xx",
            LangGroup::XxEn => "xx-en",
            LangGroup::XxYy => "xx-yy",
        }
    }
}

fn parse_langpair(langpair: &str, index: usize) -> Result<(String, String), ChallengeError> {
    let bad = || ChallengeError::Schema {
        index,
        message: format!("langpair `{langpair}` is not of the form `src-tgt`"),
    };
    let (src, tgt) = langpair.split_once('-').ok_or_else(bad)?;
    let valid = |code: &str| code.len() >= 2 && code.chars().all(|c| c.is_ascii_lowercase());
    if !valid(src) || !valid(tgt) {
        return Err(bad());
    }
    Ok((src.to_string(), tgt.to_string()))
}

pub fn lang_group(src: &str, tgt: &str) -> LangGroup {
    if src == "en" {
        LangGroup::EnXx
    } else if tgt == "en" {
        LangGroup::XxEn
    } else {
        LangGroup::XxYy
    }
}

/// Per-pair taus, per-group means and the balanced average (unweighted over
/// the groups present). Pairs whose contrasts are all ties are skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LangGroupAggregate {
    pub per_pair: BTreeMap<String, f64>,
    pub groups: BTreeMap<LangGroup, f64>,
    pub balanced_average: f64,
}

pub fn aggregate_langpairs(
    items: &[ChallengeItem],
    scores: &[ScorePair],
) -> Result<LangGroupAggregate, ChallengeError> {
    check_lengths(items.len(), scores.len())?;
    let mut by_pair: BTreeMap<String, ContrastCounts> = BTreeMap::new();
    for (index, (item, pair)) in items.iter().zip(scores).enumerate() {
        parse_langpair(&item.langpair, index)?;
        classify(pair, by_pair.entry(item.langpair.clone()).or_default());
    }

    let mut per_pair = BTreeMap::new();
    let mut group_values: BTreeMap<LangGroup, Vec<f64>> = BTreeMap::new();
    for (langpair, counts) in &by_pair {
        let Ok(tau) = kendall_tau_like(counts) else {
            continue;
        };
        per_pair.insert(langpair.clone(), tau);
        let (src, tgt) = parse_langpair(langpair, 0).expect("validated above");
        group_values
            .entry(lang_group(&src, &tgt))
            .or_default()
            .push(tau);
    }
    if per_pair.is_empty() {
        return Err(ChallengeError::Stats(StatsError::DegenerateInput(
            "every language pair has only tied contrasts",
        )));
    }

    let groups: BTreeMap<LangGroup, f64> = group_values
        .into_iter()
        .map(|(g, taus)| (g, macro_average(&taus)))
        .collect();
    let balanced_average = macro_average(&groups.values().copied().collect::<Vec<_>>());
    Ok(LangGroupAggregate {
        per_pair,
        groups,
        balanced_average,
    })
}
