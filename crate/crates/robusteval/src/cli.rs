//! Batch command surface tying the modules together: segment scoring, tag
//! emission, ensemble tuning, regressor training, challenge evaluation and
//! correlation reports.
//!
//! Input segments are TSV (`id<TAB>src<TAB>mt<TAB>ref[<TAB>score]`, no
//! header) or JSONL with the keys `id`, `src`, `mt`, `ref` and optional
//! `score`; the format is chosen by file extension (`.jsonl` for JSONL).
//! Files must be UTF-8 without a byte-order mark. Reports embed a
//! fingerprint of the run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::tag_hypothesis;
use crate::challenge::{
    self, aces_score, AcesWeights, ChallengeError, ChallengeItem, LangGroupAggregate, ScorePair,
    SeverityAccuracy,
};
use crate::data::MetricVector;
use crate::ensemble::{tune_weights, EnsembleError, EnsembleModel, Normalizer, StdEstimator};
use crate::fusion::{
    forward, train, FusionConfig, FusionError, FusionInput, FusionModel, TrainItem, Variant,
};
use crate::lexmetrics::{bleu_default, chrf_default, MetricError};
use crate::stats::{
    fisher_z, kendall_tau_b, pearson, spearman, williams_test, PairedScores, StatsError,
    WilliamsResult, DEFAULT_SIGNIFICANCE,
};
use crate::text::{tokenize, TokenizerConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Challenge(#[from] ChallengeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Which metrics the score and eval-challenge commands can produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Bleu,
    Chrf,
    Fusion,
    Ensemble,
}

impl MetricKind {
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Bleu => "bleu",
            MetricKind::Chrf => "chrf",
            MetricKind::Fusion => "fusion",
            MetricKind::Ensemble => "ensemble",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bleu" => Ok(MetricKind::Bleu),
            "chrf" => Ok(MetricKind::Chrf),
            "fusion" => Ok(MetricKind::Fusion),
            "ensemble" => Ok(MetricKind::Ensemble),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Everything that parameterizes a run; hashed into report fingerprints.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub input: Option<String>,
    pub output: Option<String>,
    pub metrics: Vec<String>,
    pub model: Option<String>,
    pub normalizer: Option<String>,
    pub weights: Option<String>,
    pub seed: u64,
    pub tokenizer: Option<TokenizerConfig>,
    pub resolution: Option<usize>,
    pub variant: Option<String>,
}

impl RunConfig {
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("RunConfig always serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn opt_path_str(path: &Option<PathBuf>) -> Option<String> {
    path.as_ref().map(|p| path_str(p))
}

// ---------------------------------------------------------------------------
// Input readers
// ---------------------------------------------------------------------------

/// One input segment row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRow {
    pub id: String,
    pub src: String,
    pub mt: String,
    #[serde(rename = "ref")]
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if text.starts_with('\u{feff}') {
        return Err(CliError::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: "byte-order mark not allowed".into(),
        });
    }
    Ok(text)
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()) == Some("jsonl")
}

/// Reads segment rows from TSV or JSONL, keeping 1-based line numbers for
/// error reporting.
pub fn read_segments(path: &Path) -> Result<(Vec<SegmentRow>, Vec<usize>), CliError> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let malformed = |message: String| CliError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let row = if is_jsonl(path) {
            serde_json::from_str::<SegmentRow>(line).map_err(|e| malformed(e.to_string()))?
        } else {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 && fields.len() != 5 {
                return Err(malformed(format!(
                    "expected 4 or 5 tab-separated fields, got {}",
                    fields.len()
                )));
            }
            let score = match fields.get(4) {
                Some(raw) => Some(raw.parse::<f64>().map_err(|_| {
                    malformed(format!("score `{raw}` is not a number"))
                })?),
                None => None,
            };
            SegmentRow {
                id: fields[0].to_string(),
                src: fields[1].to_string(),
                mt: fields[2].to_string(),
                reference: fields[3].to_string(),
                score,
            }
        };
        rows.push(row);
        lines.push(line_no);
    }
    Ok((rows, lines))
}

/// Reads challenge items from JSONL, validating each one.
pub fn read_challenge(path: &Path) -> Result<Vec<ChallengeItem>, CliError> {
    let text = read_text(path)?;
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let item: ChallengeItem =
            serde_json::from_str(line).map_err(|e| CliError::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
        item.validate(items.len())?;
        items.push(item);
    }
    Ok(items)
}

/// Reads one score per line; lines may also be `id<TAB>score`, in which case
/// the last field is used.
pub fn read_score_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = read_text(path)?;
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let raw = line.rsplit('\t').next().unwrap_or(line);
        let value = raw.parse::<f64>().map_err(|_| CliError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            message: format!("`{raw}` is not a number"),
        })?;
        values.push(value);
    }
    Ok(values)
}

fn write_output(output: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    if let Some(path) = output {
        fs::write(path, content).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Scoring backends
// ---------------------------------------------------------------------------

/// Lazily assembled scoring context for the requested metrics.
pub struct Scorer {
    tokenizer: TokenizerConfig,
    fusion: Option<FusionModel>,
    ensemble: Option<EnsembleModel>,
}

impl Scorer {
    pub fn new(
        tokenizer: TokenizerConfig,
        model: &Option<PathBuf>,
        ensemble_path: &Option<PathBuf>,
        requested: &[MetricKind],
    ) -> Result<Self, CliError> {
        let needs_fusion = requested
            .iter()
            .any(|m| matches!(m, MetricKind::Fusion | MetricKind::Ensemble));
        let needs_ensemble = requested.contains(&MetricKind::Ensemble);

        let fusion = if needs_fusion {
            let path = model.as_ref().ok_or_else(|| {
                CliError::Usage("--model is required for the fusion and ensemble metrics".into())
            })?;
            Some(FusionModel::from_json(&read_text(path)?)?)
        } else {
            None
        };
        let ensemble = if needs_ensemble {
            let path = ensemble_path.as_ref().ok_or_else(|| {
                CliError::Usage(
                    "--weights (or --normalizer) is required for the ensemble metric".into(),
                )
            })?;
            let doc: EnsembleModel =
                serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Malformed {
                    path: path.clone(),
                    line: 1,
                    message: e.to_string(),
                })?;
            Some(doc)
        } else {
            None
        };
        Ok(Self {
            tokenizer,
            fusion,
            ensemble,
        })
    }

    fn bleu(&self, mt: &str, reference: &str) -> Result<f64, CliError> {
        let hyp = tokenize(mt, &self.tokenizer);
        let reference = tokenize(reference, &self.tokenizer);
        Ok(bleu_default(&hyp, &reference)?)
    }

    fn fusion_score(&self, src: &str, mt: &str, reference: &str) -> Result<f64, CliError> {
        let model = self
            .fusion
            .as_ref()
            .expect("fusion model presence checked in Scorer::new");
        let tok = &model.tokenizer;
        let src_seq = tokenize(src, tok);
        let hyp_seq = tokenize(mt, tok);
        let ref_seq = tokenize(reference, tok);
        let tags = match model.config.variant {
            Variant::WlTags => Some(tag_hypothesis(&hyp_seq, &ref_seq)),
            _ => None,
        };
        let sl_feats = match model.config.variant {
            Variant::SlFeatures => Some((
                bleu_default(&hyp_seq, &ref_seq)?,
                chrf_default(mt, reference)?,
            )),
            _ => None,
        };
        let input = FusionInput {
            src: &src_seq,
            hyp: &hyp_seq,
            reference: &ref_seq,
            tags: tags.as_ref(),
            sl_feats,
        };
        Ok(forward(&input, &model.params, &model.config)?)
    }

    /// The three member scores plus the applied ensemble when configured.
    pub fn metric_vector(&self, src: &str, mt: &str, reference: &str) -> Result<MetricVector, CliError> {
        let mut vector = MetricVector::new(
            self.bleu(mt, reference)?,
            chrf_default(mt, reference)?,
            self.fusion_score(src, mt, reference)?,
        );
        if let Some(ensemble) = &self.ensemble {
            vector.ensemble = Some(ensemble.score(&vector)?);
        }
        Ok(vector)
    }

    pub fn score(
        &self,
        kind: MetricKind,
        src: &str,
        mt: &str,
        reference: &str,
    ) -> Result<f64, CliError> {
        match kind {
            MetricKind::Bleu => self.bleu(mt, reference),
            MetricKind::Chrf => Ok(chrf_default(mt, reference)?),
            MetricKind::Fusion => self.fusion_score(src, mt, reference),
            MetricKind::Ensemble => self
                .metric_vector(src, mt, reference)?
                .ensemble
                .ok_or_else(|| {
                    CliError::Usage("ensemble scoring needs a weights document".into())
                }),
        }
    }
}

fn collect_ordered<T: Send>(
    results: Vec<Result<T, CliError>>,
) -> Result<Vec<T>, CliError> {
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        out.push(r?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ScoreOpts {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub metrics: Vec<MetricKind>,
    pub model: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub normalizer: Option<PathBuf>,
    pub tokenizer: TokenizerConfig,
    pub seed: u64,
    /// Display lexical scores multiplied by 100.
    pub x100: bool,
}

/// Scores every input segment with the requested metrics and renders a TSV
/// table (header row, then one row per segment in input order).
pub fn cmd_score(opts: &ScoreOpts) -> Result<String, CliError> {
    if opts.metrics.is_empty() {
        return Err(CliError::Usage("at least one metric must be requested".into()));
    }
    let mut metrics = opts.metrics.clone();
    metrics.sort();
    metrics.dedup();

    let ensemble_path = opts.weights.clone().or_else(|| opts.normalizer.clone());
    let scorer = Scorer::new(opts.tokenizer, &opts.model, &ensemble_path, &metrics)?;
    let (rows, _) = read_segments(&opts.input)?;

    let scored: Vec<Result<Vec<f64>, CliError>> = rows
        .par_iter()
        .map(|row| {
            metrics
                .iter()
                .map(|&kind| {
                    let value = scorer.score(kind, &row.src, &row.mt, &row.reference)?;
                    let scaled = match kind {
                        MetricKind::Bleu | MetricKind::Chrf if opts.x100 => value * 100.0,
                        _ => value,
                    };
                    Ok(scaled)
                })
                .collect()
        })
        .collect();
    let scored = collect_ordered(scored)?;

    let mut out = String::from("id");
    for kind in &metrics {
        out.push('\t');
        out.push_str(kind.name());
    }
    out.push('\n');
    for (row, values) in rows.iter().zip(&scored) {
        out.push_str(&row.id);
        for value in values {
            out.push('\t');
            out.push_str(&value.to_string());
        }
        out.push('\n');
    }
    write_output(&opts.output, &out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TagsOpts {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub tokenizer: TokenizerConfig,
}

/// Emits one space-joined OK/BAD tag string per segment.
pub fn cmd_tags(opts: &TagsOpts) -> Result<String, CliError> {
    let (rows, _) = read_segments(&opts.input)?;
    let tagged: Vec<String> = rows
        .par_iter()
        .map(|row| {
            let hyp = tokenize(&row.mt, &opts.tokenizer);
            let reference = tokenize(&row.reference, &opts.tokenizer);
            tag_hypothesis(&hyp, &reference).space_joined()
        })
        .collect();

    let mut out = String::from("id\ttags\n");
    for (row, tags) in rows.iter().zip(&tagged) {
        out.push_str(&row.id);
        out.push('\t');
        out.push_str(tags);
        out.push('\n');
    }
    write_output(&opts.output, &out)?;
    Ok(out)
}

fn require_gold(
    rows: &[SegmentRow],
    lines: &[usize],
    path: &Path,
) -> Result<Vec<f64>, CliError> {
    rows.iter()
        .zip(lines)
        .map(|(row, &line)| {
            row.score.ok_or_else(|| CliError::Malformed {
                path: path.to_path_buf(),
                line,
                message: "row is missing the gold score column".into(),
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TuneEnsembleOpts {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub model: PathBuf,
    pub resolution: usize,
    pub tokenizer: TokenizerConfig,
    pub seed: u64,
}

/// Fits the normalizer and grid-searches ensemble weights on a development
/// set with gold scores; writes the combined normalizer + weights document.
pub fn cmd_tune_ensemble(opts: &TuneEnsembleOpts) -> Result<String, CliError> {
    let (rows, lines) = read_segments(&opts.input)?;
    let gold = require_gold(&rows, &lines, &opts.input)?;
    let scorer = Scorer::new(
        opts.tokenizer,
        &Some(opts.model.clone()),
        &None,
        &[MetricKind::Fusion],
    )?;

    let vectors: Vec<Result<MetricVector, CliError>> = rows
        .par_iter()
        .map(|row| scorer.metric_vector(&row.src, &row.mt, &row.reference))
        .collect();
    let vectors = collect_ordered(vectors)?;

    let dev: Vec<(MetricVector, f64)> = vectors.into_iter().zip(gold).collect();
    let weights = tune_weights(&dev, opts.resolution, StdEstimator::Population)?;
    let normalizer = Normalizer::fit(
        &dev.iter().map(|(m, _)| *m).collect::<Vec<_>>(),
        StdEstimator::Population,
    )?;
    let model = EnsembleModel::new(normalizer, weights, opts.resolution);
    let json = serde_json::to_string_pretty(&model).expect("ensemble model serializes");
    let out = format!("{json}\n");
    write_output(&opts.output, &out)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub variant: Variant,
    pub tokenizer: TokenizerConfig,
    pub seed: u64,
    pub epochs: Option<usize>,
    pub embed_dim: Option<usize>,
}

/// Trains a fusion regressor on segments with gold scores. Tags come from
/// the Levenshtein aligner and sentence-level features from the lexical
/// metrics, both computed with the recorded tokenizer.
pub fn cmd_train(opts: &TrainOpts) -> Result<String, CliError> {
    let (rows, lines) = read_segments(&opts.input)?;
    let gold = require_gold(&rows, &lines, &opts.input)?;

    let items: Vec<Result<TrainItem, CliError>> = rows
        .par_iter()
        .zip(&gold)
        .map(|(row, &gold)| {
            let src = tokenize(&row.src, &opts.tokenizer);
            let hyp = tokenize(&row.mt, &opts.tokenizer);
            let reference = tokenize(&row.reference, &opts.tokenizer);
            let tags = tag_hypothesis(&hyp, &reference);
            let sl_feats = (
                bleu_default(&hyp, &reference)?,
                chrf_default(&row.mt, &row.reference)?,
            );
            Ok(TrainItem {
                src,
                hyp,
                reference,
                tags: Some(tags),
                sl_feats: Some(sl_feats),
                gold,
            })
        })
        .collect();
    let items = collect_ordered(items)?;

    let mut config = FusionConfig {
        variant: opts.variant,
        seed: opts.seed,
        ..FusionConfig::default()
    };
    if let Some(epochs) = opts.epochs {
        config.epochs = epochs;
    }
    if let Some(embed_dim) = opts.embed_dim {
        config.embed_dim = embed_dim;
    }

    let params = train(&items, &config)?;
    let model = FusionModel::new(config, opts.tokenizer, params);
    let out = format!("{}\n", model.to_json()?);
    write_output(&opts.output, &out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Challenge evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct PhenomenonReport {
    pub concordant: usize,
    pub discordant: usize,
    pub ties: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ChallengeReport {
    pub config_fingerprint: String,
    pub metric: String,
    pub items: usize,
    pub phenomena: BTreeMap<String, PhenomenonReport>,
    /// Top-level category taus (sub-phenomena averaged unweighted).
    pub categories: BTreeMap<String, f64>,
    /// Present when every weighted category has a tau.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aces_score: Option<f64>,
    /// Present when at least one item carries a severity label; computed
    /// over the labelled subset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub severity: Option<SeverityAccuracy>,
    pub groups: LangGroupAggregate,
}

impl ChallengeReport {
    /// Flat TSV export: kind, name, concordant, discordant, ties, value.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("kind\tname\tconcordant\tdiscordant\tties\tvalue\n");
        for (name, p) in &self.phenomena {
            let tau = p.tau.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "phenomenon\t{name}\t{}\t{}\t{}\t{tau}\n",
                p.concordant, p.discordant, p.ties
            ));
        }
        for (name, tau) in &self.categories {
            out.push_str(&format!("category\t{name}\t\t\t\t{tau}\n"));
        }
        if let Some(score) = self.aces_score {
            out.push_str(&format!("aces-score\t\t\t\t\t{score}\n"));
        }
        if let Some(severity) = &self.severity {
            for (bucket, acc) in &severity.per_bucket {
                out.push_str(&format!("severity\t{}\t\t\t\t{acc}\n", bucket.name()));
            }
            out.push_str(&format!("severity\tall\t\t\t\t{}\n", severity.micro_average));
        }
        for (group, tau) in &self.groups.groups {
            out.push_str(&format!("group\t{}\t\t\t\t{tau}\n", group.name()));
        }
        out.push_str(&format!("group\tavg\t\t\t\t{}\n", self.groups.balanced_average));
        out
    }
}

#[derive(Debug, Clone)]
pub struct EvalChallengeOpts {
    pub input: PathBuf,
    pub output: Option<PathBuf>,
    pub tsv: Option<PathBuf>,
    pub metric: MetricKind,
    pub model: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub normalizer: Option<PathBuf>,
    pub tokenizer: TokenizerConfig,
    pub seed: u64,
}

/// Scores a challenge set with the chosen metric and assembles the full
/// report: per-phenomenon counts and taus, category taus, the severity
/// weighted summary score, severity-bucket accuracy and group aggregates.
pub fn cmd_eval_challenge(opts: &EvalChallengeOpts) -> Result<String, CliError> {
    let items = read_challenge(&opts.input)?;
    if items.is_empty() {
        return Err(CliError::Usage("challenge set is empty".into()));
    }
    let ensemble_path = opts.weights.clone().or_else(|| opts.normalizer.clone());
    let scorer = Scorer::new(opts.tokenizer, &opts.model, &ensemble_path, &[opts.metric])?;

    let scores: Vec<Result<ScorePair, CliError>> = items
        .par_iter()
        .map(|item| {
            let good =
                scorer.score(opts.metric, &item.source, &item.good_translation, &item.reference)?;
            let bad = scorer.score(
                opts.metric,
                &item.source,
                &item.incorrect_translation,
                &item.reference,
            )?;
            Ok(ScorePair { good, bad })
        })
        .collect();
    let scores = collect_ordered(scores)?;

    let run_config = RunConfig {
        command: "eval-challenge".into(),
        input: Some(path_str(&opts.input)),
        output: opt_path_str(&opts.output),
        metrics: vec![opts.metric.name().to_string()],
        model: opt_path_str(&opts.model),
        normalizer: opt_path_str(&opts.normalizer),
        weights: opt_path_str(&opts.weights),
        seed: opts.seed,
        tokenizer: Some(opts.tokenizer),
        resolution: None,
        variant: None,
    };
    let report = build_challenge_report(&items, &scores, opts.metric, &run_config)?;

    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let out = format!("{json}\n");
    write_output(&opts.output, &out)?;
    if opts.tsv.is_some() {
        write_output(&opts.tsv, &report.to_tsv())?;
    }
    Ok(out)
}

pub fn build_challenge_report(
    items: &[ChallengeItem],
    scores: &[ScorePair],
    metric: MetricKind,
    run_config: &RunConfig,
) -> Result<ChallengeReport, CliError> {
    let counts = challenge::contrast_counts(items, scores)?;
    let taus = challenge::phenomenon_taus(&counts);
    let phenomena: BTreeMap<String, PhenomenonReport> = counts
        .iter()
        .map(|(name, c)| {
            (
                name.clone(),
                PhenomenonReport {
                    concordant: c.concordant,
                    discordant: c.discordant,
                    ties: c.ties,
                    tau: taus.get(name).copied(),
                },
            )
        })
        .collect();
    let categories = challenge::category_taus(&taus);
    let aces = aces_score(&categories, &AcesWeights::default()).ok();

    let labelled: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(_, item)| item.severity.is_some())
        .map(|(i, _)| i)
        .collect();
    let severity = if labelled.is_empty() {
        None
    } else {
        let sub_items: Vec<ChallengeItem> =
            labelled.iter().map(|&i| items[i].clone()).collect();
        let sub_scores: Vec<ScorePair> = labelled.iter().map(|&i| scores[i]).collect();
        Some(challenge::severity_accuracy(&sub_items, &sub_scores)?)
    };

    let groups = challenge::aggregate_langpairs(items, scores)?;

    Ok(ChallengeReport {
        config_fingerprint: run_config.fingerprint(),
        metric: metric.name().to_string(),
        items: items.len(),
        phenomena,
        categories,
        aces_score: aces,
        severity,
        groups,
    })
}

// ---------------------------------------------------------------------------
// Correlation report
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
pub struct WilliamsReport {
    pub t_stat: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
    pub significant: bool,
    pub alpha: f64,
}

#[derive(Debug, Serialize)]
pub struct CorrelationReport {
    pub config_fingerprint: String,
    pub n: usize,
    pub pearson: f64,
    pub spearman: f64,
    pub kendall_tau_b: f64,
    /// Fisher z of the Pearson correlation; absent when |r| = 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fisher_z_pearson: Option<f64>,
    /// Williams' test against the baseline scores, when provided.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub williams: Option<WilliamsReport>,
}

#[derive(Debug, Clone)]
pub struct CorrelateOpts {
    pub scores: PathBuf,
    pub gold: PathBuf,
    pub baseline: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

/// Correlates predicted scores with gold judgments; with a baseline score
/// file, adds Williams' test for the difference of the two dependent
/// correlations.
pub fn cmd_correlate(opts: &CorrelateOpts) -> Result<String, CliError> {
    let predicted = read_score_column(&opts.scores)?;
    let gold = read_score_column(&opts.gold)?;
    let paired = PairedScores::new(predicted.clone(), gold.clone())?;

    let r_pearson = pearson(&paired)?;
    let williams = match &opts.baseline {
        Some(path) => {
            let baseline = read_score_column(path)?;
            let r13 = pearson(&PairedScores::new(baseline.clone(), gold.clone())?)?;
            let r23 = pearson(&PairedScores::new(predicted.clone(), baseline)?)?;
            let result: WilliamsResult =
                williams_test(r_pearson, r13, r23, paired.len())?;
            Some(WilliamsReport {
                t_stat: result.t_stat,
                p_value: result.p_value,
                degrees_of_freedom: result.degrees_of_freedom,
                significant: result.significant_at(DEFAULT_SIGNIFICANCE),
                alpha: DEFAULT_SIGNIFICANCE,
            })
        }
        None => None,
    };

    let run_config = RunConfig {
        command: "correlate".into(),
        input: Some(path_str(&opts.scores)),
        output: opt_path_str(&opts.output),
        metrics: Vec::new(),
        model: None,
        normalizer: None,
        weights: opt_path_str(&opts.baseline),
        seed: opts.seed,
        tokenizer: None,
        resolution: None,
        variant: None,
    };
    let report = CorrelationReport {
        config_fingerprint: run_config.fingerprint(),
        n: paired.len(),
        pearson: r_pearson,
        spearman: spearman(&paired)?,
        kendall_tau_b: kendall_tau_b(&paired)?,
        fisher_z_pearson: fisher_z(r_pearson).ok(),
        williams,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    let out = format!("{json}\n");
    write_output(&opts.output, &out)?;
    Ok(out)
}
