//! Weighted ensembling of normalized metric scores: z-normalization fitted on
//! a development set, a weighted mean of the normalized scores, and a simplex
//! grid search that tunes the weights against Kendall tau-b.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MetricVector;
use crate::stats::{kendall_tau_b, PairedScores, StatsError};

pub const DEFAULT_GRID_RESOLUTION: usize = 200;

/// Member metrics of the ensemble, in canonical order.
pub const MEMBER_METRICS: [&str; 3] = ["bleu", "chrf", "neural"];

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("metric `{0}` has zero variance on the development set")]
    DegenerateMetric(String),
    #[error("need at least {needed} development segments, got {got}")]
    TooFewSegments { needed: usize, got: usize },
    #[error("grid resolution must be at least 1")]
    InvalidResolution,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Which standard-deviation estimator the normalizer uses. The population
/// form makes the fitted development scores exactly unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdEstimator {
    #[default]
    Population,
    Sample,
}

/// Per-metric mean and standard deviation, fitted once on a development set
/// and then applied unchanged to test scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub means: BTreeMap<String, f64>,
    pub stds: BTreeMap<String, f64>,
}

impl Normalizer {
    /// Fits means and standard deviations for one named metric list each.
    pub fn fit_scores(
        scores_by_metric: &BTreeMap<String, Vec<f64>>,
        estimator: StdEstimator,
    ) -> Result<Self, EnsembleError> {
        let mut means = BTreeMap::new();
        let mut stds = BTreeMap::new();
        for (metric, scores) in scores_by_metric {
            if scores.len() < 2 {
                return Err(EnsembleError::TooFewSegments {
                    needed: 2,
                    got: scores.len(),
                });
            }
            let n = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / n;
            let ss: f64 = scores.iter().map(|s| (s - mean) * (s - mean)).sum();
            let divisor = match estimator {
                StdEstimator::Population => n,
                StdEstimator::Sample => n - 1.0,
            };
            let std = (ss / divisor).sqrt();
            if std == 0.0 {
                return Err(EnsembleError::DegenerateMetric(metric.clone()));
            }
            means.insert(metric.clone(), mean);
            stds.insert(metric.clone(), std);
        }
        Ok(Self { means, stds })
    }

    /// Fits the three member metrics from development metric vectors.
    pub fn fit(dev: &[MetricVector], estimator: StdEstimator) -> Result<Self, EnsembleError> {
        let mut by_metric = BTreeMap::new();
        by_metric.insert("bleu".into(), dev.iter().map(|m| m.bleu).collect());
        by_metric.insert("chrf".into(), dev.iter().map(|m| m.chrf).collect());
        by_metric.insert("neural".into(), dev.iter().map(|m| m.neural).collect());
        Self::fit_scores(&by_metric, estimator)
    }

    pub fn z(&self, metric: &str, value: f64) -> Result<f64, EnsembleError> {
        let mean = self
            .means
            .get(metric)
            .ok_or_else(|| EnsembleError::UnknownMetric(metric.into()))?;
        let std = self
            .stds
            .get(metric)
            .ok_or_else(|| EnsembleError::UnknownMetric(metric.into()))?;
        Ok((value - mean) / std)
    }

    /// Standardizes the three member scores of one segment.
    pub fn normalize(&self, scores: &MetricVector) -> Result<(f64, f64, f64), EnsembleError> {
        Ok((
            self.z("bleu", scores.bleu)?,
            self.z("chrf", scores.chrf)?,
            self.z("neural", scores.neural)?,
        ))
    }
}

/// Nonnegative weights over the three member metrics. Constructed weights
/// must sum to 1 within a loose tolerance and are stored as given; use
/// [`EnsembleWeights::normalized`] to land exactly on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub bleu: f64,
    pub chrf: f64,
    pub neural: f64,
}

/// Tolerance for hand-specified weights; tuned weights are normalized and
/// satisfy the simplex constraint to 1e-9.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-3;

impl EnsembleWeights {
    pub fn new(bleu: f64, chrf: f64, neural: f64) -> Result<Self, EnsembleError> {
        if bleu < 0.0 || chrf < 0.0 || neural < 0.0 {
            return Err(EnsembleError::InvalidWeights(format!(
                "weights must be nonnegative, got ({bleu}, {chrf}, {neural})"
            )));
        }
        let sum = bleu + chrf + neural;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(EnsembleError::InvalidWeights(format!(
                "weights must sum to 1 within {WEIGHT_SUM_TOLERANCE}, got {sum}"
            )));
        }
        Ok(Self { bleu, chrf, neural })
    }

    pub fn sum(&self) -> f64 {
        self.bleu + self.chrf + self.neural
    }

    /// Rescales so the components sum to exactly 1.
    pub fn normalized(&self) -> Self {
        let sum = self.sum();
        Self {
            bleu: self.bleu / sum,
            chrf: self.chrf / sum,
            neural: self.neural / sum,
        }
    }
}

/// Weighted mean of standardized member scores. Operates on z-scores, so the
/// output is unbounded; only rankings are meaningful downstream.
pub fn ensemble_score(weights: &EnsembleWeights, z_bleu: f64, z_chrf: f64, z_neural: f64) -> f64 {
    weights.bleu * z_bleu + weights.chrf * z_chrf + weights.neural * z_neural
}

/// Exhaustive simplex grid search for the weight triple maximizing Kendall
/// tau-b between ensemble scores and gold on the development set. The grid is
/// {(i, j, k) / resolution : i + j + k = resolution}; ties break toward the
/// lexicographically largest (bleu, chrf, neural) triple.
pub fn tune_weights(
    dev: &[(MetricVector, f64)],
    resolution: usize,
    estimator: StdEstimator,
) -> Result<EnsembleWeights, EnsembleError> {
    if resolution == 0 {
        return Err(EnsembleError::InvalidResolution);
    }
    if dev.len() < 2 {
        return Err(EnsembleError::TooFewSegments {
            needed: 2,
            got: dev.len(),
        });
    }
    let metrics: Vec<MetricVector> = dev.iter().map(|(m, _)| *m).collect();
    let gold: Vec<f64> = dev.iter().map(|(_, g)| *g).collect();
    if gold.windows(2).all(|w| w[0] == w[1]) {
        return Err(EnsembleError::Stats(StatsError::DegenerateInput(
            "gold scores are all tied",
        )));
    }

    let normalizer = Normalizer::fit(&metrics, estimator)?;
    let z: Vec<(f64, f64, f64)> = metrics
        .iter()
        .map(|m| normalizer.normalize(m))
        .collect::<Result<_, _>>()?;

    let res = resolution as f64;
    let mut best: Option<(f64, EnsembleWeights)> = None;
    for i in (0..=resolution).rev() {
        for j in (0..=(resolution - i)).rev() {
            let k = resolution - i - j;
            let weights = EnsembleWeights {
                bleu: i as f64 / res,
                chrf: j as f64 / res,
                neural: k as f64 / res,
            };
            let scores: Vec<f64> = z
                .iter()
                .map(|&(zb, zc, zn)| ensemble_score(&weights, zb, zc, zn))
                .collect();
            // Grid points whose ensemble output is constant cannot be ranked
            // and are never selected.
            let tau = match PairedScores::new(scores, gold.clone())
                .and_then(|p| kendall_tau_b(&p))
            {
                Ok(t) => t,
                Err(StatsError::DegenerateInput(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            if best.is_none_or(|(best_tau, _)| tau > best_tau) {
                best = Some((tau, weights));
            }
        }
    }
    let (_, weights) =
        best.ok_or(EnsembleError::Stats(StatsError::DegenerateInput("empty grid")))?;
    Ok(weights.normalized())
}

/// Normalizer, weights and the grid resolution they were tuned at, as stored
/// on disk: {"means": .., "stds": .., "weights": .., "resolution": N}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub means: BTreeMap<String, f64>,
    pub stds: BTreeMap<String, f64>,
    pub weights: BTreeMap<String, f64>,
    pub resolution: usize,
}

impl EnsembleModel {
    pub fn new(normalizer: Normalizer, weights: EnsembleWeights, resolution: usize) -> Self {
        let mut w = BTreeMap::new();
        w.insert("bleu".into(), weights.bleu);
        w.insert("chrf".into(), weights.chrf);
        w.insert("neural".into(), weights.neural);
        Self {
            means: normalizer.means,
            stds: normalizer.stds,
            weights: w,
            resolution,
        }
    }

    pub fn normalizer(&self) -> Normalizer {
        Normalizer {
            means: self.means.clone(),
            stds: self.stds.clone(),
        }
    }

    pub fn ensemble_weights(&self) -> Result<EnsembleWeights, EnsembleError> {
        let get = |name: &str| {
            self.weights
                .get(name)
                .copied()
                .ok_or_else(|| EnsembleError::UnknownMetric(name.into()))
        };
        EnsembleWeights::new(get("bleu")?, get("chrf")?, get("neural")?)
    }

    /// Standardizes one segment's scores and applies the weights.
    pub fn score(&self, scores: &MetricVector) -> Result<f64, EnsembleError> {
        let normalizer = self.normalizer();
        let (zb, zc, zn) = normalizer.normalize(scores)?;
        Ok(ensemble_score(&self.ensemble_weights()?, zb, zc, zn))
    }
}
