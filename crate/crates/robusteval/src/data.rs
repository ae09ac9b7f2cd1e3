//! Segment-level data shared across modules.

use serde::{Deserialize, Serialize};

/// One evaluation segment: source text, machine-translated hypothesis and
/// human reference, plus an optional gold quality score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTriplet {
    pub source: String,
    pub hypothesis: String,
    pub reference: String,
    pub gold: Option<f64>,
}

impl SegmentTriplet {
    pub fn new(
        source: impl Into<String>,
        hypothesis: impl Into<String>,
        reference: impl Into<String>,
    ) -> Self {
        Self {
            source: source.into(),
            hypothesis: hypothesis.into(),
            reference: reference.into(),
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: f64) -> Self {
        self.gold = Some(gold);
        self
    }
}

/// Named per-segment metric scores for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub bleu: f64,
    pub chrf: f64,
    pub neural: f64,
    /// Present once an ensemble combination has been applied.
    pub ensemble: Option<f64>,
}

impl MetricVector {
    pub fn new(bleu: f64, chrf: f64, neural: f64) -> Self {
        Self {
            bleu,
            chrf,
            neural,
            ensemble: None,
        }
    }
}
