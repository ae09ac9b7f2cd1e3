//! A desk-scale neural quality regressor with two fusion paths on top of a
//! trainable mean-pooled token-embedding encoder.
//!
//! Three variants share the same skeleton of pooled comparison features
//! feeding two feed-forward layers and a scalar head:
//!
//! * `baseline` scores the pooled features alone;
//! * `sl_features` concatenates sentence-level lexical scores (BLEU, chrF)
//!   onto the first feed-forward output and projects the result through a
//!   narrow bottleneck before the second feed-forward layer;
//! * `wl_tags` embeds per-token OK/BAD tags, pools them into a quality
//!   vector, adds the elementwise sum of token and tag embeddings, and
//!   extends the pooled feature blocks with both vectors.
//!
//! The pooled feature blocks are, in order: h_hyp, h_src, h_ref,
//! h_hyp*h_ref, |h_hyp - h_ref|, h_hyp*h_src, |h_hyp - h_src|, and for
//! `wl_tags` additionally the pooled tag vector and the pooled sum vector.
//! All arithmetic is f64 and the forward pass at inference is deterministic;
//! dropout only runs when a training RNG is supplied.

mod model;
mod train;

pub use model::FusionModel;
pub use train::{grad_check, train, TrainItem};

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{Tag, TagSequence};
use crate::text::TokenSequence;

pub const DEFAULT_EMBED_DIM: usize = 32;
pub const DEFAULT_HIDDEN_SIZES: [usize; 2] = [96, 32];
pub const DEFAULT_BOTTLENECK_SIZE: usize = 8;
pub const DEFAULT_HASH_BUCKETS: usize = 16;

/// Half-width of the uniform initialization interval.
const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("variant `{variant}` requires {feature}")]
    MissingFeature {
        variant: &'static str,
        feature: &'static str,
    },
    #[error("tag sequence length {tags} does not match hypothesis length {hyp}")]
    InvalidTags { tags: usize, hyp: usize },
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("training diverged at step {step}; last good parameters attached")]
    TrainingDiverged {
        step: usize,
        checkpoint: Box<FusionParams>,
    },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("gold score at item {0} is not finite")]
    BadGold(usize),
    #[error("model serialization: {0}")]
    Serialization(String),
}

/// Which fusion path the regressor uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Baseline,
    SlFeatures,
    WlTags,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::SlFeatures => "sl_features",
            Variant::WlTags => "wl_tags",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "sl_features" | "sl-features" => Ok(Variant::SlFeatures),
            "wl_tags" | "wl-tags" => Ok(Variant::WlTags),
            other => Err(format!("unknown variant `{other}`")),
        }
    }
}

/// Hyperparameters of the regressor and its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub embed_dim: usize,
    pub hidden_sizes: [usize; 2],
    pub bottleneck_size: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the first epoch during which the token-embedding table
    /// receives no gradient updates.
    pub frozen_fraction: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            embed_dim: DEFAULT_EMBED_DIM,
            hidden_sizes: DEFAULT_HIDDEN_SIZES,
            bottleneck_size: DEFAULT_BOTTLENECK_SIZE,
            dropout: 0.15,
            learning_rate: 3e-4,
            batch_size: 4,
            epochs: 2,
            frozen_fraction: 0.3,
            seed: 42,
            variant: Variant::Baseline,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |msg: String| Err(FusionError::InvalidConfig(msg));
        if self.embed_dim == 0
            || self.hidden_sizes.contains(&0)
            || self.bottleneck_size == 0
        {
            return bad("all layer sizes must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.frozen_fraction) {
            return bad(format!(
                "frozen_fraction must be in [0, 1], got {}",
                self.frozen_fraction
            ));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be at least 1".into());
        }
        Ok(())
    }

    /// Number of pooled feature blocks feeding the first feed-forward layer.
    pub fn feature_blocks(&self) -> usize {
        match self.variant {
            Variant::Baseline | Variant::SlFeatures => 7,
            Variant::WlTags => 9,
        }
    }

    pub fn feature_width(&self) -> usize {
        self.feature_blocks() * self.embed_dim
    }

    /// Input width of the second feed-forward layer.
    pub fn ff2_input(&self) -> usize {
        match self.variant {
            Variant::SlFeatures => self.bottleneck_size,
            _ => self.hidden_sizes[0],
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Token vocabulary with a fixed block of hash buckets for unknown tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    hash_buckets: usize,
}

impl Vocab {
    /// Builds a deterministic vocabulary (sorted unique tokens) from the
    /// given sequences.
    pub fn build<'a>(
        sequences: impl IntoIterator<Item = &'a TokenSequence>,
        hash_buckets: usize,
    ) -> Self {
        let mut unique: Vec<String> = sequences
            .into_iter()
            .flat_map(|s| s.iter().cloned())
            .collect();
        unique.sort();
        unique.dedup();
        Self::from_tokens(unique, hash_buckets)
    }

    pub fn from_tokens(tokens: Vec<String>, hash_buckets: usize) -> Self {
        let hash_buckets = hash_buckets.max(1);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            hash_buckets,
        }
    }

    /// Embedding row for a token; unknown tokens fall into one of the
    /// trailing hash buckets.
    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) => i,
            None => self.tokens.len() + (fnv1a(token) % self.hash_buckets as u64) as usize,
        }
    }

    /// Total number of embedding rows, known tokens plus hash buckets.
    pub fn rows(&self) -> usize {
        self.tokens.len() + self.hash_buckets
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn hash_buckets(&self) -> usize {
        self.hash_buckets
    }
}

/// A dense layer, `weight[out][in]` plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Linear {
    fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = (0..out_dim)
            .map(|_| (0..in_dim).map(|_| uniform_init(rng)).collect())
            .collect();
        let bias = (0..out_dim).map(|_| uniform_init(rng)).collect();
        Self { weight, bias }
    }

    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            weight: vec![vec![0.0; in_dim]; out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.first().map_or(0, Vec::len)
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

fn uniform_init(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-INIT_RANGE..=INIT_RANGE)
}

/// All trainable arrays of the regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    pub vocab: Vocab,
    /// `vocab.rows()` x `embed_dim`.
    pub token_embeddings: Vec<Vec<f64>>,
    /// Exactly two rows: OK then BAD.
    pub tag_embeddings: [Vec<f64>; 2],
    pub ff1: Linear,
    /// Present only for the `sl_features` variant.
    pub bottleneck: Option<Linear>,
    pub ff2: Linear,
    pub head: Linear,
}

impl FusionParams {
    /// Seeded uniform initialization in [-0.1, 0.1], arrays drawn in a fixed
    /// order so equal seeds give bit-identical parameters.
    pub fn init(config: &FusionConfig, vocab: Vocab, rng: &mut ChaCha8Rng) -> Self {
        let e = config.embed_dim;
        let token_embeddings = (0..vocab.rows())
            .map(|_| (0..e).map(|_| uniform_init(rng)).collect())
            .collect();
        let tag_embeddings = [
            (0..e).map(|_| uniform_init(rng)).collect(),
            (0..e).map(|_| uniform_init(rng)).collect(),
        ];
        let ff1 = Linear::init(config.hidden_sizes[0], config.feature_width(), rng);
        let bottleneck = match config.variant {
            Variant::SlFeatures => Some(Linear::init(
                config.bottleneck_size,
                config.hidden_sizes[0] + 2,
                rng,
            )),
            _ => None,
        };
        let ff2 = Linear::init(config.hidden_sizes[1], config.ff2_input(), rng);
        let head = Linear::init(1, config.hidden_sizes[1], rng);
        Self {
            vocab,
            token_embeddings,
            tag_embeddings,
            ff1,
            bottleneck,
            ff2,
            head,
        }
    }

    /// All-zero parameters with the same shapes; useful for tests.
    pub fn zeros(config: &FusionConfig, vocab: Vocab) -> Self {
        let e = config.embed_dim;
        Self {
            token_embeddings: vec![vec![0.0; e]; vocab.rows()],
            tag_embeddings: [vec![0.0; e], vec![0.0; e]],
            ff1: Linear::zeros(config.hidden_sizes[0], config.feature_width()),
            bottleneck: match config.variant {
                Variant::SlFeatures => Some(Linear::zeros(
                    config.bottleneck_size,
                    config.hidden_sizes[0] + 2,
                )),
                _ => None,
            },
            ff2: Linear::zeros(config.hidden_sizes[1], config.ff2_input()),
            head: Linear::zeros(1, config.hidden_sizes[1]),
            vocab,
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.tag_embeddings[0].len()
    }

    /// All parameter arrays as mutable slices, in a fixed canonical order
    /// shared with [`Grads::arrays`].
    pub(crate) fn param_arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut arrays: Vec<&mut [f64]> = Vec::new();
        for row in &mut self.token_embeddings {
            arrays.push(row);
        }
        for row in &mut self.tag_embeddings {
            arrays.push(row);
        }
        for layer in [&mut self.ff1]
            .into_iter()
            .chain(self.bottleneck.as_mut())
            .chain([&mut self.ff2, &mut self.head])
        {
            for row in &mut layer.weight {
                arrays.push(row);
            }
            arrays.push(&mut layer.bias);
        }
        arrays
    }

    pub fn all_finite(&mut self) -> bool {
        self.param_arrays_mut()
            .iter()
            .all(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// Gradients with the same shapes as [`FusionParams`].
#[derive(Debug, Clone)]
pub(crate) struct Grads {
    pub token_embeddings: Vec<Vec<f64>>,
    pub tag_embeddings: [Vec<f64>; 2],
    pub ff1: Linear,
    pub bottleneck: Option<Linear>,
    pub ff2: Linear,
    pub head: Linear,
}

impl Grads {
    pub fn zeros_like(params: &FusionParams) -> Self {
        let e = params.embed_dim();
        Self {
            token_embeddings: vec![vec![0.0; e]; params.token_embeddings.len()],
            tag_embeddings: [vec![0.0; e], vec![0.0; e]],
            ff1: Linear::zeros(params.ff1.out_dim(), params.ff1.in_dim()),
            bottleneck: params
                .bottleneck
                .as_ref()
                .map(|b| Linear::zeros(b.out_dim(), b.in_dim())),
            ff2: Linear::zeros(params.ff2.out_dim(), params.ff2.in_dim()),
            head: Linear::zeros(params.head.out_dim(), params.head.in_dim()),
        }
    }

    /// Same canonical array order as `FusionParams::param_arrays_mut`.
    pub fn arrays(&self) -> Vec<&[f64]> {
        let mut arrays: Vec<&[f64]> = Vec::new();
        for row in &self.token_embeddings {
            arrays.push(row);
        }
        for row in &self.tag_embeddings {
            arrays.push(row);
        }
        for layer in [&self.ff1]
            .into_iter()
            .chain(self.bottleneck.as_ref())
            .chain([&self.ff2, &self.head])
        {
            for row in &layer.weight {
                arrays.push(row);
            }
            arrays.push(&layer.bias);
        }
        arrays
    }

    pub fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        let mut arrays: Vec<&mut [f64]> = Vec::new();
        for row in &mut self.token_embeddings {
            arrays.push(row);
        }
        for row in &mut self.tag_embeddings {
            arrays.push(row);
        }
        for layer in [&mut self.ff1]
            .into_iter()
            .chain(self.bottleneck.as_mut())
            .chain([&mut self.ff2, &mut self.head])
        {
            for row in &mut layer.weight {
                arrays.push(row);
            }
            arrays.push(&mut layer.bias);
        }
        arrays
    }

    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s * scale;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// One scoring request: token sequences plus the variant-dependent extras.
#[derive(Debug, Clone, Copy)]
pub struct FusionInput<'a> {
    pub src: &'a TokenSequence,
    pub hyp: &'a TokenSequence,
    pub reference: &'a TokenSequence,
    pub tags: Option<&'a TagSequence>,
    /// (bleu, chrf) sentence scores.
    pub sl_feats: Option<(f64, f64)>,
}

/// Mean of the token-embedding rows; the empty sequence encodes to zero.
pub fn encode(seq: &TokenSequence, params: &FusionParams) -> Vec<f64> {
    let e = params.embed_dim();
    let mut pooled = vec![0.0; e];
    if seq.is_empty() {
        return pooled;
    }
    for token in seq.iter() {
        let row = &params.token_embeddings[params.vocab.id(token)];
        for (p, v) in pooled.iter_mut().zip(row) {
            *p += v;
        }
    }
    let inv = 1.0 / seq.len() as f64;
    for p in &mut pooled {
        *p *= inv;
    }
    pooled
}

/// Pools tag embeddings into a quality vector and the per-position sum of
/// token and tag embeddings into a combined vector; returns their means
/// `(w_bar, sigma_bar)`. Empty hypotheses yield zero vectors.
pub fn encode_tags(
    tags: &TagSequence,
    hyp: &TokenSequence,
    params: &FusionParams,
) -> Result<(Vec<f64>, Vec<f64>), FusionError> {
    if tags.len() != hyp.len() {
        return Err(FusionError::InvalidTags {
            tags: tags.len(),
            hyp: hyp.len(),
        });
    }
    let e = params.embed_dim();
    let mut w_bar = vec![0.0; e];
    let mut sigma_bar = vec![0.0; e];
    if tags.is_empty() {
        return Ok((w_bar, sigma_bar));
    }
    for (tag, token) in tags.iter().zip(hyp.iter()) {
        let tag_row = match tag {
            Tag::Ok => &params.tag_embeddings[0],
            Tag::Bad => &params.tag_embeddings[1],
        };
        let tok_row = &params.token_embeddings[params.vocab.id(token)];
        for i in 0..e {
            w_bar[i] += tag_row[i];
            sigma_bar[i] += tok_row[i] + tag_row[i];
        }
    }
    let inv = 1.0 / tags.len() as f64;
    for i in 0..e {
        w_bar[i] *= inv;
        sigma_bar[i] *= inv;
    }
    Ok((w_bar, sigma_bar))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pooled encoder outputs kept around for the backward pass.
pub(crate) struct PooledVectors {
    h_hyp: Vec<f64>,
    h_src: Vec<f64>,
    h_ref: Vec<f64>,
    w_bar: Option<Vec<f64>>,
}

/// Builds the concatenated feature vector for the configured variant.
pub(crate) fn features(
    input: &FusionInput,
    params: &FusionParams,
    config: &FusionConfig,
) -> Result<(Vec<f64>, PooledVectors), FusionError> {
    match config.variant {
        Variant::SlFeatures if input.sl_feats.is_none() => {
            return Err(FusionError::MissingFeature {
                variant: "sl_features",
                feature: "sentence-level (bleu, chrf) scores",
            });
        }
        Variant::WlTags if input.tags.is_none() => {
            return Err(FusionError::MissingFeature {
                variant: "wl_tags",
                feature: "an OK/BAD tag sequence",
            });
        }
        _ => {}
    }

    let h_hyp = encode(input.hyp, params);
    let h_src = encode(input.src, params);
    let h_ref = encode(input.reference, params);
    let e = params.embed_dim();

    let mut x = Vec::with_capacity(config.feature_width());
    x.extend_from_slice(&h_hyp);
    x.extend_from_slice(&h_src);
    x.extend_from_slice(&h_ref);
    for i in 0..e {
        x.push(h_hyp[i] * h_ref[i]);
    }
    for i in 0..e {
        x.push((h_hyp[i] - h_ref[i]).abs());
    }
    for i in 0..e {
        x.push(h_hyp[i] * h_src[i]);
    }
    for i in 0..e {
        x.push((h_hyp[i] - h_src[i]).abs());
    }

    let mut w_bar_out = None;
    if config.variant == Variant::WlTags {
        let tags = input.tags.expect("checked above");
        let (w_bar, sigma_bar) = encode_tags(tags, input.hyp, params)?;
        x.extend_from_slice(&w_bar);
        x.extend_from_slice(&sigma_bar);
        w_bar_out = Some(w_bar);
    }

    Ok((
        x,
        PooledVectors {
            h_hyp,
            h_src,
            h_ref,
            w_bar: w_bar_out,
        },
    ))
}

/// Everything the backward pass needs from one forward evaluation.
pub(crate) struct Trace {
    features: Vec<f64>,
    pooled: PooledVectors,
    a1: Vec<f64>,
    m1: Vec<f64>,
    zcat: Option<Vec<f64>>,
    ab: Option<Vec<f64>>,
    mb: Option<Vec<f64>>,
    a2: Vec<f64>,
    m2: Vec<f64>,
    pub pred: f64,
}

fn dropout_mask(len: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Vec<f64> {
    match rng {
        Some(rng) if p > 0.0 => {
            let keep = 1.0 / (1.0 - p);
            (0..len)
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                .collect()
        }
        _ => vec![1.0; len],
    }
}

fn tanh_vec(z: Vec<f64>) -> Vec<f64> {
    z.into_iter().map(f64::tanh).collect()
}

fn apply_mask(a: &[f64], m: &[f64]) -> Vec<f64> {
    a.iter().zip(m).map(|(v, s)| v * s).collect()
}

/// Full forward pass. Passing a dropout RNG selects training mode; `None`
/// gives the deterministic inference path.
pub(crate) fn forward_traced(
    input: &FusionInput,
    params: &FusionParams,
    config: &FusionConfig,
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<Trace, FusionError> {
    let (x, pooled) = features(input, params, config)?;

    let a1 = tanh_vec(params.ff1.forward(&x));
    let m1 = dropout_mask(a1.len(), config.dropout, dropout_rng.as_deref_mut());
    let d1 = apply_mask(&a1, &m1);

    let (u, zcat, ab, mb) = match (config.variant, &params.bottleneck) {
        (Variant::SlFeatures, Some(bottleneck)) => {
            let (bleu, chrf) = input.sl_feats.expect("checked in features()");
            let mut zcat = d1.clone();
            zcat.push(bleu);
            zcat.push(chrf);
            let ab = tanh_vec(bottleneck.forward(&zcat));
            let mb = dropout_mask(ab.len(), config.dropout, dropout_rng.as_deref_mut());
            let db = apply_mask(&ab, &mb);
            (db, Some(zcat), Some(ab), Some(mb))
        }
        (Variant::SlFeatures, None) => {
            return Err(FusionError::InvalidConfig(
                "sl_features parameters are missing the bottleneck layer".into(),
            ));
        }
        _ => (d1, None, None, None),
    };

    let a2 = tanh_vec(params.ff2.forward(&u));
    let m2 = dropout_mask(a2.len(), config.dropout, dropout_rng);
    let d2 = apply_mask(&a2, &m2);

    let pred = params
        .head
        .forward(&d2)
        .first()
        .copied()
        .expect("head has one output");
    if !pred.is_finite() {
        return Err(FusionError::NumericFailure(format!(
            "non-finite prediction {pred}"
        )));
    }

    Ok(Trace {
        features: x,
        pooled,
        a1,
        m1,
        zcat,
        ab,
        mb,
        a2,
        m2,
        pred,
    })
}

/// Predicted quality score for one segment; inference mode, deterministic.
pub fn forward(
    input: &FusionInput,
    params: &FusionParams,
    config: &FusionConfig,
) -> Result<f64, FusionError> {
    forward_traced(input, params, config, None).map(|t| t.pred)
}

/// Backpropagates `d_loss/d_pred` through a recorded forward pass.
pub(crate) fn backward(
    input: &FusionInput,
    trace: &Trace,
    params: &FusionParams,
    config: &FusionConfig,
    g_pred: f64,
) -> Grads {
    let mut grads = Grads::zeros_like(params);
    let e = params.embed_dim();

    // Head.
    let d2 = apply_mask(&trace.a2, &trace.m2);
    for (g, v) in grads.head.weight[0].iter_mut().zip(&d2) {
        *g = g_pred * v;
    }
    grads.head.bias[0] = g_pred;

    // Through ff2.
    let g_z2: Vec<f64> = (0..trace.a2.len())
        .map(|k| {
            let g_d2 = g_pred * params.head.weight[0][k];
            g_d2 * trace.m2[k] * (1.0 - trace.a2[k] * trace.a2[k])
        })
        .collect();
    let u = match (&trace.ab, &trace.mb) {
        (Some(ab), Some(mb)) => apply_mask(ab, mb),
        _ => apply_mask(&trace.a1, &trace.m1),
    };
    for (o, &gz) in g_z2.iter().enumerate() {
        for (g, v) in grads.ff2.weight[o].iter_mut().zip(&u) {
            *g = gz * v;
        }
        grads.ff2.bias[o] = gz;
    }
    let mut g_u = vec![0.0; u.len()];
    for (o, &gz) in g_z2.iter().enumerate() {
        for (gu, w) in g_u.iter_mut().zip(&params.ff2.weight[o]) {
            *gu += gz * w;
        }
    }

    // Through the bottleneck when present.
    let g_d1: Vec<f64> = if let (Some(ab), Some(mb), Some(zcat), Some(bottleneck)) = (
        &trace.ab,
        &trace.mb,
        &trace.zcat,
        params.bottleneck.as_ref(),
    ) {
        let g_zb: Vec<f64> = (0..ab.len())
            .map(|k| g_u[k] * mb[k] * (1.0 - ab[k] * ab[k]))
            .collect();
        let gb = grads.bottleneck.as_mut().expect("same shape as params");
        for (o, &gz) in g_zb.iter().enumerate() {
            for (g, v) in gb.weight[o].iter_mut().zip(zcat) {
                *g = gz * v;
            }
            gb.bias[o] = gz;
        }
        let h1 = trace.a1.len();
        let mut g_zcat = vec![0.0; zcat.len()];
        for (o, &gz) in g_zb.iter().enumerate() {
            for (gc, w) in g_zcat.iter_mut().zip(&bottleneck.weight[o]) {
                *gc += gz * w;
            }
        }
        g_zcat.truncate(h1);
        g_zcat
    } else {
        g_u
    };

    // Through ff1.
    let g_z1: Vec<f64> = (0..trace.a1.len())
        .map(|k| g_d1[k] * trace.m1[k] * (1.0 - trace.a1[k] * trace.a1[k]))
        .collect();
    for (o, &gz) in g_z1.iter().enumerate() {
        for (g, v) in grads.ff1.weight[o].iter_mut().zip(&trace.features) {
            *g = gz * v;
        }
        grads.ff1.bias[o] = gz;
    }
    let mut g_x = vec![0.0; trace.features.len()];
    for (o, &gz) in g_z1.iter().enumerate() {
        for (gx, w) in g_x.iter_mut().zip(&params.ff1.weight[o]) {
            *gx += gz * w;
        }
    }

    // Split feature gradient into blocks and push into the pooled vectors.
    let block = |b: usize| &g_x[b * e..(b + 1) * e];
    let p = &trace.pooled;
    let mut g_hyp = vec![0.0; e];
    let mut g_src = vec![0.0; e];
    let mut g_ref = vec![0.0; e];
    for i in 0..e {
        let s_hr = sign(p.h_hyp[i] - p.h_ref[i]);
        let s_hs = sign(p.h_hyp[i] - p.h_src[i]);
        g_hyp[i] = block(0)[i]
            + block(3)[i] * p.h_ref[i]
            + block(4)[i] * s_hr
            + block(5)[i] * p.h_src[i]
            + block(6)[i] * s_hs;
        g_src[i] = block(1)[i] + block(5)[i] * p.h_hyp[i] - block(6)[i] * s_hs;
        g_ref[i] = block(2)[i] + block(3)[i] * p.h_hyp[i] - block(4)[i] * s_hr;
    }

    let mut g_w_bar = vec![0.0; e];
    if config.variant == Variant::WlTags && p.w_bar.is_some() {
        // sigma_bar = h_hyp + w_bar, so its gradient feeds both.
        for i in 0..e {
            g_hyp[i] += block(8)[i];
            g_w_bar[i] = block(7)[i] + block(8)[i];
        }
    }

    // Distribute pooled gradients to embedding rows (mean pooling).
    let mut scatter = |seq: &TokenSequence, g: &[f64]| {
        if seq.is_empty() {
            return;
        }
        let inv = 1.0 / seq.len() as f64;
        for token in seq.iter() {
            let row = &mut grads.token_embeddings[params.vocab.id(token)];
            for (r, v) in row.iter_mut().zip(g) {
                *r += v * inv;
            }
        }
    };
    scatter(input.hyp, &g_hyp);
    scatter(input.src, &g_src);
    scatter(input.reference, &g_ref);

    if config.variant == Variant::WlTags {
        if let Some(tags) = input.tags {
            if !tags.is_empty() {
                let inv = 1.0 / tags.len() as f64;
                for tag in tags.iter() {
                    let row = match tag {
                        Tag::Ok => &mut grads.tag_embeddings[0],
                        Tag::Bad => &mut grads.tag_embeddings[1],
                    };
                    for (r, v) in row.iter_mut().zip(&g_w_bar) {
                        *r += v * inv;
                    }
                }
            }
        }
    }

    grads
}
