//! Mean-squared-error training with Adam, plus a finite-difference gradient
//! checker over every parameter.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::align::TagSequence;
use crate::text::TokenSequence;

use super::{
    backward, forward_traced, FusionConfig, FusionError, FusionInput, FusionParams, Grads, Variant,
    Vocab, DEFAULT_HASH_BUCKETS,
};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Offset mixed into the seed for the dropout stream so that shuffling and
/// dropout draw from independent deterministic streams.
const DROPOUT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// One training example: tokenized triplet, optional tags and sentence-level
/// scores, and the gold quality score.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub src: TokenSequence,
    pub hyp: TokenSequence,
    pub reference: TokenSequence,
    pub tags: Option<TagSequence>,
    pub sl_feats: Option<(f64, f64)>,
    pub gold: f64,
}

impl TrainItem {
    pub fn input(&self) -> FusionInput<'_> {
        FusionInput {
            src: &self.src,
            hyp: &self.hyp,
            reference: &self.reference,
            tags: self.tags.as_ref(),
            sl_feats: self.sl_feats,
        }
    }
}

/// First and second Adam moments, shaped like the parameters, with separate
/// update counters for the token-embedding table (which can be frozen) and
/// everything else.
struct AdamState {
    m: Grads,
    v: Grads,
    t_embeddings: usize,
    t_rest: usize,
}

impl AdamState {
    fn new(params: &FusionParams) -> Self {
        Self {
            m: Grads::zeros_like(params),
            v: Grads::zeros_like(params),
            t_embeddings: 0,
            t_rest: 0,
        }
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: usize, lr: f64) {
    let bias1 = 1.0 - ADAM_BETA1.powi(t as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Number of leading arrays in the canonical order that belong to the
/// token-embedding table.
fn embedding_array_count(params: &FusionParams) -> usize {
    params.token_embeddings.len()
}

/// Trains a fresh parameter set on the dataset. Deterministic for a given
/// seed: initialization, shuffling and dropout all come from seeded streams.
pub fn train(dataset: &[TrainItem], config: &FusionConfig) -> Result<FusionParams, FusionError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(FusionError::EmptyDataset);
    }
    for (i, item) in dataset.iter().enumerate() {
        if !item.gold.is_finite() {
            return Err(FusionError::BadGold(i));
        }
        match config.variant {
            Variant::SlFeatures if item.sl_feats.is_none() => {
                return Err(FusionError::MissingFeature {
                    variant: "sl_features",
                    feature: "sentence-level (bleu, chrf) scores",
                });
            }
            Variant::WlTags if item.tags.is_none() => {
                return Err(FusionError::MissingFeature {
                    variant: "wl_tags",
                    feature: "an OK/BAD tag sequence",
                });
            }
            _ => {}
        }
    }

    let vocab = Vocab::build(
        dataset
            .iter()
            .flat_map(|item| [&item.src, &item.hyp, &item.reference]),
        DEFAULT_HASH_BUCKETS,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_STREAM);
    let mut params = FusionParams::init(config, vocab, &mut rng);
    let mut adam = AdamState::new(&params);

    let n = dataset.len();
    let batches_per_epoch = n.div_ceil(config.batch_size);
    let frozen_batches = (config.frozen_fraction * batches_per_epoch as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let mut grads = Grads::zeros_like(&params);
            let mut loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            let mut numeric_failure = false;
            for &idx in batch {
                let item = &dataset[idx];
                let trace =
                    match forward_traced(&item.input(), &params, config, Some(&mut dropout_rng)) {
                        Ok(t) => t,
                        Err(FusionError::NumericFailure(_)) => {
                            numeric_failure = true;
                            break;
                        }
                        Err(e) => return Err(e),
                    };
                let err = trace.pred - item.gold;
                loss += err * err * scale;
                let g = backward(&item.input(), &trace, &params, config, 2.0 * err * scale);
                grads.add_scaled(&g, 1.0);
            }
            if numeric_failure || !loss.is_finite() || !grads.all_finite() {
                return Err(FusionError::TrainingDiverged {
                    step,
                    checkpoint: Box::new(params),
                });
            }

            let freeze_embeddings = epoch == 0 && step < frozen_batches;
            let emb_arrays = embedding_array_count(&params);
            if !freeze_embeddings {
                adam.t_embeddings += 1;
            }
            adam.t_rest += 1;
            let t_embeddings = adam.t_embeddings;
            let t_rest = adam.t_rest;

            let zipped = params
                .param_arrays_mut()
                .into_iter()
                .zip(grads.arrays())
                .zip(adam.m.arrays_mut())
                .zip(adam.v.arrays_mut());
            for (i, (((p, g), m), v)) in zipped.enumerate() {
                let is_embedding = i < emb_arrays;
                if is_embedding && freeze_embeddings {
                    continue;
                }
                let t = if is_embedding { t_embeddings } else { t_rest };
                adam_update(p, g, m, v, t, config.learning_rate);
            }
            step += 1;
        }
    }

    Ok(params)
}

fn sample_loss(
    item: &TrainItem,
    params: &FusionParams,
    config: &FusionConfig,
) -> Result<f64, FusionError> {
    let trace = forward_traced(&item.input(), params, config, None)?;
    let err = trace.pred - item.gold;
    Ok(err * err)
}

/// Central-difference check of the backpropagated gradient on one sample.
/// Every parameter is perturbed symmetrically with dropout disabled; a
/// fourth-order stencil over +/-epsilon and +/-2*epsilon keeps the truncation
/// error of the numeric side well below the comparison threshold. Returns the
/// maximum relative error with denominator max(|analytic|, |numeric|, 1e-8).
pub fn grad_check(
    params: &FusionParams,
    item: &TrainItem,
    config: &FusionConfig,
    epsilon: f64,
) -> Result<f64, FusionError> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(FusionError::InvalidConfig(format!(
            "grad_check epsilon must be in [1e-6, 1e-3], got {epsilon}"
        )));
    }
    let mut work = params.clone();
    let trace = forward_traced(&item.input(), &work, config, None)?;
    let analytic = backward(
        &item.input(),
        &trace,
        &work,
        config,
        2.0 * (trace.pred - item.gold),
    );

    let n_arrays = analytic.arrays().len();
    let mut max_rel = 0.0f64;
    for array_idx in 0..n_arrays {
        let len = analytic.arrays()[array_idx].len();
        for elem in 0..len {
            let mut loss_at = |offset: f64| -> Result<f64, FusionError> {
                {
                    let mut arrays = work.param_arrays_mut();
                    arrays[array_idx][elem] += offset;
                }
                let loss = sample_loss(item, &work, config);
                {
                    let mut arrays = work.param_arrays_mut();
                    arrays[array_idx][elem] -= offset;
                }
                loss
            };
            let l_p1 = loss_at(epsilon)?;
            let l_m1 = loss_at(-epsilon)?;
            let l_p2 = loss_at(2.0 * epsilon)?;
            let l_m2 = loss_at(-2.0 * epsilon)?;
            // Symmetric differences first, so zero-influence slots cancel
            // exactly instead of leaving stencil rounding noise behind.
            let numeric =
                (8.0 * (l_p1 - l_m1) - (l_p2 - l_m2)) / (12.0 * epsilon);
            let a = analytic.arrays()[array_idx][elem];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
