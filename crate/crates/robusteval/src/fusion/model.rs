//! On-disk model format: one JSON document carrying the config, the
//! vocabulary and every parameter array, under the version tag `fusion-v1`.

use serde::{Deserialize, Serialize};

use crate::text::TokenizerConfig;

use super::{FusionConfig, FusionError, FusionParams, Linear, Variant, Vocab};

pub const MODEL_VERSION: &str = "fusion-v1";

/// A trained regressor together with its configuration and the tokenizer it
/// expects inputs to be produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub config: FusionConfig,
    pub tokenizer: TokenizerConfig,
    pub params: FusionParams,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: String,
    config: FusionConfig,
    tokenizer: TokenizerConfig,
    vocabulary: Vec<String>,
    hash_buckets: usize,
    params: ParamsDoc,
}

#[derive(Serialize, Deserialize)]
struct ParamsDoc {
    token_embeddings: Vec<Vec<f64>>,
    tag_embeddings: Vec<Vec<f64>>,
    ff1_weight: Vec<Vec<f64>>,
    ff1_bias: Vec<f64>,
    bottleneck_weight: Option<Vec<Vec<f64>>>,
    bottleneck_bias: Option<Vec<f64>>,
    ff2_weight: Vec<Vec<f64>>,
    ff2_bias: Vec<f64>,
    head_weight: Vec<Vec<f64>>,
    head_bias: Vec<f64>,
}

impl FusionModel {
    pub fn new(config: FusionConfig, tokenizer: TokenizerConfig, params: FusionParams) -> Self {
        Self {
            config,
            tokenizer,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String, FusionError> {
        let p = &self.params;
        let doc = ModelDoc {
            version: MODEL_VERSION.to_string(),
            config: self.config.clone(),
            tokenizer: self.tokenizer,
            vocabulary: p.vocab.tokens().to_vec(),
            hash_buckets: p.vocab.hash_buckets(),
            params: ParamsDoc {
                token_embeddings: p.token_embeddings.clone(),
                tag_embeddings: p.tag_embeddings.to_vec(),
                ff1_weight: p.ff1.weight.clone(),
                ff1_bias: p.ff1.bias.clone(),
                bottleneck_weight: p.bottleneck.as_ref().map(|b| b.weight.clone()),
                bottleneck_bias: p.bottleneck.as_ref().map(|b| b.bias.clone()),
                ff2_weight: p.ff2.weight.clone(),
                ff2_bias: p.ff2.bias.clone(),
                head_weight: p.head.weight.clone(),
                head_bias: p.head.bias.clone(),
            },
        };
        serde_json::to_string_pretty(&doc).map_err(|e| FusionError::Serialization(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self, FusionError> {
        let doc: ModelDoc =
            serde_json::from_str(json).map_err(|e| FusionError::Serialization(e.to_string()))?;
        if doc.version != MODEL_VERSION {
            return Err(FusionError::Serialization(format!(
                "unsupported model version `{}`, expected `{MODEL_VERSION}`",
                doc.version
            )));
        }
        let vocab = Vocab::from_tokens(doc.vocabulary, doc.hash_buckets);
        let p = doc.params;
        let tag_embeddings: [Vec<f64>; 2] = p
            .tag_embeddings
            .try_into()
            .map_err(|_| FusionError::Serialization("tag table must have two rows".into()))?;
        let bottleneck = match (p.bottleneck_weight, p.bottleneck_bias) {
            (Some(weight), Some(bias)) => Some(Linear { weight, bias }),
            (None, None) => None,
            _ => {
                return Err(FusionError::Serialization(
                    "bottleneck weight and bias must both be present or both absent".into(),
                ))
            }
        };
        if doc.config.variant == Variant::SlFeatures && bottleneck.is_none() {
            return Err(FusionError::Serialization(
                "sl_features model is missing its bottleneck layer".into(),
            ));
        }
        let params = FusionParams {
            vocab,
            token_embeddings: p.token_embeddings,
            tag_embeddings,
            ff1: Linear {
                weight: p.ff1_weight,
                bias: p.ff1_bias,
            },
            bottleneck,
            ff2: Linear {
                weight: p.ff2_weight,
                bias: p.ff2_bias,
            },
            head: Linear {
                weight: p.head_weight,
                bias: p.head_bias,
            },
        };
        Ok(Self {
            config: doc.config,
            tokenizer: doc.tokenizer,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{train, TrainItem};
    use crate::text::TokenSequence;

    fn trained(variant: Variant) -> FusionModel {
        let dataset: Vec<TrainItem> = (0..6)
            .map(|i| {
                let word = format!("tok{i}");
                TrainItem {
                    src: TokenSequence::from_tokens([word.as_str(), "s"]),
                    hyp: TokenSequence::from_tokens([word.as_str(), "h"]),
                    reference: TokenSequence::from_tokens([word.as_str()]),
                    tags: Some(crate::align::TagSequence::from_tags(vec![
                        crate::align::Tag::Ok,
                        crate::align::Tag::Bad,
                    ])),
                    sl_feats: Some((0.2, 0.8)),
                    gold: i as f64 / 6.0,
                }
            })
            .collect();
        let config = FusionConfig {
            embed_dim: 3,
            hidden_sizes: [4, 3],
            bottleneck_size: 2,
            epochs: 2,
            variant,
            ..FusionConfig::default()
        };
        let params = train(&dataset, &config).unwrap();
        FusionModel::new(config, TokenizerConfig::default(), params)
    }

    #[test]
    fn round_trip_preserves_model_for_all_variants() {
        for variant in [Variant::Baseline, Variant::SlFeatures, Variant::WlTags] {
            let model = trained(variant);
            let json = model.to_json().unwrap();
            assert!(json.contains("\"version\": \"fusion-v1\""));
            let back = FusionModel::from_json(&json).unwrap();
            assert_eq!(back, model);
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let model = trained(Variant::Baseline);
        let json = model.to_json().unwrap().replace("fusion-v1", "fusion-v9");
        assert!(matches!(
            FusionModel::from_json(&json),
            Err(FusionError::Serialization(_))
        ));
    }
}
