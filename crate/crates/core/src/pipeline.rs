//! End-to-end training: contrastive encoder fine-tuning followed by the
//! classification head on the frozen, fine-tuned embeddings.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::contrastive::{train_contrastive, ContrastiveConfig, LossTrajectory};
use crate::corpus::Dataset;
use crate::encoder::{init_encoder, EncoderModel, SentenceEmbedding, TokenizerConfig};
use crate::encoder::{DEFAULT_EMBED_DIM, DEFAULT_HASH_DIM};
use crate::error::Result;
use crate::head::{train_head, HeadConfig, HeadModel, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSettings {
    pub tokenizer: TokenizerConfig,
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub init_seed: u64,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            hash_dim: DEFAULT_HASH_DIM,
            embed_dim: DEFAULT_EMBED_DIM,
            init_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub encoder: EncoderSettings,
    pub contrastive: ContrastiveConfig,
    pub head: HeadConfig,
}

/// A trained encoder and head: one deployable classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub encoder: EncoderModel,
    pub head: HeadModel,
}

impl Classifier {
    pub fn new(encoder: EncoderModel, head: HeadModel) -> Result<Self> {
        if encoder.embed_dim() != head.embed_dim() {
            return Err(crate::Error::Compatibility(format!(
                "encoder dimension {} does not match head dimension {}",
                encoder.embed_dim(),
                head.embed_dim()
            )));
        }
        Ok(Self { encoder, head })
    }

    pub fn predict(&self, text: &str) -> Prediction {
        self.head
            .predict_embedding(&self.encoder.embed(text))
            .expect("dimensions checked at construction")
    }

    /// Predicted label for every example, keyed by id.
    pub fn predict_labels(&self, d: &Dataset) -> HashMap<String, String> {
        d.examples()
            .iter()
            .map(|ex| (ex.id.clone(), self.predict(&ex.text).label))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub classifier: Classifier,
    pub trajectory: LossTrajectory,
    pub pair_count: usize,
}

pub fn train_pipeline(train: &Dataset, cfg: &PipelineConfig) -> Result<TrainOutcome> {
    let enc = &cfg.encoder;
    let encoder = init_encoder(enc.tokenizer, enc.hash_dim, enc.embed_dim, enc.init_seed)?;
    let (encoder, trajectory) = train_contrastive(encoder, train, &cfg.contrastive)?;
    let embeddings: Vec<SentenceEmbedding> = train
        .examples()
        .iter()
        .map(|ex| encoder.embed(&ex.text))
        .collect();
    let labels: Vec<String> = train.examples().iter().map(|ex| ex.label.clone()).collect();
    let head = train_head(&embeddings, &labels, train.label_classes(), &cfg.head)?;
    Ok(TrainOutcome {
        classifier: Classifier::new(encoder, head)?,
        trajectory,
        pair_count: 2 * cfg.contrastive.iterations * train.len(),
    })
}
