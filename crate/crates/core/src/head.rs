//! Softmax-regression classification head over frozen sentence embeddings.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderModel, SentenceEmbedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    /// Unused by full-batch descent from zero; kept so configs round-trip.
    pub seed: u64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// `num_classes × embed_dim` weights plus a bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadModel {
    weights: Vec<f64>,
    bias: Vec<f64>,
    class_order: Vec<String>,
    embed_dim: usize,
}

impl HeadModel {
    pub fn zeros(class_order: Vec<String>, embed_dim: usize) -> Self {
        let c = class_order.len();
        Self {
            weights: vec![0.0; c * embed_dim],
            bias: vec![0.0; c],
            class_order,
            embed_dim,
        }
    }

    pub fn from_parts(
        class_order: Vec<String>,
        embed_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        let c = class_order.len();
        if c == 0 {
            return Err(Error::Validation("head has no classes".into()));
        }
        if weights.len() != c * embed_dim || bias.len() != c {
            return Err(Error::Compatibility(format!(
                "head buffers ({} weights, {} biases) do not match {c} classes × {embed_dim}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "head parameters contain non-finite values".into(),
            ));
        }
        Ok(Self {
            weights,
            bias,
            class_order,
            embed_dim,
        })
    }

    pub fn class_order(&self) -> &[String] {
        &self.class_order
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_order.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn logits(&self, e: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.embed_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(e).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }

    pub fn predict_embedding(&self, e: &SentenceEmbedding) -> Result<Prediction> {
        if e.0.len() != self.embed_dim {
            return Err(Error::Compatibility(format!(
                "embedding has dimension {}, head expects {}",
                e.0.len(),
                self.embed_dim
            )));
        }
        let probs = softmax(&self.logits(&e.0));
        let best = argmax(&probs);
        Ok(Prediction {
            label: self.class_order[best].clone(),
            probabilities: self.class_order.iter().cloned().zip(probs).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub probabilities: IndexMap<String, f64>,
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; the first one wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Gradient of the head objective.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Mean cross-entropy plus `(l2/2)·‖weights‖²`, and its gradient.
pub fn head_loss_and_gradient(
    head: &HeadModel,
    embeddings: &[SentenceEmbedding],
    labels: &[usize],
    l2: f64,
) -> (f64, HeadGradient) {
    let d = head.embed_dim;
    let mut gw = vec![0.0; head.weights.len()];
    let mut gb = vec![0.0; head.bias.len()];
    let n = embeddings.len().max(1) as f64;
    let mut loss = 0.0;
    for (e, &y) in embeddings.iter().zip(labels) {
        let logits = head.logits(&e.0);
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        loss += log_sum - logits[y];
        for (c, l) in logits.iter().enumerate() {
            let residual = ((l - log_sum).exp() - if c == y { 1.0 } else { 0.0 }) / n;
            gb[c] += residual;
            for (g, x) in gw[c * d..(c + 1) * d].iter_mut().zip(&e.0) {
                *g += residual * x;
            }
        }
    }
    loss /= n;
    let sq: f64 = head.weights.iter().map(|w| w * w).sum();
    loss += 0.5 * l2 * sq;
    for (g, w) in gw.iter_mut().zip(&head.weights) {
        *g += l2 * w;
    }
    (
        loss,
        HeadGradient {
            weights: gw,
            bias: gb,
        },
    )
}

/// Result of [`train_head_traced`].
#[derive(Debug, Clone)]
pub struct HeadFit {
    pub model: HeadModel,
    /// Objective before each step, plus the final value.
    pub losses: Vec<f64>,
    pub learning_rate: f64,
    pub monotone: bool,
}

pub fn train_head(
    embeddings: &[SentenceEmbedding],
    labels: &[String],
    class_order: &[String],
    cfg: &HeadConfig,
) -> Result<HeadModel> {
    train_head_traced(embeddings, labels, class_order, cfg).map(|fit| fit.model)
}

/// Full-batch gradient descent from zero.
///
/// If the objective ever increases, training restarts with half the
/// learning rate, at most three times; the last attempt is kept either way
/// and `monotone` records whether it descended throughout.
pub fn train_head_traced(
    embeddings: &[SentenceEmbedding],
    labels: &[String],
    class_order: &[String],
    cfg: &HeadConfig,
) -> Result<HeadFit> {
    if embeddings.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    if cfg.epochs == 0
        || !cfg.learning_rate.is_finite()
        || cfg.learning_rate <= 0.0
        || !cfg.l2.is_finite()
        || cfg.l2 < 0.0
    {
        return Err(Error::Argument(
            "head epochs and learning rate must be positive".into(),
        ));
    }
    let label_idx = labels
        .iter()
        .map(|l| {
            class_order
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::Validation(format!("label {l:?} is not a known class")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut distinct = label_idx.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Validation(
            "head training needs at least two distinct labels".into(),
        ));
    }
    let embed_dim = embeddings[0].0.len();
    if embeddings.iter().any(|e| e.0.len() != embed_dim) {
        return Err(Error::Argument("embeddings differ in dimension".into()));
    }

    let mut lr = cfg.learning_rate;
    let mut attempt = 0;
    loop {
        let fit = descend(embeddings, &label_idx, class_order, embed_dim, cfg, lr)?;
        if fit.monotone || attempt == 3 {
            if !fit.monotone {
                log::warn!("head objective not monotone even at learning rate {lr}");
            }
            return Ok(fit);
        }
        attempt += 1;
        lr /= 2.0;
        log::debug!("head objective increased; retrying with learning rate {lr}");
    }
}

fn descend(
    embeddings: &[SentenceEmbedding],
    labels: &[usize],
    class_order: &[String],
    embed_dim: usize,
    cfg: &HeadConfig,
    lr: f64,
) -> Result<HeadFit> {
    let mut head = HeadModel::zeros(class_order.to_vec(), embed_dim);
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let (loss, grad) = head_loss_and_gradient(&head, embeddings, labels, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::Training {
                batch: epoch,
                message: "head objective is not finite".into(),
            });
        }
        losses.push(loss);
        for (w, g) in head.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * g;
        }
        for (b, g) in head.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * g;
        }
    }
    let (final_loss, _) = head_loss_and_gradient(&head, embeddings, labels, cfg.l2);
    if !final_loss.is_finite() {
        return Err(Error::Training {
            batch: cfg.epochs,
            message: "head objective is not finite".into(),
        });
    }
    losses.push(final_loss);
    let monotone = losses.windows(2).all(|w| w[1] <= w[0]);
    Ok(HeadFit {
        model: head,
        losses,
        learning_rate: lr,
        monotone,
    })
}

pub fn predict(enc: &EncoderModel, head: &HeadModel, text: &str) -> Result<Prediction> {
    if enc.embed_dim() != head.embed_dim() {
        return Err(Error::Compatibility(format!(
            "encoder produces {}-d embeddings, head expects {}",
            enc.embed_dim(),
            head.embed_dim()
        )));
    }
    head.predict_embedding(&enc.embed(text))
}
