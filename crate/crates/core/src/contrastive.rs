//! Contrastive fine-tuning of the encoder on labeled sentence pairs.
//!
//! Positive pairs share a label (target 1), negative pairs do not (target
//! 0). Both sides go through the same weight matrix and the loss is the
//! squared gap between their cosine similarity and the target, minimized
//! by mini-batch SGD with the exact gradient through the L2 normalization.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::encoder::{norm, EncoderModel, SparseVector};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Upper bound on `2·R·N`, the number of pairs a training run may hold.
pub const MAX_PAIRS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub a_idx: usize,
    pub b_idx: usize,
    /// 1 for same-class, 0 for different-class.
    pub target: u8,
}

impl SentencePair {
    pub fn is_positive(&self) -> bool {
        self.target == 1
    }
}

/// Stage-one hyper-parameters.
///
/// The SGD step is `learning_rate * lr_scale`. `learning_rate` keeps the
/// conventional transformer fine-tuning value (1e-5); `lr_scale` adapts it
/// to the linear hashed encoder, where the default product is 4.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub iterations: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_scale: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            iterations: 5,
            epochs: 1,
            learning_rate: 1e-5,
            lr_scale: 4e5,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl ContrastiveConfig {
    pub fn step_size(&self) -> f64 {
        self.learning_rate * self.lr_scale
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument(
                "iterations, epochs and batch size must be positive".into(),
            ));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.learning_rate) || !positive(self.lr_scale) || !positive(self.step_size())
        {
            return Err(Error::Argument(format!(
                "learning rate {} and scale {} must be positive and finite",
                self.learning_rate, self.lr_scale
            )));
        }
        Ok(())
    }
}

/// Mean pair loss per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrajectory {
    pub epoch_losses: Vec<f64>,
}

impl LossTrajectory {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,mean_loss")?;
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            writeln!(out, "{},{}", i + 1, loss)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Emits, for each of `rounds` rounds and each example in order, one
/// positive pair (partner uniform over the rest of its class) and one
/// negative pair (partner uniform over all other classes).
pub fn generate_pairs(d: &Dataset, rounds: usize, seed: u64) -> Result<Vec<SentencePair>> {
    let labels = d.label_indices();
    let num_classes = d.label_classes().len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let populated = members.iter().filter(|m| !m.is_empty()).count();
    if populated < 2 {
        return Err(Error::Validation(
            "pair generation needs at least two populated classes".into(),
        ));
    }
    if let Some(c) = members.iter().position(|m| m.len() == 1) {
        return Err(Error::Validation(format!(
            "class {:?} has a single example, so no positive partner exists",
            d.label_classes()[c]
        )));
    }
    let total = rounds
        .checked_mul(d.len())
        .and_then(|x| x.checked_mul(2))
        .filter(|&t| t <= MAX_PAIRS)
        .ok_or_else(|| {
            Error::Argument(format!(
                "{rounds} rounds over {} examples exceeds the pair budget of {MAX_PAIRS}",
                d.len()
            ))
        })?;

    // position of each example inside its class list
    let mut rank = vec![0usize; d.len()];
    for m in &members {
        for (r, &i) in m.iter().enumerate() {
            rank[i] = r;
        }
    }
    let others: Vec<Vec<usize>> = (0..num_classes)
        .map(|c| (0..d.len()).filter(|&i| labels[i] != c).collect())
        .collect();

    let mut rng = SplitMix64::new(seed);
    let mut pairs = Vec::with_capacity(total);
    for _ in 0..rounds {
        for i in 0..d.len() {
            let own = &members[labels[i]];
            let mut k = rng.below(own.len() - 1);
            if k >= rank[i] {
                k += 1;
            }
            pairs.push(SentencePair {
                a_idx: i,
                b_idx: own[k],
                target: 1,
            });
            let pool = &others[labels[i]];
            pairs.push(SentencePair {
                a_idx: i,
                b_idx: pool[rng.below(pool.len())],
                target: 0,
            });
        }
    }
    Ok(pairs)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Argument(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(u, v) / (nu * nv))
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn pair_loss(a: &[f64], b: &[f64], target: u8) -> Result<f64> {
    let c = cosine(a, b)?;
    Ok((f64::from(target) - c).powi(2))
}

/// Gradient with respect to the encoder weights, stored per touched row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGradient {
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl SparseGradient {
    fn add_scaled(&mut self, features: &SparseVector, direction: &[f64]) {
        for &(bucket, count) in &features.entries {
            let row = self
                .rows
                .entry(bucket)
                .or_insert_with(|| vec![0.0; direction.len()]);
            for (r, d) in row.iter_mut().zip(direction) {
                *r += count * d;
            }
        }
    }

    /// Entry for weight `(bucket, k)`; zero for untouched rows.
    pub fn get(&self, bucket: usize, k: usize) -> f64 {
        self.rows.get(&bucket).map_or(0.0, |r| r[k])
    }

    pub fn is_finite(&self) -> bool {
        self.rows.values().flatten().all(|g| g.is_finite())
    }
}

/// Mean pair loss over `pairs` and its gradient with respect to `W`.
///
/// `features[i]` are the hashed counts of example `i`. Pairs are reduced
/// sequentially in slice order.
pub fn batch_loss_and_gradient(
    model: &EncoderModel,
    features: &[SparseVector],
    pairs: &[SentencePair],
) -> (f64, SparseGradient) {
    let mut grad = SparseGradient::default();
    if pairs.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for pair in pairs {
        let (xa, xb) = (&features[pair.a_idx], &features[pair.b_idx]);
        let (za, zb) = (model.project(xa), model.project(xb));
        let (na, nb) = (norm(&za), norm(&zb));
        let target = f64::from(pair.target);
        if na == 0.0 || nb == 0.0 {
            // cosine is pinned to 0; no gradient flows
            total += target * target;
            continue;
        }
        let u: Vec<f64> = za.iter().map(|v| v / na).collect();
        let w: Vec<f64> = zb.iter().map(|v| v / nb).collect();
        let c = dot(&u, &w);
        total += (target - c).powi(2);

        let dl_dc = -2.0 * (target - c) * scale;
        let ga: Vec<f64> = u
            .iter()
            .zip(&w)
            .map(|(ui, wi)| dl_dc * (wi - c * ui) / na)
            .collect();
        let gb: Vec<f64> = u
            .iter()
            .zip(&w)
            .map(|(ui, wi)| dl_dc * (ui - c * wi) / nb)
            .collect();
        grad.add_scaled(xa, &ga);
        grad.add_scaled(xb, &gb);
    }
    (total * scale, grad)
}

/// Mean pair loss only.
pub fn batch_loss(model: &EncoderModel, features: &[SparseVector], pairs: &[SentencePair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let embeddings: Vec<Vec<f64>> = features.iter().map(|x| model.project(x)).collect();
    let total: f64 = pairs
        .iter()
        .map(|p| {
            pair_loss(&embeddings[p.a_idx], &embeddings[p.b_idx], p.target)
                .expect("embeddings share a dimension")
        })
        .sum();
    total / pairs.len() as f64
}

/// Fine-tunes `model` on pairs drawn from `d`.
///
/// Pairs are generated once from `cfg.seed`; every epoch visits them in a
/// fresh seeded order in mini-batches of `cfg.batch_size` (the last batch
/// may be short). Each batch's loss is recorded before its update.
pub fn train_contrastive(
    mut model: EncoderModel,
    d: &Dataset,
    cfg: &ContrastiveConfig,
) -> Result<(EncoderModel, LossTrajectory)> {
    cfg.validate()?;
    let pairs = generate_pairs(d, cfg.iterations, cfg.seed)?;
    let features: Vec<SparseVector> = d
        .examples()
        .iter()
        .map(|ex| model.featurize(&ex.text))
        .collect();
    let step = cfg.step_size();
    let embed_dim = model.embed_dim();

    let mut order_rng = SplitMix64::new(cfg.seed ^ 0x6a09_e667_f3bc_c908);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut trajectory = LossTrajectory::default();
    let mut batch_pairs = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch_pairs.clear();
            batch_pairs.extend(chunk.iter().map(|&i| pairs[i]));
            let (loss, grad) = batch_loss_and_gradient(&model, &features, &batch_pairs);
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Training {
                    batch: b,
                    message: format!("non-finite loss or gradient in epoch {}", epoch + 1),
                });
            }
            loss_sum += loss * chunk.len() as f64;
            let weights = model.weights_mut();
            for (bucket, g) in &grad.rows {
                let row = &mut weights[bucket * embed_dim..(bucket + 1) * embed_dim];
                for (w, gk) in row.iter_mut().zip(g) {
                    *w -= step * gk;
                }
            }
        }
        let mean = loss_sum / pairs.len() as f64;
        log::info!("contrastive epoch {}: mean loss {mean:.6}", epoch + 1);
        trajectory.epoch_losses.push(mean);
    }
    Ok((model, trajectory))
}

/// Mean cosine over same-class and over cross-class example pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilaritySummary {
    pub within_class: f64,
    pub cross_class: f64,
}

impl SimilaritySummary {
    pub fn margin(&self) -> f64 {
        self.within_class - self.cross_class
    }
}

pub fn similarity_summary(model: &EncoderModel, d: &Dataset) -> SimilaritySummary {
    let embeddings: Vec<_> = d
        .examples()
        .iter()
        .map(|ex| model.embed(&ex.text))
        .collect();
    let labels = d.label_indices();
    let (mut within, mut nw, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let c = dot(&embeddings[i].0, &embeddings[j].0);
            if labels[i] == labels[j] {
                within += c;
                nw += 1;
            } else {
                cross += c;
                nc += 1;
            }
        }
    }
    SimilaritySummary {
        within_class: if nw > 0 { within / nw as f64 } else { 0.0 },
        cross_class: if nc > 0 { cross / nc as f64 } else { 0.0 },
    }
}
