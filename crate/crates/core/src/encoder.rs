//! Hashed n-gram sentence encoder.
//!
//! Text is split on whitespace (optionally lowercased, truncated to
//! `max_seq_len` tokens). Each token contributes its own bytes as a word
//! feature plus every character n-gram of `‹token›` with sizes
//! `char_ngram_min..=char_ngram_max`. A feature lands in bucket
//! `fnv1a64(feature bytes) mod hash_dim`. The sentence vector is
//! `Wᵀ · counts`, L2-normalized; text with no features maps to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fnv1a64, SplitMix64};

pub const DEFAULT_HASH_DIM: usize = 32_768;
pub const DEFAULT_EMBED_DIM: usize = 64;

const BOUNDARY_START: char = '‹';
const BOUNDARY_END: char = '›';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub max_seq_len: usize,
    pub lowercase: bool,
    pub char_ngram_min: usize,
    pub char_ngram_max: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            max_seq_len: 512,
            lowercase: true,
            char_ngram_min: 3,
            char_ngram_max: 5,
        }
    }
}

impl TokenizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_seq_len == 0 {
            return Err(Error::Argument("max_seq_len must be at least 1".into()));
        }
        if self.char_ngram_min == 0 || self.char_ngram_min > self.char_ngram_max {
            return Err(Error::Argument(format!(
                "invalid character n-gram range {}..={}",
                self.char_ngram_min, self.char_ngram_max
            )));
        }
        Ok(())
    }
}

pub fn tokenize(cfg: &TokenizerConfig, text: &str) -> Vec<String> {
    text.split_whitespace()
        .take(cfg.max_seq_len)
        .map(|t| {
            if cfg.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// Sparse count vector: `(bucket, count)` pairs sorted by bucket, no repeats.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    pub entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, c)| c).sum()
    }

    fn from_buckets(mut buckets: Vec<usize>) -> Self {
        buckets.sort_unstable();
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for b in buckets {
            match entries.last_mut() {
                Some((last, count)) if *last == b => *count += 1.0,
                _ => entries.push((b, 1.0)),
            }
        }
        Self { entries }
    }
}

pub fn featurize(cfg: &TokenizerConfig, hash_dim: usize, text: &str) -> SparseVector {
    assert!(hash_dim >= 2, "hash_dim must be at least 2");
    let modulus = hash_dim as u64;
    let mut buckets = Vec::new();
    let mut buf = String::new();
    for token in tokenize(cfg, text) {
        buckets.push((fnv1a64(token.as_bytes()) % modulus) as usize);

        let chars: Vec<char> = std::iter::once(BOUNDARY_START)
            .chain(token.chars())
            .chain(std::iter::once(BOUNDARY_END))
            .collect();
        for n in cfg.char_ngram_min..=cfg.char_ngram_max {
            if n > chars.len() {
                break;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                buckets.push((fnv1a64(buf.as_bytes()) % modulus) as usize);
            }
        }
    }
    SparseVector::from_buckets(buckets)
}

/// A sentence vector; unit-norm, or all zeros for feature-less text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding(pub Vec<f64>);

impl SentenceEmbedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub tokenizer: TokenizerConfig,
    hash_dim: usize,
    embed_dim: usize,
    init_seed: u64,
    /// Row-major `hash_dim × embed_dim`.
    weights: Vec<f64>,
}

impl EncoderModel {
    /// Reassembles a model from its parts, checking shapes and finiteness.
    pub fn from_parts(
        tokenizer: TokenizerConfig,
        hash_dim: usize,
        embed_dim: usize,
        init_seed: u64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        validate_dims(&tokenizer, hash_dim, embed_dim)?;
        if weights.len() != hash_dim * embed_dim {
            return Err(Error::Compatibility(format!(
                "weight buffer holds {} values, expected {hash_dim}×{embed_dim}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Validation(
                "encoder weights contain non-finite values".into(),
            ));
        }
        Ok(Self {
            tokenizer,
            hash_dim,
            embed_dim,
            init_seed,
            weights,
        })
    }

    pub fn hash_dim(&self) -> usize {
        self.hash_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn row(&self, bucket: usize) -> &[f64] {
        &self.weights[bucket * self.embed_dim..(bucket + 1) * self.embed_dim]
    }

    pub fn featurize(&self, text: &str) -> SparseVector {
        featurize(&self.tokenizer, self.hash_dim, text)
    }

    /// Unnormalized projection `Wᵀ · x`.
    pub fn project(&self, features: &SparseVector) -> Vec<f64> {
        let mut z = vec![0.0; self.embed_dim];
        for &(bucket, count) in &features.entries {
            for (zk, wk) in z.iter_mut().zip(self.row(bucket)) {
                *zk += count * wk;
            }
        }
        z
    }

    pub fn embed_features(&self, features: &SparseVector) -> SentenceEmbedding {
        let mut z = self.project(features);
        let n = norm(&z);
        if n > 0.0 {
            z.iter_mut().for_each(|v| *v /= n);
        } else {
            z.iter_mut().for_each(|v| *v = 0.0);
        }
        SentenceEmbedding(z)
    }

    pub fn embed(&self, text: &str) -> SentenceEmbedding {
        self.embed_features(&self.featurize(text))
    }
}

fn validate_dims(tokenizer: &TokenizerConfig, hash_dim: usize, embed_dim: usize) -> Result<()> {
    tokenizer.validate()?;
    if hash_dim < 2 || !hash_dim.is_power_of_two() {
        return Err(Error::Argument(format!(
            "hash_dim must be a power of two ≥ 2, got {hash_dim}"
        )));
    }
    if embed_dim < 2 {
        return Err(Error::Argument(format!(
            "embed_dim must be ≥ 2, got {embed_dim}"
        )));
    }
    Ok(())
}

/// Fills `W` i.i.d. uniform in `[-1/√embed_dim, 1/√embed_dim]` from a
/// SplitMix64 stream seeded with `seed`, row-major.
pub fn init_encoder(
    tokenizer: TokenizerConfig,
    hash_dim: usize,
    embed_dim: usize,
    seed: u64,
) -> Result<EncoderModel> {
    validate_dims(&tokenizer, hash_dim, embed_dim)?;
    let bound = 1.0 / (embed_dim as f64).sqrt();
    let mut rng = SplitMix64::new(seed);
    let weights = (0..hash_dim * embed_dim)
        .map(|_| bound * (2.0 * rng.next_f64() - 1.0))
        .collect();
    Ok(EncoderModel {
        tokenizer,
        hash_dim,
        embed_dim,
        init_seed: seed,
        weights,
    })
}
