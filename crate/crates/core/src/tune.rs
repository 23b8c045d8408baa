//! Hyper-parameter grid search on a development holdout, and the
//! three-condition augmentation ablation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrastive::{ContrastiveConfig, LossTrajectory};
use crate::corpus::{id_fingerprint, stratified_split, Dataset, SplitResult};
use crate::error::{Error, Result};
use crate::eval::{confusion, leaderboard_eval, metrics, LeaderboardReport};
use crate::pipeline::{train_pipeline, PipelineConfig};

pub const DEFAULT_DEV_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub iterations: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            iterations: vec![5, 10],
            learning_rates: vec![1e-5],
            epochs: vec![1],
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.iterations.is_empty() || self.learning_rates.is_empty() || self.epochs.is_empty() {
            return Err(Error::Argument(
                "every grid axis needs at least one value".into(),
            ));
        }
        if self.iterations.contains(&0)
            || self.epochs.contains(&0)
            || self
                .learning_rates
                .iter()
                .any(|lr| !(lr.is_finite() && *lr > 0.0))
        {
            return Err(Error::Argument("grid values must be positive".into()));
        }
        Ok(())
    }

    /// Cells in row-major order: iterations, then learning rate, then epochs.
    pub fn cells(&self) -> Vec<(usize, f64, usize)> {
        let mut out = Vec::new();
        for &r in &self.iterations {
            for &lr in &self.learning_rates {
                for &e in &self.epochs {
                    out.push((r, lr, e));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// Position in the grid enumeration.
    pub index: usize,
    pub config: ContrastiveConfig,
    pub dev_macro_f1: f64,
    pub trajectory: LossTrajectory,
    pub dev_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub index: usize,
    pub config: ContrastiveConfig,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub results: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub dev_fingerprint: u64,
    pub dev_size: usize,
}

impl SweepReport {
    pub fn best(&self) -> Option<&TrialResult> {
        select_best(&self.results).map(|i| &self.results[i])
    }

    /// CSV with columns `iterations,learning_rate,epochs,dev_macro_f1,status`,
    /// one row per grid cell in enumeration order.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "iterations",
            "learning_rate",
            "epochs",
            "dev_macro_f1",
            "status",
        ])?;
        let mut rows: Vec<(usize, &ContrastiveConfig, String, String)> = self
            .results
            .iter()
            .map(|t| {
                (
                    t.index,
                    &t.config,
                    t.dev_macro_f1.to_string(),
                    "ok".to_string(),
                )
            })
            .chain(self.failures.iter().map(|f| {
                (
                    f.index,
                    &f.config,
                    String::new(),
                    format!("failed: {}", f.error),
                )
            }))
            .collect();
        rows.sort_by_key(|r| r.0);
        for (_, cfg, score, status) in rows {
            w.write_record([
                cfg.iterations.to_string(),
                cfg.learning_rate.to_string(),
                cfg.epochs.to_string(),
                score,
                status,
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Index of the highest `dev_macro_f1`; the earliest trial wins ties.
pub fn select_best(results: &[TrialResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, t) in results.iter().enumerate() {
        match best {
            Some(b) if results[b].dev_macro_f1 >= t.dev_macro_f1 => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Macro F1 of a freshly trained pipeline on `dev`.
fn dev_score(
    train: &Dataset,
    dev: &Dataset,
    cfg: &PipelineConfig,
) -> Result<(f64, LossTrajectory)> {
    let outcome = train_pipeline(train, cfg)?;
    let golds: Vec<&str> = dev.examples().iter().map(|e| e.label.as_str()).collect();
    let preds: Vec<String> = dev
        .examples()
        .iter()
        .map(|e| outcome.classifier.predict(&e.text).label)
        .collect();
    let cm = confusion(&golds, &preds, dev.label_classes())?;
    Ok((metrics(&cm).macro_f1, outcome.trajectory))
}

/// Trains one pipeline per grid cell on the same stratified training part
/// and scores it on the shared development holdout.
///
/// Trials run in parallel; a failing trial is recorded and the sweep goes on.
pub fn grid_search(
    train: &Dataset,
    grid: &GridSpec,
    base: &PipelineConfig,
    dev_fraction: f64,
    seed: u64,
) -> Result<SweepReport> {
    grid.validate()?;
    let split = stratified_split(train, dev_fraction, seed)?;
    let fingerprint = id_fingerprint(&split.part_b);
    let cells = grid.cells();

    let outcomes: Vec<_> = cells
        .par_iter()
        .enumerate()
        .map(|(index, &(iterations, learning_rate, epochs))| {
            let mut cfg = *base;
            cfg.contrastive.iterations = iterations;
            cfg.contrastive.learning_rate = learning_rate;
            cfg.contrastive.epochs = epochs;
            let scored = dev_score(&split.part_a, &split.part_b, &cfg);
            (index, cfg.contrastive, scored)
        })
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (index, config, scored) in outcomes {
        match scored {
            Ok((dev_macro_f1, trajectory)) => {
                log::info!(
                    "trial {index}: R={} lr={} epochs={} dev macro F1 {dev_macro_f1:.4}",
                    config.iterations,
                    config.learning_rate,
                    config.epochs
                );
                results.push(TrialResult {
                    index,
                    config,
                    dev_macro_f1,
                    trajectory,
                    dev_fingerprint: fingerprint,
                });
            }
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                failures.push(TrialFailure {
                    index,
                    config,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(SweepReport {
        results,
        failures,
        dev_fingerprint: fingerprint,
        dev_size: split.part_b.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationCondition {
    /// Original training data minus the development holdout.
    NoAugmentation,
    /// All of the original training data.
    NoAugmentationFullTrain,
    /// The augmented training set.
    Augmented,
}

impl AblationCondition {
    pub const ALL: [AblationCondition; 3] = [
        AblationCondition::NoAugmentation,
        AblationCondition::NoAugmentationFullTrain,
        AblationCondition::Augmented,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationCondition::NoAugmentation => "no_augmentation",
            AblationCondition::NoAugmentationFullTrain => "no_augmentation_full_train",
            AblationCondition::Augmented => "augmented",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: AblationCondition,
    pub train_size: usize,
    pub report: Option<LeaderboardReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// CSV with columns `condition,public_macro_f1,private_macro_f1`;
    /// failed rows leave the scores empty.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["condition", "public_macro_f1", "private_macro_f1"])?;
        for row in &self.rows {
            let (public, private) = match &row.report {
                Some(r) => (
                    r.public_macro_f1.to_string(),
                    r.private_macro_f1.to_string(),
                ),
                None => (String::new(), String::new()),
            };
            w.write_record([row.condition.name().to_string(), public, private])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Trains the full pipeline under each [`AblationCondition`] and scores it
/// on the public and private parts of `split`.
pub fn ablation_run(
    base_train: &Dataset,
    augmented_train: &Dataset,
    test: &Dataset,
    split: &SplitResult,
    cfg: &PipelineConfig,
    dev_fraction: f64,
    seed: u64,
) -> Result<AblationTable> {
    let classes = base_train.label_classes();
    if augmented_train.label_classes() != classes || test.label_classes() != classes {
        return Err(Error::Validation(
            "training, augmented and test sets must share label classes".into(),
        ));
    }
    let held_out = stratified_split(base_train, dev_fraction, seed)?.part_a;

    let rows = AblationCondition::ALL
        .iter()
        .map(|&condition| {
            let train = match condition {
                AblationCondition::NoAugmentation => &held_out,
                AblationCondition::NoAugmentationFullTrain => base_train,
                AblationCondition::Augmented => augmented_train,
            };
            let scored = train_pipeline(train, cfg).and_then(|outcome| {
                let preds = outcome.classifier.predict_labels(test);
                leaderboard_eval(test, &preds, split)
            });
            match scored {
                Ok(report) => AblationRow {
                    condition,
                    train_size: train.len(),
                    report: Some(report),
                    error: None,
                },
                Err(e) => {
                    log::warn!("ablation condition {} failed: {e}", condition.name());
                    AblationRow {
                        condition,
                        train_size: train.len(),
                        report: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    Ok(AblationTable { rows })
}
