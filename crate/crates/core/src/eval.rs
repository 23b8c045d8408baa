//! Confusion matrices, macro F1 and public/private leaderboard scoring.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, SplitResult};
use crate::error::{Error, Result};

/// Counts indexed by `(gold, predicted)` in `class_order`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_order: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn confusion<G, P>(golds: &[G], preds: &[P], class_order: &[String]) -> Result<ConfusionMatrix>
where
    G: AsRef<str>,
    P: AsRef<str>,
{
    if golds.len() != preds.len() {
        return Err(Error::Argument(format!(
            "{} gold labels but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    let index: HashMap<&str, usize> = class_order
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let lookup = |label: &str| {
        index
            .get(label)
            .copied()
            .ok_or_else(|| Error::Validation(format!("unknown label {label:?}")))
    };
    let k = class_order.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (g, p) in golds.iter().zip(preds) {
        counts[lookup(g.as_ref())?][lookup(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix {
        class_order: class_order.to_vec(),
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: IndexMap<String, ClassScores>,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 with the 0/0 → 0 convention, macro F1 as
/// the plain mean over every class in the matrix (present in gold or not).
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let k = cm.class_order.len();
    let mut per_class = IndexMap::with_capacity(k);
    let mut diag = 0;
    for c in 0..k {
        let tp = cm.counts[c][c];
        diag += tp;
        let gold: usize = cm.counts[c].iter().sum();
        let predicted: usize = (0..k).map(|g| cm.counts[g][c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class.insert(
            cm.class_order[c].clone(),
            ClassScores {
                precision,
                recall,
                f1,
                support: gold,
            },
        );
    }
    let macro_f1 = if k == 0 {
        0.0
    } else {
        per_class.values().map(|s| s.f1).sum::<f64>() / k as f64
    };
    MetricsReport {
        per_class,
        macro_f1,
        accuracy: ratio(diag, cm.total()),
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:>9} {:>9} {:>9} {:>8}",
            "class", "precision", "recall", "f1", "support"
        )?;
        for (class, s) in &self.per_class {
            writeln!(
                f,
                "{:<24} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                class, s.precision, s.recall, s.f1, s.support
            )?;
        }
        writeln!(f, "macro F1  {:.4}", self.macro_f1)?;
        write!(f, "accuracy  {:.4}", self.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardReport {
    pub public_macro_f1: f64,
    pub private_macro_f1: f64,
    pub public_size: usize,
    pub private_size: usize,
    pub public: MetricsReport,
    pub private: MetricsReport,
}

impl fmt::Display for LeaderboardReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "public leaderboard   macro F1 {:.4}  ({} examples)",
            self.public_macro_f1, self.public_size
        )?;
        write!(
            f,
            "private leaderboard  macro F1 {:.4}  ({} examples)",
            self.private_macro_f1, self.private_size
        )
    }
}

/// Scores `preds` separately on the public and private parts of `split`.
pub fn leaderboard_eval(
    golds: &Dataset,
    preds: &HashMap<String, String>,
    split: &SplitResult,
) -> Result<LeaderboardReport> {
    for ex in golds.examples() {
        if !preds.contains_key(&ex.id) {
            return Err(Error::Validation(format!(
                "no prediction for id {:?}",
                ex.id
            )));
        }
    }
    let all: HashSet<&str> = golds.ids().into_iter().collect();
    let public: HashSet<&str> = split.part_a.ids().into_iter().collect();
    let private: HashSet<&str> = split.part_b.ids().into_iter().collect();
    let covered = public.len() + private.len() == all.len()
        && public.is_disjoint(&private)
        && public.iter().chain(&private).all(|id| all.contains(id));
    if !covered {
        return Err(Error::Validation(
            "leaderboard split does not partition the test set".into(),
        ));
    }

    let score = |part: &Dataset| -> Result<MetricsReport> {
        let gold: Vec<&str> = part.examples().iter().map(|e| e.label.as_str()).collect();
        let pred: Vec<&str> = part
            .examples()
            .iter()
            .map(|e| preds[&e.id].as_str())
            .collect();
        Ok(metrics(&confusion(&gold, &pred, golds.label_classes())?))
    };
    let public = score(&split.part_a)?;
    let private = score(&split.part_b)?;
    Ok(LeaderboardReport {
        public_macro_f1: public.macro_f1,
        private_macro_f1: private.macro_f1,
        public_size: split.part_a.len(),
        private_size: split.part_b.len(),
        public,
        private,
    })
}

#[derive(Serialize, Deserialize)]
struct PredictionRecord<'a> {
    id: std::borrow::Cow<'a, str>,
    label: std::borrow::Cow<'a, str>,
}

/// Reads a JSON-lines predictions file (`{"id": .., "label": ..}` per line).
pub fn read_predictions(path: impl AsRef<Path>) -> Result<IndexMap<String, String>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = IndexMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if out
            .insert(rec.id.to_string(), rec.label.into_owned())
            .is_some()
        {
            return Err(Error::DuplicateId(rec.id.into_owned()));
        }
    }
    Ok(out)
}

pub fn write_predictions<'a>(
    path: impl AsRef<Path>,
    preds: impl IntoIterator<Item = (&'a str, &'a str)>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    for (id, label) in preds {
        let rec = PredictionRecord {
            id: id.into(),
            label: label.into(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
