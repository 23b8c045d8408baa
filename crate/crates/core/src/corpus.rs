//! Labeled datasets, class statistics and the two seeded splits: the
//! stratified development holdout and the public/private leaderboard split.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{round_half_up, SplitMix64};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            label: label.into(),
        }
    }
}

/// An ordered, validated collection of labeled examples.
///
/// Construction checks that ids are unique and that every label is one of
/// `label_classes`; the value is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    label_classes: Vec<String>,
    task_name: String,
}

impl Dataset {
    pub fn new(
        task_name: impl Into<String>,
        label_classes: Vec<String>,
        examples: Vec<LabeledExample>,
    ) -> Result<Self> {
        if label_classes.is_empty() {
            return Err(Error::Validation("label class set is empty".into()));
        }
        let mut seen_classes = HashSet::new();
        for c in &label_classes {
            if !seen_classes.insert(c.as_str()) {
                return Err(Error::Validation(format!("label class {c:?} listed twice")));
            }
        }
        let mut ids = HashSet::with_capacity(examples.len());
        for ex in &examples {
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::DuplicateId(ex.id.clone()));
            }
            if !seen_classes.contains(ex.label.as_str()) {
                return Err(Error::Validation(format!(
                    "example {:?} has label {:?} outside the label classes {:?}",
                    ex.id, ex.label, label_classes
                )));
            }
        }
        Ok(Self {
            examples,
            label_classes,
            task_name: task_name.into(),
        })
    }

    /// Builds a dataset whose label classes are the distinct labels, sorted.
    pub fn with_inferred_classes(
        task_name: impl Into<String>,
        examples: Vec<LabeledExample>,
    ) -> Result<Self> {
        let classes = infer_classes(&examples);
        if classes.is_empty() {
            return Err(Error::Validation(
                "cannot infer label classes from an empty dataset".into(),
            ));
        }
        Self::new(task_name, classes, examples)
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn label_classes(&self) -> &[String] {
        &self.label_classes
    }

    pub fn task_name(&self) -> &str {
        &self.task_name
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.label_classes.iter().position(|c| c == label)
    }

    /// Label index of every example, in example order.
    pub fn label_indices(&self) -> Vec<usize> {
        self.examples
            .iter()
            .map(|ex| self.class_index(&ex.label).expect("validated label"))
            .collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.examples.iter().map(|ex| ex.text.as_str()).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.examples.iter().map(|ex| ex.id.as_str()).collect()
    }

    /// The same examples relabeled into a different (compatible) class set.
    pub fn with_label_classes(&self, label_classes: Vec<String>) -> Result<Self> {
        Self::new(self.task_name.clone(), label_classes, self.examples.clone())
    }

    /// Keeps the examples whose positions satisfy `keep`, in order.
    fn filter_positions(&self, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            examples: self
                .examples
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, ex)| ex.clone())
                .collect(),
            label_classes: self.label_classes.clone(),
            task_name: self.task_name.clone(),
        }
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(File::create(path)?);
        for ex in &self.examples {
            serde_json::to_writer(&mut out, ex)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

fn infer_classes(examples: &[LabeledExample]) -> Vec<String> {
    let mut classes: Vec<String> = examples.iter().map(|ex| ex.label.clone()).collect();
    classes.sort();
    classes.dedup();
    classes
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

/// An id/text pair with an optional label, as read from an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
    pub label: Option<String>,
    pub line: usize,
}

/// Reads id/text(/label) records from JSON-lines, or from CSV when the file
/// extension is `.csv` (header `id,text,label`). Blank JSONL lines are skipped.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<TextRecord>> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv_records(path)
    } else {
        read_jsonl_records(path)
    }
}

fn read_jsonl_records(path: &Path) -> Result<Vec<TextRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message: e.to_string(),
        })?;
        records.push(TextRecord {
            id: raw.id,
            text: raw.text,
            label: raw.label,
            line: lineno,
        });
    }
    Ok(records)
}

fn read_csv_records(path: &Path) -> Result<Vec<TextRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<RawRecord>().enumerate() {
        // header is line 1
        let lineno = i + 2;
        let raw = row.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: lineno,
            message: e.to_string(),
        })?;
        records.push(TextRecord {
            id: raw.id,
            text: raw.text,
            label: raw.label.filter(|l| !l.is_empty()),
            line: lineno,
        });
    }
    Ok(records)
}

/// Loads a labeled dataset. Label classes are taken from `label_classes`
/// when given, otherwise inferred from the data and sorted lexicographically.
pub fn load_dataset(path: impl AsRef<Path>, label_classes: Option<&[String]>) -> Result<Dataset> {
    let path = path.as_ref();
    let records = read_records(path)?;
    let mut examples = Vec::with_capacity(records.len());
    for rec in records {
        let Some(label) = rec.label else {
            return Err(Error::Validation(format!(
                "{}:{}: record {:?} has no label",
                path.display(),
                rec.line,
                rec.id
            )));
        };
        examples.push(LabeledExample {
            id: rec.id,
            text: rec.text,
            label,
        });
    }
    let task_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match label_classes {
        Some(classes) => Dataset::new(task_name, classes.to_vec(), examples),
        None => Dataset::with_inferred_classes(task_name, examples),
    }
}

/// Per-class example counts, in label-class order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub counts: IndexMap<String, usize>,
}

impl ClassDistribution {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, class: &str) -> usize {
        self.counts.get(class).copied().unwrap_or(0)
    }
}

pub fn class_distribution(d: &Dataset) -> ClassDistribution {
    let mut counts: IndexMap<String, usize> =
        d.label_classes().iter().map(|c| (c.clone(), 0)).collect();
    for ex in d.examples() {
        *counts.get_mut(&ex.label).expect("validated label") += 1;
    }
    ClassDistribution { counts }
}

/// Two disjoint parts of a dataset.
///
/// For [`stratified_split`], `part_a` is the retained training data and
/// `part_b` the holdout; for [`leaderboard_split`], `part_a` is the public
/// portion and `part_b` the private one.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub part_a: Dataset,
    pub part_b: Dataset,
    pub seed: u64,
    pub fraction: f64,
    pub warnings: Vec<String>,
}

fn check_fraction(name: &str, fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "{name} must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    Ok(())
}

/// Holds out `round_half_up(n_c * fraction)` examples of every class `c`,
/// chosen by a seeded shuffle within the class. Both parts keep the
/// original example order.
pub fn stratified_split(d: &Dataset, fraction: f64, seed: u64) -> Result<SplitResult> {
    check_fraction("fraction", fraction)?;
    let labels = d.label_indices();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.label_classes().len()];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::Validation(format!(
            "class {:?} has no examples to split",
            d.label_classes()[c]
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let mut holdout = vec![false; d.len()];
    for members in &mut by_class {
        let k = round_half_up(members.len() as f64 * fraction).min(members.len());
        rng.shuffle(members);
        for &i in &members[..k] {
            holdout[i] = true;
        }
    }

    Ok(SplitResult {
        part_a: d.filter_positions(|i| !holdout[i]),
        part_b: d.filter_positions(|i| holdout[i]),
        seed,
        fraction,
        warnings: Vec::new(),
    })
}

/// Splits a test set into a public portion of `round_half_up(N * public_fraction)`
/// examples and a private remainder. Not stratified: gold labels of a test
/// set are unknown when the split is drawn.
pub fn leaderboard_split(test: &Dataset, public_fraction: f64, seed: u64) -> Result<SplitResult> {
    check_fraction("public fraction", public_fraction)?;
    if test.is_empty() {
        return Err(Error::Validation("cannot split an empty test set".into()));
    }
    let n = test.len();
    let k = round_half_up(n as f64 * public_fraction).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let mut public = vec![false; n];
    for &i in &order[..k] {
        public[i] = true;
    }

    let mut warnings = Vec::new();
    if k == n {
        warnings.push("private partition is empty".to_string());
    }
    if k == 0 {
        warnings.push("public partition is empty".to_string());
    }
    for w in &warnings {
        log::warn!("leaderboard split: {w}");
    }

    Ok(SplitResult {
        part_a: test.filter_positions(|i| public[i]),
        part_b: test.filter_positions(|i| !public[i]),
        seed,
        fraction: public_fraction,
        warnings,
    })
}

/// Order-independent fingerprint of a dataset's id set.
pub fn id_fingerprint(d: &Dataset) -> u64 {
    let mut ids = d.ids();
    ids.sort_unstable();
    let mut h = crate::rng::Fnv1a64::default();
    for id in ids {
        h.write(id.as_bytes());
        h.write(&[0xff]);
    }
    h.finish()
}
