//! Run configuration: an optional TOML file overridden by command-line flags.
//!
//! ```toml
//! seed = 7
//! train = "data/train.jsonl"
//!
//! [encoder]
//! embed_dim = 64
//!
//! [contrastive]
//! iterations = 5
//! learning_rate = 1e-5
//!
//! [provider]
//! kind = "mock"
//! ```

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use confit::tune::DEFAULT_DEV_FRACTION;
use confit::{GridSpec, PipelineConfig};
use indexmap::IndexMap;
use serde::Deserialize;

use crate::Failure;

pub const DEFAULT_PUBLIC_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Mock,
    Http,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    seed: Option<u64>,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
    out: Option<PathBuf>,
    #[serde(default)]
    encoder: EncoderSection,
    #[serde(default)]
    contrastive: ContrastiveSection,
    #[serde(default)]
    head: HeadSection,
    #[serde(default)]
    provider: ProviderSection,
    #[serde(default)]
    split: SplitSection,
    #[serde(default)]
    grid: GridSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncoderSection {
    hash_dim: Option<usize>,
    embed_dim: Option<usize>,
    max_seq_len: Option<usize>,
    lowercase: Option<bool>,
    char_ngram_min: Option<usize>,
    char_ngram_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContrastiveSection {
    iterations: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    lr_scale: Option<f64>,
    batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeadSection {
    epochs: Option<usize>,
    learning_rate: Option<f64>,
    l2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProviderSection {
    kind: Option<ProviderKind>,
    url: Option<String>,
    multiplier: Option<f64>,
    parallelism: Option<usize>,
    temperature: Option<f64>,
    prompt_template: Option<String>,
    #[serde(default)]
    targets: IndexMap<String, usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSection {
    public_fraction: Option<f64>,
    dev_fraction: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    iterations: Option<Vec<usize>>,
    learning_rates: Option<Vec<f64>>,
    epochs: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flags accepted by every subcommand.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags take precedence over its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice in the run.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Pair-sampling rounds per training example.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Contrastive learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Contrastive training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hash_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Paraphrase service base URL (falls back to CONFIT_PROVIDER_URL).
    #[arg(long)]
    pub provider_url: Option<String>,
    /// Raise every class to round(max class count * multiplier).
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// Explicit per-class target counts, e.g. `--target yes=200`.
    #[arg(long = "target", value_name = "CLASS=N", value_parser = parse_target)]
    pub targets: Vec<(String, usize)>,
    /// Maximum concurrent paraphrase requests.
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

fn parse_target(s: &str) -> Result<(String, usize), String> {
    let (class, n) = s
        .rsplit_once('=')
        .ok_or_else(|| format!("expected CLASS=N, got {s:?}"))?;
    let n = n.parse().map_err(|e| format!("bad count in {s:?}: {e}"))?;
    Ok((class.to_string(), n))
}

#[derive(Debug, Clone)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub url: Option<String>,
    pub multiplier: f64,
    pub targets: IndexMap<String, usize>,
    pub parallelism: usize,
    pub temperature: f64,
    pub prompt_template: String,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub provider: ProviderSettings,
    pub public_fraction: f64,
    pub dev_fraction: Option<f64>,
    pub grid: GridSpec,
}

impl RunConfig {
    pub fn resolve(common: &CommonArgs) -> Result<Self, Failure> {
        let file = match &common.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let seed = common.seed.or(file.seed).unwrap_or(0);

        let mut pipeline = PipelineConfig::default();
        let enc = &mut pipeline.encoder;
        set(&mut enc.hash_dim, file.encoder.hash_dim);
        set(&mut enc.embed_dim, file.encoder.embed_dim);
        set(&mut enc.tokenizer.max_seq_len, file.encoder.max_seq_len);
        set(&mut enc.tokenizer.lowercase, file.encoder.lowercase);
        set(
            &mut enc.tokenizer.char_ngram_min,
            file.encoder.char_ngram_min,
        );
        set(
            &mut enc.tokenizer.char_ngram_max,
            file.encoder.char_ngram_max,
        );
        enc.init_seed = seed;
        let c = &mut pipeline.contrastive;
        set(&mut c.iterations, file.contrastive.iterations);
        set(&mut c.epochs, file.contrastive.epochs);
        set(&mut c.learning_rate, file.contrastive.learning_rate);
        set(&mut c.lr_scale, file.contrastive.lr_scale);
        set(&mut c.batch_size, file.contrastive.batch_size);
        c.seed = seed;
        let h = &mut pipeline.head;
        set(&mut h.epochs, file.head.epochs);
        set(&mut h.learning_rate, file.head.learning_rate);
        set(&mut h.l2, file.head.l2);
        h.seed = seed;

        let p = file.provider;
        let provider = ProviderSettings {
            kind: p.kind.unwrap_or(ProviderKind::Mock),
            url: p.url,
            multiplier: p.multiplier.unwrap_or(1.0),
            targets: p.targets,
            parallelism: p.parallelism.unwrap_or(1),
            temperature: p
                .temperature
                .unwrap_or(confit::augment::DEFAULT_TEMPERATURE),
            prompt_template: p
                .prompt_template
                .unwrap_or_else(|| confit::augment::DEFAULT_PROMPT_TEMPLATE.to_string()),
        };

        let defaults = GridSpec::default();
        let grid = GridSpec {
            iterations: file.grid.iterations.unwrap_or(defaults.iterations),
            learning_rates: file.grid.learning_rates.unwrap_or(defaults.learning_rates),
            epochs: file.grid.epochs.unwrap_or(defaults.epochs),
        };

        Ok(Self {
            seed,
            train: file.train,
            test: file.test,
            out: file.out,
            pipeline,
            provider,
            public_fraction: file
                .split
                .public_fraction
                .unwrap_or(DEFAULT_PUBLIC_FRACTION),
            dev_fraction: file.split.dev_fraction,
            grid,
        })
    }

    pub fn apply_model(&mut self, m: &ModelArgs) {
        let p = &mut self.pipeline;
        set(&mut p.contrastive.iterations, m.iterations);
        set(&mut p.contrastive.learning_rate, m.lr);
        set(&mut p.contrastive.epochs, m.epochs);
        set(&mut p.contrastive.batch_size, m.batch_size);
        set(&mut p.encoder.embed_dim, m.embed_dim);
        set(&mut p.encoder.hash_dim, m.hash_dim);
    }

    pub fn apply_provider(&mut self, a: &ProviderArgs) {
        let p = &mut self.provider;
        set(&mut p.kind, a.provider);
        if a.provider_url.is_some() {
            p.url = a.provider_url.clone();
        }
        set(&mut p.multiplier, a.multiplier);
        set(&mut p.parallelism, a.parallelism);
        set(&mut p.temperature, a.temperature);
        if !a.targets.is_empty() {
            p.targets = a.targets.iter().cloned().collect();
        }
    }

    pub fn dev_fraction_or_default(&self) -> f64 {
        self.dev_fraction.unwrap_or(DEFAULT_DEV_FRACTION)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Returns the path or a usage failure naming the flag that should supply it.
pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, Failure> {
    path.as_deref()
        .ok_or_else(|| Failure::usage(format!("missing required argument --{flag}")))
}

/// Inputs must exist; no two paths of a run may point at the same file.
pub fn check_paths(inputs: &[(&str, &Path)], outputs: &[(&str, &Path)]) -> Result<(), Failure> {
    for (flag, path) in inputs {
        if !path.exists() {
            return Err(Failure::usage(format!(
                "--{flag}: {} does not exist",
                path.display()
            )));
        }
    }
    let all: Vec<(&str, PathBuf)> = inputs
        .iter()
        .chain(outputs)
        .map(|(flag, p)| (*flag, normalize(p)))
        .collect();
    for (i, (a, pa)) in all.iter().enumerate() {
        for (b, pb) in &all[i + 1..] {
            if pa == pb {
                return Err(Failure::usage(format!(
                    "--{a} and --{b} refer to the same path"
                )));
            }
        }
    }
    Ok(())
}

fn normalize(p: &Path) -> PathBuf {
    if let Ok(c) = p.canonicalize() {
        return c;
    }
    // Outputs may not exist yet: resolve the parent instead.
    match (p.parent(), p.file_name()) {
        (Some(dir), Some(name)) => {
            let dir = if dir.as_os_str().is_empty() {
                Path::new(".")
            } else {
                dir
            };
            dir.canonicalize()
                .map(|d| d.join(name))
                .unwrap_or_else(|_| p.to_path_buf())
        }
        _ => p.to_path_buf(),
    }
}
