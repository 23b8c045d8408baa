use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use confit::augment::{augment_dataset_with, plan_to_targets, AugmentOptions};
use confit::eval::{read_predictions, write_predictions};
use confit::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{check_paths, require, ProviderKind, ProviderSettings, RunConfig};
use crate::{
    AblateArgs, AugmentArgs, EvalArgs, Failure, GridArgs, PredictArgs, SplitArgs, StatsArgs,
    TrainArgs,
};

type CmdResult = Result<(), Failure>;

fn override_path(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag.clone();
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn print_distribution(d: &Dataset) {
    let dist = class_distribution(d);
    let total = dist.total().max(1) as f64;
    println!("{:<24} {:>8} {:>8}", "class", "count", "share");
    for (class, &n) in &dist.counts {
        println!("{class:<24} {n:>8} {:>7.1}%", 100.0 * n as f64 / total);
    }
    println!("{:<24} {:>8}", "total", dist.total());
}

fn make_provider(s: &ProviderSettings) -> Result<Box<dyn ParaphraseProvider>, Failure> {
    Ok(match s.kind {
        ProviderKind::Mock => Box::new(MockProvider),
        ProviderKind::Http => Box::new(
            HttpProvider::from_env(s.url.as_deref())
                .map_err(|e| Failure::usage(format!("provider: {e}")))?,
        ),
    })
}

fn augment_with(d: &Dataset, s: &ProviderSettings, seed: u64) -> Result<Dataset, Failure> {
    let dist = class_distribution(d);
    let plan = if s.targets.is_empty() {
        plan_balanced(&dist, s.multiplier)
    } else {
        plan_to_targets(&dist, &s.targets)
    }
    .map_err(Failure::stage("augment"))?;
    log::info!("adding {} paraphrases", plan.total());
    let provider = make_provider(s)?;
    let opts = AugmentOptions {
        temperature: s.temperature,
        prompt_template: s.prompt_template.clone(),
        parallelism: s.parallelism,
    };
    augment_dataset_with(d, &plan, provider.as_ref(), seed, &opts)
        .map_err(Failure::stage("augment"))
}

fn score(clf: &Classifier, d: &Dataset) -> Result<MetricsReport, Failure> {
    let preds = clf.predict_labels(d);
    let golds: Vec<&str> = d.examples().iter().map(|e| e.label.as_str()).collect();
    let predicted: Vec<&str> = d.examples().iter().map(|e| preds[&e.id].as_str()).collect();
    let cm = confusion(&golds, &predicted, d.label_classes()).map_err(Failure::stage("eval"))?;
    Ok(metrics(&cm))
}

pub fn stats(a: StatsArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    override_path(&mut run.train, &a.train);
    let train = require(&run.train, "train")?;
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        outputs.push(("out", out.as_path()));
    }
    check_paths(&[("train", train)], &outputs)?;
    let d = load_dataset(train, None).map_err(Failure::stage("load"))?;
    print_distribution(&d);
    if let Some(out) = &a.out {
        let dist = class_distribution(&d);
        write_json(
            out,
            &json!({ "total": dist.total(), "counts": dist.counts }),
        )?;
    }
    Ok(())
}

pub fn split(a: SplitArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    override_path(&mut run.train, &a.train);
    override_path(&mut run.out, &a.out);
    let train = require(&run.train, "train")?;
    let out = require(&run.out, "out")?;
    check_paths(&[("train", train)], &[])?;
    let d = load_dataset(train, None).map_err(Failure::stage("load"))?;

    let (result, names) = if a.leaderboard {
        let fraction = a.public_fraction.unwrap_or(run.public_fraction);
        (
            leaderboard_split(&d, fraction, run.seed),
            ["public", "private"],
        )
    } else {
        let fraction = a.dev_fraction.unwrap_or(run.dev_fraction_or_default());
        (stratified_split(&d, fraction, run.seed), ["train", "dev"])
    };
    let s = result.map_err(Failure::stage("split"))?;
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(out)?;
    for (name, part) in names.iter().zip([&s.part_a, &s.part_b]) {
        let path = out.join(format!("{name}.jsonl"));
        part.write_jsonl(&path).map_err(Failure::stage("write"))?;
        println!("{name}: {} examples -> {}", part.len(), path.display());
    }
    Ok(())
}

pub fn augment(a: AugmentArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    run.apply_provider(&a.provider);
    override_path(&mut run.train, &a.train);
    override_path(&mut run.out, &a.out);
    let train = require(&run.train, "train")?;
    let out = require(&run.out, "out")?;
    check_paths(&[("train", train)], &[("out", out)])?;
    let d = load_dataset(train, None).map_err(Failure::stage("load"))?;
    let augmented = augment_with(&d, &run.provider, run.seed)?;
    augmented
        .write_jsonl(out)
        .map_err(Failure::stage("write"))?;
    print_distribution(&augmented);
    Ok(())
}

#[derive(Serialize)]
struct PairCounts {
    total: usize,
    positive: usize,
    negative: usize,
}

#[derive(Serialize)]
struct TrainReport<'a> {
    seed: u64,
    classes: &'a [String],
    train_examples: usize,
    augmented_examples: usize,
    dev_examples: usize,
    pairs: PairCounts,
    epoch_losses: &'a [f64],
    dev_macro_f1: Option<f64>,
    config: &'a PipelineConfig,
}

pub fn train(a: TrainArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    run.apply_model(&a.model);
    run.apply_provider(&a.provider);
    override_path(&mut run.train, &a.train);
    override_path(&mut run.out, &a.out);
    let train = require(&run.train, "train")?;
    let out = require(&run.out, "out")?;
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".report.json");
        PathBuf::from(name)
    });
    let mut outputs = vec![("out", out), ("report", report_path.as_path())];
    if let Some(t) = &a.trajectory {
        outputs.push(("trajectory", t.as_path()));
    }
    check_paths(&[("train", train)], &outputs)?;

    let data = load_dataset(train, None).map_err(Failure::stage("load"))?;
    let (fit_set, dev) = match a.dev_fraction.or(run.dev_fraction) {
        Some(f) => {
            let s = stratified_split(&data, f, run.seed).map_err(Failure::stage("split"))?;
            (s.part_a, Some(s.part_b))
        }
        None => (data, None),
    };
    let original = fit_set.len();
    let fit_set = if a.augment {
        augment_with(&fit_set, &run.provider, run.seed)?
    } else {
        fit_set
    };

    let outcome = train_pipeline(&fit_set, &run.pipeline).map_err(Failure::stage("train"))?;
    let dev_macro_f1 = match &dev {
        Some(d) => Some(score(&outcome.classifier, d)?.macro_f1),
        None => None,
    };
    save_classifier(out, &outcome.classifier).map_err(Failure::stage("save"))?;
    if let Some(t) = &a.trajectory {
        outcome
            .trajectory
            .write_csv(t)
            .map_err(Failure::stage("save"))?;
    }

    let half = outcome.pair_count / 2;
    let report = TrainReport {
        seed: run.seed,
        classes: fit_set.label_classes(),
        train_examples: fit_set.len(),
        augmented_examples: fit_set.len() - original,
        dev_examples: dev.as_ref().map_or(0, Dataset::len),
        pairs: PairCounts {
            total: outcome.pair_count,
            positive: half,
            negative: half,
        },
        epoch_losses: &outcome.trajectory.epoch_losses,
        dev_macro_f1,
        config: &run.pipeline,
    };
    write_json(&report_path, &report)?;

    println!(
        "trained on {} examples ({} pairs)",
        fit_set.len(),
        outcome.pair_count
    );
    for (i, loss) in outcome.trajectory.epoch_losses.iter().enumerate() {
        println!("epoch {}: mean loss {loss:.6}", i + 1);
    }
    if let Some(f1) = dev_macro_f1 {
        println!("dev macro F1 {f1:.4}");
    }
    println!("model -> {}", out.display());
    Ok(())
}

pub fn predict(a: PredictArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    override_path(&mut run.test, &a.test);
    let test = require(&run.test, "test")?;
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        outputs.push(("out", out.as_path()));
    }
    check_paths(&[("model", &a.model), ("test", test)], &outputs)?;
    let clf = load_classifier(&a.model).map_err(Failure::stage("load model"))?;
    let records = confit::corpus::read_records(test).map_err(Failure::stage("load test"))?;
    let labels: Vec<String> = records.iter().map(|r| clf.predict(&r.text).label).collect();
    let pairs = records
        .iter()
        .zip(&labels)
        .map(|(r, l)| (r.id.as_str(), l.as_str()));
    match &a.out {
        Some(out) => {
            write_predictions(out, pairs).map_err(Failure::stage("write"))?;
            println!("{} predictions -> {}", records.len(), out.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for (id, label) in pairs {
                writeln!(stdout, "{}", json!({ "id": id, "label": label }))?;
            }
        }
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    override_path(&mut run.test, &a.test);
    let test_path = require(&run.test, "test")?;
    let fraction = a.public_fraction.unwrap_or(run.public_fraction);
    let mut inputs = vec![("test", test_path)];
    if let Some(m) = &a.model {
        inputs.push(("model", m.as_path()));
    }
    if let Some(p) = &a.predictions {
        inputs.push(("predictions", p.as_path()));
    }
    let mut outputs = Vec::new();
    if let Some(out) = &a.out {
        outputs.push(("out", out.as_path()));
    }
    check_paths(&inputs, &outputs)?;

    let (test, preds): (Dataset, HashMap<String, String>) = match (&a.model, &a.predictions) {
        (Some(model), _) => {
            let clf = load_classifier(model).map_err(Failure::stage("load model"))?;
            let test = load_dataset(test_path, Some(clf.head.class_order()))
                .map_err(Failure::stage("load test"))?;
            let preds = clf.predict_labels(&test);
            (test, preds)
        }
        (None, Some(p)) => {
            let test = load_dataset(test_path, None).map_err(Failure::stage("load test"))?;
            let preds = read_predictions(p).map_err(Failure::stage("load predictions"))?;
            (test, preds.into_iter().collect())
        }
        (None, None) => {
            return Err(Failure::usage(
                "missing required argument --model or --predictions",
            ))
        }
    };
    let split = leaderboard_split(&test, fraction, run.seed).map_err(Failure::stage("split"))?;
    for w in &split.warnings {
        eprintln!("warning: {w}");
    }
    let report = leaderboard_eval(&test, &preds, &split).map_err(Failure::stage("eval"))?;
    println!("{report}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn gridsearch(a: GridArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    run.apply_model(&a.model);
    override_path(&mut run.train, &a.train);
    override_path(&mut run.out, &a.out);
    if let Some(v) = &a.grid_iterations {
        run.grid.iterations = v.clone();
    }
    if let Some(v) = &a.grid_lr {
        run.grid.learning_rates = v.clone();
    }
    if let Some(v) = &a.grid_epochs {
        run.grid.epochs = v.clone();
    }
    let train = require(&run.train, "train")?;
    let mut outputs = Vec::new();
    if let Some(out) = &run.out {
        outputs.push(("out", out.as_path()));
    }
    check_paths(&[("train", train)], &outputs)?;

    let data = load_dataset(train, None).map_err(Failure::stage("load"))?;
    let dev_fraction = a.dev_fraction.unwrap_or(run.dev_fraction_or_default());
    let report = grid_search(&data, &run.grid, &run.pipeline, dev_fraction, run.seed)
        .map_err(Failure::stage("gridsearch"))?;

    match &run.out {
        Some(out) => report.save_csv(out).map_err(Failure::stage("write"))?,
        None => report
            .write_csv(std::io::stdout().lock())
            .map_err(Failure::stage("write"))?,
    }
    for f in &report.failures {
        eprintln!("trial {} failed: {}", f.index, f.error);
    }
    match report.best() {
        Some(best) => {
            let c = &best.config;
            println!(
                "best: iterations={} lr={:e} epochs={} dev macro F1 {:.4} ({} dev examples)",
                c.iterations, c.learning_rate, c.epochs, best.dev_macro_f1, report.dev_size
            );
            Ok(())
        }
        None => Err(Failure::runtime("gridsearch: every trial failed")),
    }
}

pub fn ablate(a: AblateArgs) -> CmdResult {
    let mut run = RunConfig::resolve(&a.common)?;
    run.apply_model(&a.model);
    run.apply_provider(&a.provider);
    override_path(&mut run.train, &a.train);
    override_path(&mut run.test, &a.test);
    override_path(&mut run.out, &a.out);
    let train = require(&run.train, "train")?;
    let test_path = require(&run.test, "test")?;
    let mut inputs = vec![("train", train), ("test", test_path)];
    if let Some(p) = &a.augmented {
        inputs.push(("augmented", p.as_path()));
    }
    let mut outputs = Vec::new();
    if let Some(out) = &run.out {
        outputs.push(("out", out.as_path()));
    }
    check_paths(&inputs, &outputs)?;

    let base = load_dataset(train, None).map_err(Failure::stage("load"))?;
    let classes = base.label_classes();
    let test = load_dataset(test_path, Some(classes)).map_err(Failure::stage("load test"))?;
    let augmented = match &a.augmented {
        Some(p) => load_dataset(p, Some(classes)).map_err(Failure::stage("load augmented"))?,
        None => augment_with(&base, &run.provider, run.seed)?,
    };
    let fraction = a.public_fraction.unwrap_or(run.public_fraction);
    let split = leaderboard_split(&test, fraction, run.seed).map_err(Failure::stage("split"))?;
    let dev_fraction = a.dev_fraction.unwrap_or(run.dev_fraction_or_default());
    let table = ablation_run(
        &base,
        &augmented,
        &test,
        &split,
        &run.pipeline,
        dev_fraction,
        run.seed,
    )
    .map_err(Failure::stage("ablate"))?;

    println!(
        "{:<28} {:>6} {:>10} {:>10}",
        "condition", "train", "public", "private"
    );
    for row in &table.rows {
        match (&row.report, &row.error) {
            (Some(r), _) => println!(
                "{:<28} {:>6} {:>10.4} {:>10.4}",
                row.condition.name(),
                row.train_size,
                r.public_macro_f1,
                r.private_macro_f1
            ),
            (None, e) => println!(
                "{:<28} {:>6} failed: {}",
                row.condition.name(),
                row.train_size,
                e.as_deref().unwrap_or("unknown error")
            ),
        }
    }
    if let Some(out) = &run.out {
        table.save_csv(out).map_err(Failure::stage("write"))?;
    }
    Ok(())
}
