//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! fails. Runs without the libtest harness so the lines are never captured.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use confit::contrastive::{batch_loss, batch_loss_and_gradient, SentencePair};
use confit::corpus::id_fingerprint;
use confit::encoder::SparseVector;
use confit::head::{head_loss_and_gradient, HeadModel};
use confit::rng::SplitMix64;
use confit::synthetic::{generate, SyntheticSpec};
use confit::tune::select_best;
use confit::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn report(id: &str, name: &str, outcome: Outcome) -> bool {
    match outcome {
        Ok(detail) => {
            println!("PASS  {id} {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  {id} {name}: {detail}");
            false
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

const WORDS: &[&str] = &[
    "vaccino",
    "terra",
    "piatta",
    "luna",
    "governo",
    "segreto",
    "covid",
    "russia",
    "verita",
    "media",
    "complotto",
    "elite",
    "virus",
    "rete",
    "fake",
];

fn random_text(rng: &mut SplitMix64) -> String {
    let n = 1 + rng.below(6);
    (0..n)
        .map(|_| WORDS[rng.below(WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Relative error with both sides compared against the larger magnitude.
/// Coordinates where both values are below `floor` are skipped (untouched
/// rows are exactly zero on both sides).
fn rel_err(a: f64, n: f64, floor: f64) -> Option<f64> {
    let scale = a.abs().max(n.abs());
    (scale > floor).then(|| (a - n).abs() / scale)
}

const FD_STEP: f64 = 1e-5;

// AC1
fn contrastive_gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut rng = SplitMix64::new(2024);
    let instances = 25;
    for inst in 0..instances {
        let model = init_encoder(TokenizerConfig::default(), 64, 4, 1000 + inst).unwrap();
        let texts: Vec<String> = (0..6).map(|_| random_text(&mut rng)).collect();
        let labels: Vec<usize> = (0..6).map(|_| rng.below(2)).collect();
        let features: Vec<SparseVector> = texts.iter().map(|t| model.featurize(t)).collect();
        let pairs: Vec<SentencePair> = (0..5)
            .map(|_| {
                let a = rng.below(6);
                let b = (a + 1 + rng.below(5)) % 6;
                SentencePair {
                    a_idx: a,
                    b_idx: b,
                    target: u8::from(labels[a] == labels[b]),
                }
            })
            .collect();
        let (_, grad) = batch_loss_and_gradient(&model, &features, &pairs);
        let mut probe = model.clone();
        for bucket in 0..64 {
            for k in 0..4 {
                let i = bucket * 4 + k;
                let w0 = probe.weights()[i];
                set_weight(&mut probe, i, w0 + FD_STEP);
                let up = batch_loss(&probe, &features, &pairs);
                set_weight(&mut probe, i, w0 - FD_STEP);
                let down = batch_loss(&probe, &features, &pairs);
                set_weight(&mut probe, i, w0);
                let numeric = (up - down) / (2.0 * FD_STEP);
                if let Some(e) = rel_err(grad.get(bucket, k), numeric, 1e-7) {
                    worst = worst.max(e);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    check(worst < 1e-4, || {
        format!("max relative error {worst:.3e} ≥ 1e-4")
    })?;
    check(elapsed < Duration::from_secs(10), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{instances} instances, max rel err {worst:.2e}, {elapsed:.2?}"
    ))
}

fn set_weight(model: &mut EncoderModel, i: usize, v: f64) {
    let mut w = model.weights().to_vec();
    w[i] = v;
    *model = EncoderModel::from_parts(
        model.tokenizer,
        model.hash_dim(),
        model.embed_dim(),
        model.init_seed(),
        w,
    )
    .unwrap();
}

// AC2
fn head_gradient_oracle() -> Outcome {
    let mut rng = SplitMix64::new(77);
    let mut worst: f64 = 0.0;
    let instances = 25;
    for _ in 0..instances {
        let dim = 3 + rng.below(4);
        let classes = 2 + rng.below(3);
        let n = 5 + rng.below(10);
        let embeddings: Vec<SentenceEmbedding> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.next_f64() * 2.0 - 1.0).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                SentenceEmbedding(v.iter().map(|x| x / norm).collect())
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(classes)).collect();
        let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let weights: Vec<f64> = (0..classes * dim).map(|_| rng.next_f64() - 0.5).collect();
        let bias: Vec<f64> = (0..classes).map(|_| rng.next_f64() - 0.5).collect();
        let head = HeadModel::from_parts(names, dim, weights, bias).unwrap();
        let l2 = 1e-4;
        let (_, grad) = head_loss_and_gradient(&head, &embeddings, &labels, l2);
        let loss_at = |h: &HeadModel| head_loss_and_gradient(h, &embeddings, &labels, l2).0;

        for i in 0..head.weights().len() {
            let mut up = head.clone();
            up.weights_mut()[i] += FD_STEP;
            let mut down = head.clone();
            down.weights_mut()[i] -= FD_STEP;
            let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * FD_STEP);
            if let Some(e) = rel_err(grad.weights[i], numeric, 1e-7) {
                worst = worst.max(e);
            }
        }
        for i in 0..head.bias().len() {
            let mut up = head.clone();
            up.bias_mut()[i] += FD_STEP;
            let mut down = head.clone();
            down.bias_mut()[i] -= FD_STEP;
            let numeric = (loss_at(&up) - loss_at(&down)) / (2.0 * FD_STEP);
            if let Some(e) = rel_err(grad.bias[i], numeric, 1e-7) {
                worst = worst.max(e);
            }
        }
    }
    check(worst < 1e-6, || {
        format!("max relative error {worst:.3e} ≥ 1e-6")
    })?;
    Ok(format!("{instances} instances, max rel err {worst:.2e}"))
}

/// Per-class scores counted directly from the label lists.
fn brute_force_macro_f1(golds: &[usize], preds: &[usize], k: usize) -> (Vec<(f64, f64, f64)>, f64) {
    let mut per = Vec::new();
    for c in 0..k {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (g, p) in golds.iter().zip(preds) {
            match (*g == c, *p == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                _ => {}
            }
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        };
        per.push((p, r, f));
    }
    let macro_f1 = per.iter().map(|x| x.2).sum::<f64>() / k as f64;
    (per, macro_f1)
}

// AC3
fn metric_oracle() -> Outcome {
    let mut rng = SplitMix64::new(31337);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = 2 + rng.below(5);
        let n = rng.below(201);
        let names: Vec<String> = (0..k).map(|c| format!("class{c}")).collect();
        let golds: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let g: Vec<&str> = golds.iter().map(|&c| names[c].as_str()).collect();
        let p: Vec<&str> = preds.iter().map(|&c| names[c].as_str()).collect();
        let report = metrics(&confusion(&g, &p, &names).unwrap());
        let (per, macro_f1) = brute_force_macro_f1(&golds, &preds, k);
        worst = worst.max((report.macro_f1 - macro_f1).abs());
        for (c, (bp, br, bf)) in per.iter().enumerate() {
            let s = report.per_class[&names[c]];
            worst = worst
                .max((s.precision - bp).abs())
                .max((s.recall - br).abs())
                .max((s.f1 - bf).abs());
        }
    }
    check(worst <= 1e-12, || format!("max disagreement {worst:e}"))?;

    let classes = vec!["neg".to_string(), "pos".to_string()];
    let golds = ["pos", "pos", "neg", "neg"];
    let all_pos = metrics(&confusion(&golds, &["pos"; 4], &classes).unwrap());
    check(all_pos.macro_f1 == 1.0 / 3.0, || {
        format!("all-positive balanced binary gave {}", all_pos.macro_f1)
    })?;
    Ok(format!(
        "1000 instances, max disagreement {worst:e}; all-positive case = 1/3"
    ))
}

// AC4
fn pair_combinatorics() -> Outcome {
    let mut rng = SplitMix64::new(4);
    for case in 0..100 {
        let classes = 2 + rng.below(4);
        let mut examples = Vec::new();
        for c in 0..classes {
            for _ in 0..2 + rng.below(8) {
                examples.push(LabeledExample::new(
                    examples.len().to_string(),
                    "t",
                    format!("c{c}"),
                ));
            }
        }
        let d = Dataset::with_inferred_classes("t", examples).unwrap();
        let rounds = 1 + rng.below(6);
        let seed = rng.next_u64();
        let pairs = generate_pairs(&d, rounds, seed).unwrap();
        let n = d.len();
        let labels = d.label_indices();
        check(pairs.len() == 2 * rounds * n, || {
            format!("case {case}: {} pairs", pairs.len())
        })?;
        let positives: Vec<_> = pairs.iter().filter(|p| p.target == 1).collect();
        check(positives.len() == rounds * n, || {
            format!("case {case}: {} positives", positives.len())
        })?;
        for p in &pairs {
            check(p.a_idx != p.b_idx, || format!("case {case}: self pair"))?;
            let same = labels[p.a_idx] == labels[p.b_idx];
            check(same == (p.target == 1), || {
                format!("case {case}: mislabeled pair {p:?}")
            })?;
        }
        check(generate_pairs(&d, rounds, seed).unwrap() == pairs, || {
            format!("case {case}: not reproducible")
        })?;
    }
    Ok("100 datasets: counts, labels and reproducibility hold".into())
}

fn macro_f1_on(clf: &Classifier, test: &Dataset) -> MetricsReport {
    let golds: Vec<&str> = test.examples().iter().map(|e| e.label.as_str()).collect();
    let preds: Vec<String> = test
        .examples()
        .iter()
        .map(|e| clf.predict(&e.text).label)
        .collect();
    metrics(&confusion(&golds, &preds, test.label_classes()).unwrap())
}

// AC5
fn separable_end_to_end() -> Outcome {
    let start = Instant::now();
    let train = generate(&SyntheticSpec::two_class(100, 100), "train-", 1);
    let test = generate(&SyntheticSpec::two_class(50, 50), "test-", 2);
    let cfg = PipelineConfig::default();
    check(
        cfg.encoder.embed_dim == 64
            && cfg.contrastive.iterations == 5
            && cfg.contrastive.epochs == 1,
        || "defaults drifted".into(),
    )?;
    let outcome = train_pipeline(&train, &cfg).unwrap();
    let report = macro_f1_on(&outcome.classifier, &test);
    let elapsed = start.elapsed();
    check(report.macro_f1 >= 0.95, || {
        format!("test macro F1 {:.4} < 0.95", report.macro_f1)
    })?;
    check(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "test macro F1 {:.4} in {elapsed:.2?}",
        report.macro_f1
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

// AC6
fn augmentation_effect() -> Outcome {
    let mut plain_f1 = Vec::new();
    let mut aug_f1 = Vec::new();
    let mut improved = 0;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let train = generate(&SyntheticSpec::two_class(180, 20), "train-", 10 + seed);
        let test = generate(&SyntheticSpec::two_class(50, 50), "test-", 100 + seed);
        let mut cfg = PipelineConfig::default();
        cfg.encoder.init_seed = seed;
        cfg.contrastive.seed = seed;

        let plain = macro_f1_on(&train_pipeline(&train, &cfg).unwrap().classifier, &test);
        let plan = plan_balanced(&class_distribution(&train), 1.0).unwrap();
        let augmented = augment_dataset(&train, &plan, &MockProvider, seed).unwrap();
        let aug = macro_f1_on(&train_pipeline(&augmented, &cfg).unwrap().classifier, &test);

        let (r0, r1) = (plain.per_class["beta"].recall, aug.per_class["beta"].recall);
        if r1 > r0 {
            improved += 1;
        }
        detail.push(format!("{:.2}→{:.2}", r0, r1));
        plain_f1.push(plain.macro_f1);
        aug_f1.push(aug.macro_f1);
    }
    let (mp, ma) = (median(plain_f1), median(aug_f1));
    check(ma >= mp, || {
        format!("median macro F1 {ma:.4} with augmentation < {mp:.4} without")
    })?;
    check(improved >= 3, || {
        format!("minority recall improved in only {improved}/5 seeds")
    })?;
    Ok(format!(
        "median macro F1 {mp:.4} → {ma:.4}; minority recall {} ({improved}/5 improved)",
        detail.join(", ")
    ))
}

// AC7
fn leaderboard_protocol() -> Outcome {
    for (n, public, private) in [(460, 138, 322), (300, 90, 210)] {
        let mut rng = SplitMix64::new(n as u64);
        let examples = (0..n)
            .map(|i| {
                LabeledExample::new(
                    format!("t{i}"),
                    "x",
                    if rng.below(2) == 0 { "A" } else { "B" },
                )
            })
            .collect();
        let test = Dataset::with_inferred_classes("t", examples).unwrap();
        let split = leaderboard_split(&test, 0.3, 9).unwrap();
        check(
            (split.part_a.len(), split.part_b.len()) == (public, private),
            || format!("N={n}: sizes {}/{}", split.part_a.len(), split.part_b.len()),
        )?;
        let a: HashSet<&str> = split.part_a.ids().into_iter().collect();
        let b: HashSet<&str> = split.part_b.ids().into_iter().collect();
        check(a.is_disjoint(&b) && a.len() + b.len() == n, || {
            format!("N={n}: not a partition")
        })?;
        let again = leaderboard_split(&test, 0.3, 9).unwrap();
        check(again.part_a.ids() == split.part_a.ids(), || {
            format!("N={n}: not reproducible")
        })?;

        let preds: HashMap<String, String> = test
            .examples()
            .iter()
            .map(|e| (e.id.clone(), e.label.clone()))
            .collect();
        let r = leaderboard_eval(&test, &preds, &split).unwrap();
        check(
            r.public_macro_f1 == 1.0 && r.private_macro_f1 == 1.0,
            || {
                format!(
                    "N={n}: perfect predictions scored {}/{}",
                    r.public_macro_f1, r.private_macro_f1
                )
            },
        )?;
    }
    Ok("460 → 138/322, 300 → 90/210; disjoint, reproducible, perfect = 1.0/1.0".into())
}

// AC8
fn artifact_roundtrip() -> Outcome {
    let train = generate(&SyntheticSpec::two_class(30, 30), "train-", 5);
    let clf = train_pipeline(&train, &PipelineConfig::default())
        .unwrap()
        .classifier;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.confit");
    save_classifier(&path, &clf).unwrap();
    let loaded = load_classifier(&path).unwrap();
    let mut rng = SplitMix64::new(8);
    for i in 0..100 {
        let text = if i == 0 {
            String::new()
        } else {
            random_text(&mut rng)
        };
        let (p, q) = (clf.predict(&text), loaded.predict(&text));
        let bits = |p: &Prediction| {
            p.probabilities
                .values()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        };
        check(bits(&p) == bits(&q) && p.label == q.label, || {
            format!("text {text:?} differs")
        })?;
    }
    Ok("100 texts reproduce bit-exact probabilities".into())
}

// AC9
fn sweep_integrity() -> Outcome {
    let train = generate(&SyntheticSpec::two_class(40, 40), "train-", 3);
    let base = PipelineConfig::default();
    let grid = GridSpec {
        iterations: vec![1, 5],
        learning_rates: vec![1e-5],
        epochs: vec![1],
    };
    let report = grid_search(&train, &grid, &base, 0.2, 11).unwrap();
    check(
        report.results.len() == 2 && report.failures.is_empty(),
        || {
            format!(
                "{} results, {} failures",
                report.results.len(),
                report.failures.len()
            )
        },
    )?;
    let expected = id_fingerprint(&stratified_split(&train, 0.2, 11).unwrap().part_b);
    check(
        report.results.iter().all(|t| t.dev_fingerprint == expected),
        || "trials saw different dev splits".into(),
    )?;
    let best = report.best().unwrap();
    check(
        report
            .results
            .iter()
            .all(|t| best.dev_macro_f1 >= t.dev_macro_f1),
        || "best is not maximal".into(),
    )?;

    let tied = GridSpec {
        iterations: vec![5, 5],
        ..grid
    };
    let tied_report = grid_search(&train, &tied, &base, 0.2, 11).unwrap();
    let scores: Vec<f64> = tied_report.results.iter().map(|t| t.dev_macro_f1).collect();
    check(scores[0] == scores[1], || {
        format!("identical cells scored {scores:?}")
    })?;
    check(
        select_best(&tied_report.results) == Some(0) && tied_report.best().unwrap().index == 0,
        || "tie not broken toward the first cell".into(),
    )?;
    Ok(format!(
        "2 trials on one dev split (fingerprint {expected:016x}); best R={}; tie → first cell",
        best.config.iterations
    ))
}

fn main() -> std::process::ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "AC1",
            "contrastive gradient vs finite differences",
            contrastive_gradient_oracle,
        ),
        (
            "AC2",
            "head gradient vs finite differences",
            head_gradient_oracle,
        ),
        ("AC3", "metrics vs brute-force counting", metric_oracle),
        ("AC4", "pair combinatorics", pair_combinatorics),
        ("AC5", "separable corpus end to end", separable_end_to_end),
        (
            "AC6",
            "augmentation effect on imbalanced corpus",
            augmentation_effect,
        ),
        ("AC7", "leaderboard protocol", leaderboard_protocol),
        ("AC8", "artifact round trip", artifact_roundtrip),
        ("AC9", "sweep integrity", sweep_integrity),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        if !report(id, name, outcome) {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("all {} criteria passed", criteria.len());
        std::process::ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        std::process::ExitCode::FAILURE
    }
}
