use std::hint::black_box;

use confit::contrastive::ContrastiveConfig;
use confit::synthetic::{generate, SyntheticSpec};
use confit::*;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

const TEXT: &str = "il governo nasconde la verità sul vaccino e i media non ne parlano mai";

fn encoder(c: &mut Criterion) {
    let enc = init_encoder(TokenizerConfig::default(), 32_768, 64, 0).unwrap();
    c.bench_function("featurize", |b| b.iter(|| enc.featurize(black_box(TEXT))));
    c.bench_function("embed", |b| b.iter(|| enc.embed(black_box(TEXT))));
}

fn training(c: &mut Criterion) {
    let d = generate(&SyntheticSpec::two_class(100, 100), "b-", 1);
    let enc = init_encoder(TokenizerConfig::default(), 32_768, 64, 0).unwrap();
    let cfg = ContrastiveConfig::default();
    let mut g = c.benchmark_group("training");
    g.sample_size(10);
    g.bench_function("contrastive_epoch_200x5", |b| {
        b.iter_batched(
            || enc.clone(),
            |e| train_contrastive(e, &d, &cfg).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.bench_function("pipeline_200", |b| {
        b.iter(|| train_pipeline(&d, &PipelineConfig::default()).unwrap())
    });
    g.finish();
}

fn scoring(c: &mut Criterion) {
    let mut rng = confit::rng::SplitMix64::new(3);
    let classes: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
    let golds: Vec<&str> = (0..10_000)
        .map(|_| classes[rng.below(4)].as_str())
        .collect();
    let preds: Vec<&str> = (0..10_000)
        .map(|_| classes[rng.below(4)].as_str())
        .collect();
    c.bench_function("metrics_10k", |b| {
        b.iter(|| metrics(&confusion(black_box(&golds), black_box(&preds), &classes).unwrap()))
    });
}

criterion_group!(benches, encoder, training, scoring);
criterion_main!(benches);
