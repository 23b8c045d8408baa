//! Seeded synthetic corpora for tests, benchmarks and demos.
//!
//! Each text mixes a few class-indicative words with shared noise words.
//! Optionally a text also borrows an indicative word from another class,
//! which makes the classes overlap.

use std::collections::HashSet;

use crate::corpus::{Dataset, LabeledExample};
use crate::rng::SplitMix64;

const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "la", "me", "ni", "po", "ru", "sa", "te", "vi", "zo", "ca", "de",
    "fi", "go", "lu", "ma", "ne", "pi", "ro", "su", "ta", "ve", "za", "bri", "sto", "gna",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// `(class name, number of examples)` in label-class order.
    pub classes: Vec<(String, usize)>,
    pub class_vocab: usize,
    pub noise_vocab: usize,
    /// Indicative words per text.
    pub signal_words: usize,
    /// Inclusive range of noise words per text.
    pub noise_words: (usize, usize),
    /// Probability that a text also carries one indicative word of another class.
    pub confusion: f64,
    /// Seed for the vocabulary; texts are drawn from [`generate`]'s seed.
    pub vocab_seed: u64,
}

impl SyntheticSpec {
    pub fn two_class(a: usize, b: usize) -> Self {
        Self {
            classes: vec![("alfa".into(), a), ("beta".into(), b)],
            class_vocab: 8,
            noise_vocab: 60,
            signal_words: 1,
            noise_words: (6, 10),
            confusion: 0.0,
            vocab_seed: 7,
        }
    }

    fn vocabularies(&self) -> (Vec<Vec<String>>, Vec<String>) {
        let mut rng = SplitMix64::new(self.vocab_seed);
        let mut seen = HashSet::new();
        let mut word = |rng: &mut SplitMix64| loop {
            let len = 2 + rng.below(3);
            let w: String = (0..len)
                .map(|_| SYLLABLES[rng.below(SYLLABLES.len())])
                .collect();
            if seen.insert(w.clone()) {
                return w;
            }
        };
        let classes = self
            .classes
            .iter()
            .map(|_| (0..self.class_vocab).map(|_| word(&mut rng)).collect())
            .collect();
        let noise = (0..self.noise_vocab).map(|_| word(&mut rng)).collect();
        (classes, noise)
    }
}

/// Draws a dataset from `spec`; ids are `{prefix}{n}`.
pub fn generate(spec: &SyntheticSpec, prefix: &str, seed: u64) -> Dataset {
    let (class_vocab, noise) = spec.vocabularies();
    let mut rng = SplitMix64::new(seed);
    let mut examples = Vec::new();
    for (c, (name, count)) in spec.classes.iter().enumerate() {
        for _ in 0..*count {
            let (lo, hi) = spec.noise_words;
            let n_noise = lo + rng.below(hi - lo + 1);
            let mut words: Vec<&str> = (0..n_noise)
                .map(|_| noise[rng.below(noise.len())].as_str())
                .collect();
            for _ in 0..spec.signal_words {
                words.push(&class_vocab[c][rng.below(class_vocab[c].len())]);
            }
            if spec.classes.len() > 1 && rng.next_f64() < spec.confusion {
                let mut other = rng.below(spec.classes.len() - 1);
                if other >= c {
                    other += 1;
                }
                words.push(&class_vocab[other][rng.below(class_vocab[other].len())]);
            }
            rng.shuffle(&mut words);
            examples.push(LabeledExample::new(
                format!("{prefix}{}", examples.len()),
                words.join(" "),
                name.clone(),
            ));
        }
    }
    let classes = spec.classes.iter().map(|(n, _)| n.clone()).collect();
    Dataset::new("synthetic", classes, examples).expect("generated ids are unique")
}
