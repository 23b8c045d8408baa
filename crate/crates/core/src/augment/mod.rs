//! Paraphrase-based training-set augmentation.
//!
//! A plan says how many paraphrases each class needs; [`augment_dataset`]
//! fills it by cycling through each class's examples in a seeded order and
//! asking a [`ParaphraseProvider`] for one reformulation per visit.

mod http;

pub use http::{HttpProvider, RetryPolicy, TOKEN_ENV, URL_ENV};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassDistribution, Dataset, LabeledExample};
use crate::error::{Error, ProviderError, Result};
use crate::rng::{mix64, round_half_up, Fnv1a64, SplitMix64};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "riformulare questo testo: {text}";
pub const DEFAULT_TEMPERATURE: f64 = 0.9;
const PLACEHOLDER: &str = "{text}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaphraseRequest {
    pub text: String,
    pub seed: u64,
    pub temperature: f64,
    pub prompt_template: String,
}

impl ParaphraseRequest {
    pub fn new(text: impl Into<String>, seed: u64) -> Self {
        Self {
            text: text.into(),
            seed,
            temperature: DEFAULT_TEMPERATURE,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
        }
    }

    /// The template with its `{text}` placeholder replaced by the source.
    pub fn prompt(&self) -> String {
        self.prompt_template.replacen(PLACEHOLDER, &self.text, 1)
    }
}

pub fn validate_template(template: &str) -> Result<()> {
    match template.matches(PLACEHOLDER).count() {
        1 => Ok(()),
        n => Err(Error::Argument(format!(
            "prompt template must contain exactly one {PLACEHOLDER} placeholder, found {n}"
        ))),
    }
}

/// A source of paraphrases.
pub trait ParaphraseProvider: Send + Sync {
    fn paraphrase(&self, req: &ParaphraseRequest) -> std::result::Result<String, ProviderError>;

    /// Whether equal `(text, seed)` requests always produce equal output.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Rotates the whitespace tokens of the source left by `seed mod n` and
/// rejoins them with single spaces.
pub fn mock_paraphrase(req: &ParaphraseRequest) -> String {
    let mut tokens: Vec<&str> = req.text.split_whitespace().collect();
    if !tokens.is_empty() {
        let shift = (req.seed % tokens.len() as u64) as usize;
        tokens.rotate_left(shift);
    }
    tokens.join(" ")
}

/// Deterministic offline provider backed by [`mock_paraphrase`].
#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider;

impl ParaphraseProvider for MockProvider {
    fn paraphrase(&self, req: &ParaphraseRequest) -> std::result::Result<String, ProviderError> {
        Ok(mock_paraphrase(req))
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Number of paraphrases to add per class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub additions: IndexMap<String, usize>,
}

impl AugmentationPlan {
    pub fn total(&self) -> usize {
        self.additions.values().sum()
    }
}

/// `additions[c] = targets[c] - current[c]`. Classes without a target get
/// no additions.
pub fn plan_to_targets(
    current: &ClassDistribution,
    targets: &IndexMap<String, usize>,
) -> Result<AugmentationPlan> {
    for class in targets.keys() {
        if !current.counts.contains_key(class) {
            return Err(Error::Validation(format!(
                "target given for unknown class {class:?}"
            )));
        }
    }
    let mut additions = IndexMap::with_capacity(current.counts.len());
    for (class, &have) in &current.counts {
        let want = targets.get(class).copied().unwrap_or(have);
        if want < have {
            return Err(Error::Validation(format!(
                "target {want} for class {class:?} is below its current count {have}"
            )));
        }
        additions.insert(class.clone(), want - have);
    }
    Ok(AugmentationPlan { additions })
}

/// Raises every class to `round_half_up(max_count * multiplier)`.
pub fn plan_balanced(current: &ClassDistribution, multiplier: f64) -> Result<AugmentationPlan> {
    if !multiplier.is_finite() || multiplier < 1.0 {
        return Err(Error::Argument(format!(
            "multiplier must be ≥ 1, got {multiplier}"
        )));
    }
    if current.counts.is_empty() {
        return Err(Error::Validation("class distribution is empty".into()));
    }
    let max = current.counts.values().copied().max().unwrap_or(0);
    let target = round_half_up(max as f64 * multiplier);
    let targets = current.counts.keys().map(|c| (c.clone(), target)).collect();
    plan_to_targets(current, &targets)
}

/// Knobs for [`augment_dataset_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOptions {
    pub temperature: f64,
    pub prompt_template: String,
    /// Maximum number of provider requests in flight.
    pub parallelism: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            prompt_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            parallelism: 1,
        }
    }
}

/// Seed for the `k`-th paraphrase of `source_id` within a run.
pub fn request_seed(run_seed: u64, source_id: &str, k: usize) -> u64 {
    let mut h = Fnv1a64::default();
    h.write(&run_seed.to_le_bytes());
    h.write(source_id.as_bytes());
    h.write(&[0xff]);
    h.write(&(k as u64).to_le_bytes());
    mix64(h.finish())
}

pub fn augment_dataset(
    d: &Dataset,
    plan: &AugmentationPlan,
    provider: &dyn ParaphraseProvider,
    seed: u64,
) -> Result<Dataset> {
    augment_dataset_with(d, plan, provider, seed, &AugmentOptions::default())
}

struct Job {
    class: String,
    source: usize,
    k: usize,
}

/// Appends `plan.additions[c]` paraphrases for every class `c`.
///
/// New example ids are `{source_id}#aug{k}` where `k` counts the visits to
/// that source. Requests may run concurrently but results are assembled in
/// plan order, so output depends only on the inputs and the provider.
pub fn augment_dataset_with(
    d: &Dataset,
    plan: &AugmentationPlan,
    provider: &dyn ParaphraseProvider,
    seed: u64,
    opts: &AugmentOptions,
) -> Result<Dataset> {
    validate_template(&opts.prompt_template)?;
    if !opts.temperature.is_finite() || opts.temperature < 0.0 {
        return Err(Error::Argument(format!(
            "invalid temperature {}",
            opts.temperature
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let mut jobs = Vec::with_capacity(plan.total());
    for (class, &add) in &plan.additions {
        if add == 0 {
            continue;
        }
        if d.class_index(class).is_none() {
            return Err(Error::Validation(format!(
                "plan names unknown class {class:?}"
            )));
        }
        let mut members: Vec<usize> = d
            .examples()
            .iter()
            .enumerate()
            .filter(|(_, ex)| &ex.label == class)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(Error::Validation(format!(
                "plan asks for {add} paraphrases of class {class:?}, which has no examples"
            )));
        }
        rng.shuffle(&mut members);
        let n = members.len();
        jobs.extend((0..add).map(|j| Job {
            class: class.clone(),
            source: members[j % n],
            k: j / n,
        }));
    }

    let run = |job: &Job| -> std::result::Result<String, ProviderError> {
        let src = &d.examples()[job.source];
        let req = ParaphraseRequest {
            text: src.text.clone(),
            seed: request_seed(seed, &src.id, job.k),
            temperature: opts.temperature,
            prompt_template: opts.prompt_template.clone(),
        };
        let out = provider.paraphrase(&req)?;
        if out.trim().is_empty() && !src.text.trim().is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(out)
    };

    let outputs: Vec<_> = if opts.parallelism <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.parallelism)
            .build()
            .map_err(|e| Error::Argument(format!("cannot start request pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };

    let mut examples = d.examples().to_vec();
    examples.reserve(jobs.len());
    for (job, out) in jobs.iter().zip(outputs) {
        let src = &d.examples()[job.source];
        let text = out.map_err(|cause| Error::Augmentation {
            class: job.class.clone(),
            source_id: src.id.clone(),
            cause,
        })?;
        examples.push(LabeledExample {
            id: format!("{}#aug{}", src.id, job.k),
            text,
            label: job.class.clone(),
        });
    }
    log::info!("augmentation added {} examples", jobs.len());
    Dataset::new(d.task_name(), d.label_classes().to_vec(), examples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::class_distribution;

    fn dist(pairs: &[(&str, usize)]) -> ClassDistribution {
        ClassDistribution {
            counts: pairs.iter().map(|(c, n)| (c.to_string(), *n)).collect(),
        }
    }

    fn targets(pairs: &[(&str, usize)]) -> IndexMap<String, usize> {
        pairs.iter().map(|(c, n)| (c.to_string(), *n)).collect()
    }

    fn additions(plan: &AugmentationPlan) -> Vec<usize> {
        plan.additions.values().copied().collect()
    }

    #[test]
    fn shared_task_augmentation_targets() {
        let a = dist(&[("Non-Conspiratorial", 917), ("Conspiratorial", 925)]);
        let plan = plan_to_targets(
            &a,
            &targets(&[("Non-Conspiratorial", 1822), ("Conspiratorial", 2524)]),
        )
        .unwrap();
        assert_eq!(additions(&plan), vec![905, 1599]);

        let b = dist(&[
            ("Covid", 435),
            ("QAnon", 242),
            ("Flat-Earth", 76),
            ("Russian", 57),
        ]);
        let plan = plan_to_targets(
            &b,
            &targets(&[
                ("Covid", 779),
                ("QAnon", 672),
                ("Flat-Earth", 362),
                ("Russian", 322),
            ]),
        )
        .unwrap();
        assert_eq!(additions(&plan), vec![344, 430, 286, 265]);

        let same = plan_to_targets(&b, &b.counts).unwrap();
        assert_eq!(same.total(), 0);
    }

    #[test]
    fn target_below_current_names_class() {
        let d = dist(&[("A", 10), ("B", 5)]);
        let err = plan_to_targets(&d, &targets(&[("B", 4)])).unwrap_err();
        assert!(err.to_string().contains("\"B\""), "{err}");
    }

    #[test]
    fn balanced_plans() {
        assert_eq!(
            additions(&plan_balanced(&dist(&[("A", 10), ("B", 2)]), 1.0).unwrap()),
            vec![0, 8]
        );
        assert_eq!(
            plan_balanced(&dist(&[("A", 10), ("B", 10)]), 1.0)
                .unwrap()
                .total(),
            0
        );
        let b = dist(&[
            ("Covid", 435),
            ("QAnon", 242),
            ("Flat-Earth", 76),
            ("Russian", 57),
        ]);
        assert_eq!(
            additions(&plan_balanced(&b, 1.5).unwrap()),
            vec![218, 411, 577, 596]
        );
        assert!(matches!(plan_balanced(&b, 0.9), Err(Error::Argument(_))));
    }

    #[test]
    fn mock_rotation() {
        assert_eq!(
            mock_paraphrase(&ParaphraseRequest::new("uno due tre", 1)),
            "due tre uno"
        );
        assert_eq!(mock_paraphrase(&ParaphraseRequest::new("ciao", 7)), "ciao");
        assert_eq!(mock_paraphrase(&ParaphraseRequest::new("", 3)), "");
    }

    #[test]
    fn prompt_rendering() {
        let req = ParaphraseRequest::new("ciao", 0);
        assert_eq!(req.prompt(), "riformulare questo testo: ciao");
        assert!(validate_template("{text} e {text}").is_err());
        assert!(validate_template("nessuno").is_err());
    }

    #[test]
    fn single_source_cycles() {
        let d = Dataset::with_inferred_classes(
            "t",
            vec![
                LabeledExample::new("x", "alfa beta gamma", "A"),
                LabeledExample::new("y", "delta", "B"),
            ],
        )
        .unwrap();
        let plan = AugmentationPlan {
            additions: targets(&[("A", 3), ("B", 0)]),
        };
        let out = augment_dataset(&d, &plan, &MockProvider, 11).unwrap();
        let new: Vec<_> = out.examples()[2..].iter().map(|e| e.id.as_str()).collect();
        assert_eq!(new, ["x#aug0", "x#aug1", "x#aug2"]);
        assert!(out.examples()[2..].iter().all(|e| e.label == "A"));
        assert_eq!(&out.examples()[..2], d.examples());
    }

    #[test]
    fn zero_plan_is_identity() {
        let d = Dataset::with_inferred_classes(
            "t",
            vec![
                LabeledExample::new("x", "a b", "A"),
                LabeledExample::new("y", "c", "B"),
            ],
        )
        .unwrap();
        let plan = plan_to_targets(&class_distribution(&d), &IndexMap::new()).unwrap();
        assert_eq!(augment_dataset(&d, &plan, &MockProvider, 0).unwrap(), d);
    }

    #[test]
    fn empty_class_with_additions_is_rejected() {
        let d = Dataset::new(
            "t",
            vec!["A".into(), "B".into()],
            vec![LabeledExample::new("x", "a", "A")],
        )
        .unwrap();
        let plan = AugmentationPlan {
            additions: targets(&[("B", 2)]),
        };
        assert!(matches!(
            augment_dataset(&d, &plan, &MockProvider, 0),
            Err(Error::Validation(_))
        ));
    }

    struct Failing;
    impl ParaphraseProvider for Failing {
        fn paraphrase(&self, _: &ParaphraseRequest) -> std::result::Result<String, ProviderError> {
            Err(ProviderError::Exhausted {
                attempts: 4,
                message: "down".into(),
            })
        }
    }

    #[test]
    fn provider_failure_names_class_and_source() {
        let d = Dataset::with_inferred_classes(
            "t",
            vec![
                LabeledExample::new("x", "a", "A"),
                LabeledExample::new("y", "b", "B"),
            ],
        )
        .unwrap();
        let plan = AugmentationPlan {
            additions: targets(&[("B", 1)]),
        };
        match augment_dataset(&d, &plan, &Failing, 0).unwrap_err() {
            Error::Augmentation {
                class, source_id, ..
            } => {
                assert_eq!((class.as_str(), source_id.as_str()), ("B", "y"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn request_seeds_differ_per_visit() {
        assert_ne!(request_seed(1, "x", 0), request_seed(1, "x", 1));
        assert_ne!(request_seed(1, "x", 0), request_seed(2, "x", 0));
        assert_eq!(request_seed(5, "abc", 3), request_seed(5, "abc", 3));
    }
}
