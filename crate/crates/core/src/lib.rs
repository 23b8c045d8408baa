//! Few-shot text classification in the SetFit style.
//!
//! The pipeline expands a small labeled training set with paraphrases
//! ([`augment`]), fine-tunes a hashed n-gram sentence encoder on same-class
//! and different-class pairs ([`contrastive`]), trains a softmax head on the
//! resulting embeddings ([`head`]) and scores predictions by macro F1 on a
//! public/private leaderboard split ([`eval`]). [`tune`] adds grid search
//! and the augmentation ablation.

pub mod artifact;
pub mod augment;
pub mod contrastive;
pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod head;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod tune;

pub use artifact::{load_classifier, save_classifier};
pub use augment::{
    augment_dataset, mock_paraphrase, plan_balanced, plan_to_targets, AugmentationPlan,
    HttpProvider, MockProvider, ParaphraseProvider, ParaphraseRequest,
};
pub use contrastive::{
    generate_pairs, train_contrastive, ContrastiveConfig, LossTrajectory, SentencePair,
};
pub use corpus::{
    class_distribution, leaderboard_split, load_dataset, stratified_split, ClassDistribution,
    Dataset, LabeledExample, SplitResult,
};
pub use encoder::{init_encoder, EncoderModel, SentenceEmbedding, TokenizerConfig};
pub use error::{Error, ProviderError, Result};
pub use eval::{
    confusion, leaderboard_eval, metrics, ConfusionMatrix, LeaderboardReport, MetricsReport,
};
pub use head::{predict, train_head, HeadConfig, HeadModel, Prediction};
pub use pipeline::{train_pipeline, Classifier, EncoderSettings, PipelineConfig};
pub use tune::{ablation_run, grid_search, AblationCondition, GridSpec, SweepReport, TrialResult};
