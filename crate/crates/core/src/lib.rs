//! Multilabel emotion classification over frozen text embeddings.
//!
//! The pipeline reads labeled CSV datasets and EMBS embedding files, splits
//! each language with iterative stratification, trains a linear sigmoid head
//! or a boosted-tree ensemble per emotion, and scores predictions with
//! macro-F1. Score tables can be combined by weighted voting and compared
//! with exact Wilcoxon and Mann-Whitney tests.

pub mod dataset;
pub mod embedstore;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod gbdt;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod stats;
pub mod stratify;
pub mod trainer;

pub use dataset::{
    label_counts, load_dataset, load_score_table, EmotionSchema, LabelCount, LabeledDataset,
    Record, ScoreTable,
};
pub use embedstore::{
    read_embeddings, render_prompt, synth_dataset, synth_embeddings, write_embeddings,
    EmbeddingMeta, EmbeddingSet, PromptTemplate, SynthParams, Variant,
};
pub use ensemble::{dev_weights, weighted_vote, EnsembleSpec, Member};
pub use error::{Error, ErrorKind, Result};
pub use experiment::{render_report, run_experiment, ExperimentConfig, SavedModel};
pub use gbdt::{predict_gbdt, train_gbdt, GbdtConfig, TreeEnsembleModel};
pub use losses::{class_weights, ClassWeights, LossKind};
pub use metrics::{f1_scores, language_average, win_count, EvalReport};
pub use stats::{compare_models, mann_whitney_u, wilcoxon_signed_rank, Comparison, TestResult};
pub use stratify::{iterative_stratified_split, split_by_language, SplitResult};
pub use trainer::{predict, train_head, HeadConfig, Strategy, TrainedHead};
