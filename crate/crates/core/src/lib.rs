//! Dataset refinement in embedding space.
//!
//! The pipeline mines hard candidates from a large unlabeled corpus using a
//! baseline model's scores ([`miner`]), propagates labels from a small manual
//! seed with a radius near-neighbors vote ([`autolabel`]), picks a diverse
//! negative subset ([`diversity`]) and emits a balanced training manifest
//! together with annotation-effort metrics ([`pipeline`]). [`service`] hosts
//! the human seed-labeling loop over HTTP and [`synth`] generates
//! ground-truth corpora for evaluation.
//!
//! See the crate's `examples/` directory for one runnable program per stage.

pub mod autolabel;
pub mod diversity;
pub mod ingest;
pub mod miner;
pub mod model;
pub mod pipeline;
pub mod service;
pub mod synth;

pub use autolabel::{
    cosine_similarity, propagate_labels, propagate_passes, radius_neighbors, second_pass,
    Abstention, Assignment, AutoLabelResult, LabeledIndex,
};
pub use diversity::{diversity_score, select_diverse_subset, CandidatePool, Selection};
pub use ingest::{
    fetch_scored, load_manifest, read_embedding_store, save_manifest, write_embedding_store,
    InferenceProvider,
};
pub use miner::{filter_by_threshold, mine_hard_candidates};
pub use model::{
    validate_manifest, AnnotationMetrics, DatasetManifest, EmbeddingStore, Label, LabelOrigin,
    PipelineConfig, Sample, Strategy,
};
pub use pipeline::{emit_refined, reduction_metrics, run_strategy1, run_strategy2, RefinedDataset};
