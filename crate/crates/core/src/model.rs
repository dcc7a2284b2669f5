//! Domain types shared by every stage: samples, manifests, embeddings,
//! pipeline configuration and annotation metrics.
//!
//! A corpus manifest is partitioned by label origin into the manually
//! labeled set `M`, the automatically labeled set `A`, and the full corpus
//! `U`. A sample carries at most one origin, so `M ∩ A = ∅` holds by
//! construction for any manifest with unique ids.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Positive, Label::Negative];

    pub fn opposite(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Positive => write!(f, "positive"),
            Label::Negative => write!(f, "negative"),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" | "p" => Ok(Label::Positive),
            "negative" | "neg" | "n" => Ok(Label::Negative),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// Where a sample's label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelOrigin {
    /// Assigned by a human annotator (the set `M`).
    Manual,
    /// Assigned by propagation or mining heuristics (the set `A`).
    Auto,
    /// Carried over from a pre-existing task dataset.
    Seed,
}

/// Outcome of [`Sample::apply_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelUpdate {
    Applied,
    Unchanged,
    /// An automatic label never replaces a manual one.
    RejectedManualLocked,
}

/// One corpus item.
///
/// Fields the model does not know about are kept in `extra` and written back
/// verbatim when the manifest is saved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_origin: Option<LabelOrigin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Sample {
    pub fn new(id: impl Into<String>, uri: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            uri: uri.into(),
            score: None,
            label: None,
            label_origin: None,
            annotator: None,
            created_at: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_label(mut self, label: Label, origin: LabelOrigin) -> Self {
        self.label = Some(label);
        self.label_origin = Some(origin);
        self
    }

    pub fn is_manual(&self) -> bool {
        self.label.is_some() && self.label_origin == Some(LabelOrigin::Manual)
    }

    pub fn is_auto(&self) -> bool {
        self.label.is_some() && self.label_origin == Some(LabelOrigin::Auto)
    }

    /// Records a label, honoring the precedence rule that a manual label is
    /// never replaced by an automatic one.
    pub fn apply_label(
        &mut self,
        label: Label,
        origin: LabelOrigin,
        annotator: Option<String>,
    ) -> LabelUpdate {
        if origin == LabelOrigin::Auto && self.is_manual() {
            return LabelUpdate::RejectedManualLocked;
        }
        if self.label == Some(label) && self.label_origin == Some(origin) {
            return LabelUpdate::Unchanged;
        }
        self.label = Some(label);
        self.label_origin = Some(origin);
        self.annotator = annotator;
        LabelUpdate::Applied
    }

    pub fn clear_label(&mut self) {
        self.label = None;
        self.label_origin = None;
        self.annotator = None;
    }
}

/// Which side of the problem a manifest describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManifestRole {
    /// The task-specific labeled dataset.
    TaskDataset,
    /// Samples drawn from the large unlabeled corpus.
    #[default]
    CorpusPool,
}

/// Ordered collection of samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub role: ManifestRole,
    pub samples: Vec<Sample>,
}

impl DatasetManifest {
    pub fn new(role: ManifestRole, samples: Vec<Sample>) -> Self {
        DatasetManifest { role, samples }
    }

    pub fn corpus(samples: Vec<Sample>) -> Self {
        Self::new(ManifestRole::CorpusPool, samples)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Ids of manually labeled samples (`M`), in manifest order.
    pub fn manual_ids(&self) -> Vec<&str> {
        self.samples.iter().filter(|s| s.is_manual()).map(|s| s.id.as_str()).collect()
    }

    /// Ids of automatically labeled samples (`A`), in manifest order.
    pub fn auto_ids(&self) -> Vec<&str> {
        self.samples.iter().filter(|s| s.is_auto()).map(|s| s.id.as_str()).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_manifest(self)
    }
}

/// A single invariant violation found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateId { id: String, positions: Vec<usize> },
    ScoreOutOfRange { id: String, score: f64 },
    /// Label present without an origin, or an origin without a label.
    LabelOriginMismatch { id: String },
    /// The same id occurs once as manual and once as automatic.
    PartitionOverlap { id: String },
    /// Manual or automatic labels inside a task-dataset manifest.
    ForeignOrigin { id: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Collects every invariant violation in a manifest. Never fails.
pub fn validate_manifest(manifest: &DatasetManifest) -> ValidationReport {
    let mut violations = Vec::new();
    let mut positions: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    let mut manual: HashSet<&str> = HashSet::new();
    let mut auto: HashSet<&str> = HashSet::new();

    for (pos, sample) in manifest.samples.iter().enumerate() {
        let entry = positions.entry(sample.id.as_str()).or_default();
        if entry.is_empty() {
            order.push(sample.id.as_str());
        }
        entry.push(pos);

        if let Some(score) = sample.score {
            if !(0.0..=1.0).contains(&score) {
                violations.push(Violation::ScoreOutOfRange { id: sample.id.clone(), score });
            }
        }
        if sample.label.is_some() != sample.label_origin.is_some() {
            violations.push(Violation::LabelOriginMismatch { id: sample.id.clone() });
        }
        if sample.is_manual() {
            manual.insert(sample.id.as_str());
        }
        if sample.is_auto() {
            auto.insert(sample.id.as_str());
        }
        if manifest.role == ManifestRole::TaskDataset
            && matches!(sample.label_origin, Some(LabelOrigin::Manual | LabelOrigin::Auto))
        {
            violations.push(Violation::ForeignOrigin { id: sample.id.clone() });
        }
    }

    for id in order {
        let pos = &positions[id];
        if pos.len() > 1 {
            violations.push(Violation::DuplicateId { id: id.to_string(), positions: pos.clone() });
        }
        if manual.contains(id) && auto.contains(id) {
            violations.push(Violation::PartitionOverlap { id: id.to_string() });
        }
    }

    ValidationReport { violations }
}

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("vector for {id:?} has dimension {got}, store dimension is {expected}")]
    DimMismatch { id: String, expected: usize, got: usize },
    #[error("vector for {0:?} has zero norm")]
    ZeroNormVector(String),
    #[error("vector for {0:?} contains a non-finite value")]
    NonFiniteValue(String),
    #[error("duplicate embedding id {0:?}")]
    DuplicateId(String),
    #[error("embedding ids may not contain newlines: {0:?}")]
    InvalidId(String),
    #[error("embedding dimension must be positive")]
    ZeroDimension,
}

/// Dense `count × dim` matrix of raw (un-normalized) embeddings keyed by
/// sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDimension);
        }
        Ok(EmbeddingStore { dim, ids: Vec::new(), data: Vec::new(), index: HashMap::new() })
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Result<Self, StoreError> {
        let mut store = Self::new(dim)?;
        store.ids.reserve(rows);
        store.data.reserve(rows * dim);
        store.index.reserve(rows);
        Ok(store)
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f32]) -> Result<(), StoreError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(StoreError::DimMismatch { id, expected: self.dim, got: vector.len() });
        }
        if id.contains('\n') {
            return Err(StoreError::InvalidId(id));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(StoreError::NonFiniteValue(id));
        }
        if vector.iter().all(|&x| x == 0.0) {
            return Err(StoreError::ZeroNormVector(id));
        }
        if self.index.contains_key(&id) {
            return Err(StoreError::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|i| self.row(i))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids.iter().map(String::as_str).zip(self.data.chunks_exact(self.dim))
    }
}

/// Which model-adaptation workflow to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Strategy {
    /// Task-specific positives plus mined hard negatives.
    #[default]
    #[serde(rename = "1", alias = "one")]
    One,
    /// Both classes mined from the corpus and labeled by propagation.
    #[serde(rename = "2", alias = "two")]
    Two,
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "one" => Ok(Strategy::One),
            "2" | "two" => Ok(Strategy::Two),
            other => Err(format!("unknown strategy {other:?}, expected 1 or 2")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("score threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("similarity threshold {0} must lie strictly between 0 and 1")]
    SimilarityOutOfRange(f64),
    #[error("{0} must be at least 1")]
    NotPositive(&'static str),
}

/// Hyperparameters of the refinement pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Score threshold `t`; a corpus sample is retained iff `score > t`.
    pub threshold: f64,
    /// Similarity threshold `a`; a labeled sample votes iff `cos >= a`.
    pub similarity: f64,
    /// Number of random negative subsets `R` scored by the diversity search.
    pub random_subsets: usize,
    /// Manual seed labels expected per class.
    pub seed_per_class: usize,
    pub rng_seed: u64,
    pub strategy: Strategy,
    /// Propagation passes for Strategy 2.
    pub passes: usize,
    /// Warn when Strategy 2 finds fewer positives than this.
    pub positive_floor: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: 0.8,
            similarity: 0.85,
            random_subsets: 300_000,
            seed_per_class: 1000,
            rng_seed: 0,
            strategy: Strategy::One,
            passes: 2,
            positive_floor: 1,
        }
    }
}

impl PipelineConfig {
    /// Checks hard constraints and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::ThresholdOutOfRange(self.threshold));
        }
        if !(self.similarity > 0.0 && self.similarity < 1.0) {
            return Err(ConfigError::SimilarityOutOfRange(self.similarity));
        }
        if self.random_subsets == 0 {
            return Err(ConfigError::NotPositive("random_subsets"));
        }
        if self.seed_per_class == 0 {
            return Err(ConfigError::NotPositive("seed_per_class"));
        }
        if self.passes == 0 {
            return Err(ConfigError::NotPositive("passes"));
        }
        let mut warnings = Vec::new();
        if self.threshold <= 0.5 {
            warnings.push(threshold_warning(self.threshold));
        }
        Ok(warnings)
    }
}

pub(crate) fn threshold_warning(t: f64) -> String {
    format!("score threshold {t} is not well above 0.5; the retained pool will not be dominated by confident positives")
}

/// Human-effort accounting over manual and automatic labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationMetrics {
    pub manual_count: usize,
    pub auto_count: usize,
    /// `auto / (manual + auto)`; zero when nothing is labeled.
    pub auto_fraction: f64,
    /// `(manual + auto) / manual`; absent when there are no manual labels.
    pub reduction_factor: Option<f64>,
}

impl AnnotationMetrics {
    pub fn from_counts(manual_count: usize, auto_count: usize) -> Self {
        let total = manual_count + auto_count;
        let auto_fraction = if total == 0 { 0.0 } else { auto_count as f64 / total as f64 };
        let reduction_factor =
            (manual_count > 0).then(|| total as f64 / manual_count as f64);
        AnnotationMetrics { manual_count, auto_count, auto_fraction, reduction_factor }
    }

    pub fn total(&self) -> usize {
        self.manual_count + self.auto_count
    }
}
