//! End-to-end refinement workflows and the refined-dataset output.
//!
//! Strategy 1 pairs a task-specific positive source with threshold-mined
//! corpus samples taken as hard negatives. Strategy 2 starts from a manual
//! seed inside the mined pool, propagates labels for two passes, fills the
//! negative class with the most diverse subset of the propagated negatives
//! and balances it against the positives.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use tracing::{info, warn};

use crate::autolabel::{self, AutoLabelError, AutoLabelResult};
use crate::diversity::{self, CandidatePool, DiversityError, SelectOptions};
use crate::ingest::{self, FetchOptions, HttpProvider, ManifestError, StoreFormatError};
use crate::miner::{self, MinerError};
use crate::model::{
    AnnotationMetrics, ConfigError, DatasetManifest, EmbeddingStore, Label, LabelOrigin,
    ManifestRole, PipelineConfig, Sample, Strategy,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Miner(#[from] MinerError),
    #[error(transparent)]
    AutoLabel(#[from] AutoLabelError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
    #[error("no corpus sample scored above the threshold")]
    EmptyHardNegativePool,
    #[error("the task source contains no positive samples")]
    EmptyPositiveSource,
    #[error("task-source sample {0:?} is not labeled positive")]
    NotPositive(String),
    #[error("need {needed} negatives to balance the positives, only {available} available")]
    InsufficientNegatives { needed: usize, available: usize },
    #[error("refined dataset is invalid: {0}")]
    InvalidDataset(String),
    #[error("run configuration: {0}")]
    RunConfig(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Store(#[from] StoreFormatError),
    #[error(transparent)]
    Fetch(#[from] ingest::FetchError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One step in a sample's history, listed from its origin onwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProvenanceStep {
    /// Label inherited from a pre-existing task dataset.
    SeedDataset,
    /// Drawn from the task-specific positive source.
    TaskSource,
    /// Retained by the score threshold.
    Mined,
    Manual,
    AutoPass(u32),
    DiversitySelected,
    /// Survived uniform down-sampling for class balance.
    Downsampled,
}

impl ProvenanceStep {
    /// Steps a provenance chain may start from.
    pub fn is_anchor(self) -> bool {
        matches!(self, ProvenanceStep::SeedDataset | ProvenanceStep::Mined | ProvenanceStep::Manual)
    }
}

impl fmt::Display for ProvenanceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProvenanceStep::SeedDataset => f.write_str("seed-dataset"),
            ProvenanceStep::TaskSource => f.write_str("task-source"),
            ProvenanceStep::Mined => f.write_str("mined"),
            ProvenanceStep::Manual => f.write_str("manual"),
            ProvenanceStep::AutoPass(n) => write!(f, "auto-pass-{n}"),
            ProvenanceStep::DiversitySelected => f.write_str("diversity-selected"),
            ProvenanceStep::Downsampled => f.write_str("downsampled"),
        }
    }
}

impl FromStr for ProvenanceStep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "seed-dataset" => ProvenanceStep::SeedDataset,
            "task-source" => ProvenanceStep::TaskSource,
            "mined" => ProvenanceStep::Mined,
            "manual" => ProvenanceStep::Manual,
            "diversity-selected" => ProvenanceStep::DiversitySelected,
            "downsampled" => ProvenanceStep::Downsampled,
            other => match other.strip_prefix("auto-pass-").and_then(|n| n.parse().ok()) {
                Some(n) => ProvenanceStep::AutoPass(n),
                None => return Err(format!("unknown provenance step {other:?}")),
            },
        })
    }
}

impl Serialize for ProvenanceStep {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProvenanceStep {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinedSample {
    pub sample: Sample,
    pub provenance: Vec<ProvenanceStep>,
}

/// Balanced training set ready for retraining.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedDataset {
    pub positives: Vec<RefinedSample>,
    pub negatives: Vec<RefinedSample>,
    /// Effort accounting over every manual and automatic label produced.
    pub metrics: AnnotationMetrics,
    pub warnings: Vec<String>,
}

impl RefinedDataset {
    /// Checks balance, class disjointness, label presence and provenance
    /// completeness.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidDataset(msg));
        if self.positives.len() != self.negatives.len() {
            return bad(format!("{} positives vs {} negatives", self.positives.len(), self.negatives.len()));
        }
        let mut seen = HashSet::new();
        for (class, set) in [(Label::Positive, &self.positives), (Label::Negative, &self.negatives)] {
            for r in set {
                if !seen.insert(r.sample.id.as_str()) {
                    return bad(format!("sample {:?} appears twice", r.sample.id));
                }
                if r.sample.label != Some(class) || r.sample.label_origin.is_none() {
                    return bad(format!("sample {:?} is not labeled {class} with an origin", r.sample.id));
                }
                if !r.provenance.first().is_some_and(|s| s.is_anchor()) {
                    return bad(format!("sample {:?} has no provenance anchor", r.sample.id));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Positives followed by negatives.
    pub fn to_manifest(&self) -> DatasetManifest {
        let samples = self.positives.iter().chain(&self.negatives).map(|r| r.sample.clone()).collect();
        DatasetManifest::new(ManifestRole::TaskDataset, samples)
    }
}

/// Counts manual and automatic label origins.
pub fn reduction_metrics(manifest: &DatasetManifest) -> AnnotationMetrics {
    let manual = manifest.samples.iter().filter(|s| s.is_manual()).count();
    let auto = manifest.samples.iter().filter(|s| s.is_auto()).count();
    AnnotationMetrics::from_counts(manual, auto)
}

fn log_config_warnings(config: &PipelineConfig) -> Result<Vec<String>, PipelineError> {
    let warnings = config.validate()?;
    for w in &warnings {
        warn!("{w}");
    }
    Ok(warnings)
}

/// Keeps a uniform random subset of `n` items, preserving their order.
fn downsample(items: Vec<RefinedSample>, n: usize, seed: u64, stream: u64) -> Vec<RefinedSample> {
    if items.len() <= n {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut keep = index::sample(&mut rng, items.len(), n).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, mut r)| {
            if keep.peek() == Some(&i) {
                keep.next();
                r.provenance.push(ProvenanceStep::Downsampled);
                Some(r)
            } else {
                None
            }
        })
        .collect()
}

/// Task-specific positives against threshold-mined hard negatives.
pub fn run_strategy1(
    config: &PipelineConfig,
    task_positive_source: &DatasetManifest,
    corpus: &DatasetManifest,
) -> Result<RefinedDataset, PipelineError> {
    let warnings = log_config_warnings(config)?;

    let mut positives = Vec::with_capacity(task_positive_source.len());
    for s in &task_positive_source.samples {
        if s.label != Some(Label::Positive) {
            return Err(PipelineError::NotPositive(s.id.clone()));
        }
        let mut sample = s.clone();
        let origin = *sample.label_origin.get_or_insert(LabelOrigin::Seed);
        let root = match origin {
            LabelOrigin::Manual => ProvenanceStep::Manual,
            _ => ProvenanceStep::SeedDataset,
        };
        positives.push(RefinedSample { sample, provenance: vec![root, ProvenanceStep::TaskSource] });
    }
    if positives.is_empty() {
        return Err(PipelineError::EmptyPositiveSource);
    }
    let positive_ids: HashSet<&str> = task_positive_source.samples.iter().map(|s| s.id.as_str()).collect();

    let mined = miner::filter_by_threshold(&corpus.samples, config.threshold)?;
    let negatives: Vec<RefinedSample> = mined
        .into_iter()
        .filter(|s| !positive_ids.contains(s.id.as_str()))
        .map(|mut sample| {
            sample.clear_label();
            sample.apply_label(Label::Negative, LabelOrigin::Auto, None);
            RefinedSample { sample, provenance: vec![ProvenanceStep::Mined] }
        })
        .collect();
    if negatives.is_empty() {
        return Err(PipelineError::EmptyHardNegativePool);
    }
    info!(positives = positives.len(), hard_negatives = negatives.len(), "strategy 1 pools");

    let n = positives.len().min(negatives.len());
    let positives = downsample(positives, n, config.rng_seed, 1);
    let negatives = downsample(negatives, n, config.rng_seed, 2);
    let metrics = AnnotationMetrics::from_counts(0, negatives.len());
    let dataset = RefinedDataset { positives, negatives, metrics, warnings };
    dataset.validate()?;
    Ok(dataset)
}

/// Outcome of Strategy 2 including the intermediate propagation passes.
#[derive(Debug, Clone)]
pub struct Strategy2Run {
    pub dataset: RefinedDataset,
    pub passes: Vec<AutoLabelResult>,
    pub selection: diversity::Selection,
}

/// Manual seed plus propagation, diverse negatives, balanced output.
pub fn run_strategy2(
    config: &PipelineConfig,
    seed_labels: &DatasetManifest,
    pool: &DatasetManifest,
    embeddings: &EmbeddingStore,
) -> Result<RefinedDataset, PipelineError> {
    run_strategy2_detailed(config, seed_labels, pool, embeddings).map(|r| r.dataset)
}

pub fn run_strategy2_detailed(
    config: &PipelineConfig,
    seed_labels: &DatasetManifest,
    pool: &DatasetManifest,
    embeddings: &EmbeddingStore,
) -> Result<Strategy2Run, PipelineError> {
    let mut warnings = log_config_warnings(config)?;

    let mut manual: Vec<(String, Label)> = Vec::new();
    for s in &seed_labels.samples {
        match s.label {
            Some(label) => manual.push((s.id.clone(), label)),
            None => warnings.push(format!("seed sample {:?} has no label and is ignored", s.id)),
        }
    }
    for label in Label::ALL {
        let have = manual.iter().filter(|(_, l)| *l == label).count();
        if have < config.seed_per_class {
            warnings.push(format!("seed has {have} {label} samples, expected {}", config.seed_per_class));
        }
    }

    let pool_by_id: HashMap<&str, &Sample> = pool.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let manual_ids: HashSet<&str> = manual.iter().map(|(id, _)| id.as_str()).collect();
    let unlabeled: Vec<String> =
        pool.samples.iter().filter(|s| !manual_ids.contains(s.id.as_str())).map(|s| s.id.clone()).collect();

    let passes = autolabel::propagate_passes(&manual, &unlabeled, embeddings, config.similarity, config.passes)?;

    let seed_by_id: HashMap<&str, &Sample> = seed_labels.samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let manual_sample = |id: &str, label: Label| {
        let (mut sample, mined) = match pool_by_id.get(id) {
            Some(p) => ((*p).clone(), true),
            None => ((*seed_by_id[id]).clone(), false),
        };
        let seed = seed_by_id[id];
        sample.clear_label();
        sample.apply_label(label, LabelOrigin::Manual, seed.annotator.clone());
        sample.created_at = seed.created_at.or(sample.created_at);
        let mut provenance = Vec::with_capacity(2);
        if mined {
            provenance.push(ProvenanceStep::Mined);
        }
        provenance.push(ProvenanceStep::Manual);
        RefinedSample { sample, provenance }
    };
    let auto_sample = |id: &str, label: Label, pass: u32| {
        let mut sample = pool_by_id[id].clone();
        sample.clear_label();
        sample.apply_label(label, LabelOrigin::Auto, None);
        RefinedSample { sample, provenance: vec![ProvenanceStep::Mined, ProvenanceStep::AutoPass(pass)] }
    };

    let mut positives = Vec::new();
    let mut negative_pool = Vec::new();
    for (id, label) in &manual {
        let r = manual_sample(id, *label);
        match label {
            Label::Positive => positives.push(r),
            Label::Negative => negative_pool.push(r),
        }
    }
    let mut auto_count = 0;
    for pass in &passes {
        for (id, a) in &pass.assignments {
            auto_count += 1;
            let r = auto_sample(id, a.label, pass.pass_index);
            match a.label {
                Label::Positive => positives.push(r),
                Label::Negative => negative_pool.push(r),
            }
        }
    }

    let k = positives.len();
    if k < config.positive_floor {
        warnings.push(format!("only {k} positives found, below the floor of {}", config.positive_floor));
    }
    if negative_pool.len() < k {
        return Err(PipelineError::InsufficientNegatives { needed: k, available: negative_pool.len() });
    }
    info!(positives = k, negative_candidates = negative_pool.len(), "strategy 2 pools");

    let candidate_ids: Vec<String> = negative_pool.iter().map(|r| r.sample.id.clone()).collect();
    let candidates = CandidatePool::from_store(embeddings, &candidate_ids)?;
    let selection = diversity::select_diverse_subset(
        &candidates,
        k,
        config.random_subsets as u64,
        config.rng_seed,
        SelectOptions::default(),
    )?;
    let mut negatives = Vec::with_capacity(k);
    let mut chosen = selection.indices.iter().copied().peekable();
    for (i, mut r) in negative_pool.into_iter().enumerate() {
        if chosen.peek() == Some(&i) {
            chosen.next();
            r.provenance.push(ProvenanceStep::DiversitySelected);
            negatives.push(r);
        }
    }

    for w in &warnings {
        warn!("{w}");
    }
    let metrics = AnnotationMetrics::from_counts(manual.len(), auto_count);
    let dataset = RefinedDataset { positives, negatives, metrics, warnings };
    dataset.validate()?;
    Ok(Strategy2Run { dataset, passes, selection })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Over every manual and automatic label the run produced.
    pub annotation: AnnotationMetrics,
    /// Over the emitted training manifest only.
    pub emitted: AnnotationMetrics,
    pub positives: usize,
    pub negatives: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ProvenanceRecord<'a> {
    id: &'a str,
    class: Label,
    chain: &'a [ProvenanceStep],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedFiles {
    pub train: PathBuf,
    pub metrics: PathBuf,
    pub provenance: PathBuf,
}

/// Writes `train.jsonl`, `metrics.json` and `provenance.jsonl` into `out_dir`.
pub fn emit_refined(dataset: &RefinedDataset, out_dir: &Path) -> Result<EmittedFiles, PipelineError> {
    dataset.validate()?;
    fs::create_dir_all(out_dir)?;
    let files = EmittedFiles {
        train: out_dir.join("train.jsonl"),
        metrics: out_dir.join("metrics.json"),
        provenance: out_dir.join("provenance.jsonl"),
    };
    let manifest = dataset.to_manifest();
    ingest::save_manifest(&manifest, &files.train)?;

    let report = MetricsReport {
        annotation: dataset.metrics,
        emitted: reduction_metrics(&manifest),
        positives: dataset.positives.len(),
        negatives: dataset.negatives.len(),
        warnings: dataset.warnings.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&report).expect("metrics serialize");
    json.push(b'\n');
    fs::write(&files.metrics, json)?;

    let mut log = io::BufWriter::new(fs::File::create(&files.provenance)?);
    for (class, set) in [(Label::Positive, &dataset.positives), (Label::Negative, &dataset.negatives)] {
        for r in set {
            let rec = ProvenanceRecord { id: &r.sample.id, class, chain: &r.provenance };
            serde_json::to_writer(&mut log, &rec).expect("provenance serialize");
            log.write_all(b"\n")?;
        }
    }
    log.flush()?;
    Ok(files)
}

/// File-driven run description, usually read from `cmrf.toml`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub inputs: RunInputs,
    pub output: RunOutput,
    pub provider: ProviderSettings,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunInputs {
    /// Strategy 1: labeled positives from the task-specific source.
    pub task_positives: Option<PathBuf>,
    /// Corpus manifest; scored through the provider when scores are missing.
    pub corpus: Option<PathBuf>,
    /// Strategy 2: manual seed labels.
    pub seed: Option<PathBuf>,
    /// Strategy 2: already-mined pool. Mined from `corpus` when absent.
    pub pool: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOutput {
    pub dir: PathBuf,
}

impl Default for RunOutput {
    fn default() -> Self {
        RunOutput { dir: PathBuf::from("refined") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub url: Option<String>,
    pub timeout_ms: Option<u64>,
    pub retries: u32,
    pub batch: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        ProviderSettings { url: None, timeout_ms: None, retries: 3, batch: 64 }
    }
}

impl RunConfig {
    /// Parses a TOML run file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| PipelineError::RunConfig(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        resolve(&mut cfg.inputs.task_positives);
        resolve(&mut cfg.inputs.corpus);
        resolve(&mut cfg.inputs.seed);
        resolve(&mut cfg.inputs.pool);
        resolve(&mut cfg.inputs.embeddings);
        if cfg.output.dir.is_relative() {
            cfg.output.dir = base.join(&cfg.output.dir);
        }
        Ok(cfg)
    }
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, PipelineError> {
    p.as_deref().ok_or_else(|| PipelineError::RunConfig(format!("inputs.{what} is required")))
}

/// Loads the corpus and makes sure every sample is scored, reusing the
/// checkpointed stage output under `out_dir/stages/` when present.
fn scored_corpus(cfg: &RunConfig, stages: &Path) -> Result<DatasetManifest, PipelineError> {
    let stage_file = stages.join("scored.jsonl");
    if stage_file.exists() {
        info!(path = %stage_file.display(), "reusing scored corpus");
        return Ok(ingest::load_manifest(&stage_file)?);
    }
    let corpus = ingest::load_manifest(require(&cfg.inputs.corpus, "corpus")?)?;
    if corpus.samples.iter().all(|s| s.score.is_some()) {
        return Ok(corpus);
    }
    let url = cfg
        .provider
        .url
        .clone()
        .or_else(|| std::env::var(ingest::provider::ENV_PROVIDER_URL).ok())
        .ok_or_else(|| PipelineError::RunConfig("corpus has unscored samples and no provider url".into()))?;
    let timeout = cfg.provider.timeout_ms.unwrap_or_else(ingest::provider::timeout_from_env);
    let provider = HttpProvider::new(url, std::time::Duration::from_millis(timeout))
        .map_err(|e| PipelineError::RunConfig(e.to_string()))?;
    let opts = FetchOptions {
        batch: cfg.provider.batch,
        retries: cfg.provider.retries,
        checkpoint: Some(stages.join("scores.ckpt")),
        ..FetchOptions::default()
    };
    let scored = ingest::fetch_scored(&provider, &corpus.samples, &opts)?;
    ingest::save_manifest(&scored, &stage_file)?;
    Ok(scored)
}

/// Executes a configured run and emits the refined dataset.
pub fn run_configured(cfg: &RunConfig) -> Result<(RefinedDataset, EmittedFiles), PipelineError> {
    let stages = cfg.output.dir.join("stages");
    fs::create_dir_all(&stages)?;
    let dataset = match cfg.pipeline.strategy {
        Strategy::One => {
            let positives = ingest::load_manifest(require(&cfg.inputs.task_positives, "task_positives")?)?;
            let corpus = scored_corpus(cfg, &stages)?;
            run_strategy1(&cfg.pipeline, &positives, &corpus)?
        }
        Strategy::Two => {
            let seed = ingest::load_manifest(require(&cfg.inputs.seed, "seed")?)?;
            let embeddings = ingest::read_embedding_store(require(&cfg.inputs.embeddings, "embeddings")?)?;
            let pool = match &cfg.inputs.pool {
                Some(p) => ingest::load_manifest(p)?,
                None => {
                    let corpus = scored_corpus(cfg, &stages)?;
                    let mined = miner::filter_by_threshold(&corpus.samples, cfg.pipeline.threshold)?;
                    let pool = DatasetManifest::corpus(mined);
                    ingest::save_manifest(&pool, stages.join("pool.jsonl"))?;
                    pool
                }
            };
            run_strategy2(&cfg.pipeline, &seed, &pool, &embeddings)?
        }
    };
    let files = emit_refined(&dataset, &cfg.output.dir)?;
    Ok((dataset, files))
}
