//! One annotator's labeling session over a single pool manifest.
//!
//! All state changes go through [`Event`]s: a command validates, appends its
//! event to the log, then applies it. Replaying the log (optionally on top of
//! a snapshot) therefore rebuilds the exact same manifest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::Utc;
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::info;

use super::events::{self, AutoLabel, Event, EventKind, EventLog, Snapshot};
use crate::autolabel::{self, Abstention, AutoLabelError, AutoLabelResult, LabeledIndex};
use crate::model::{AnnotationMetrics, DatasetManifest, EmbeddingStore, Label, LabelOrigin, Sample};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("session is closed")]
    SessionClosed,
    #[error("sample {0:?} is not in this session's pool")]
    UnknownSample(String),
    #[error("sample {id:?} already has manual label {existing}; pass overwrite to replace it")]
    ConflictingManualLabel { id: String, existing: Label },
    #[error("cannot propagate: no manual {0} labels yet")]
    EmptySeedClass(Label),
    #[error(transparent)]
    AutoLabel(#[from] AutoLabelError),
    #[error("state persistence: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueStrategy {
    #[default]
    Random,
    /// Samples without an automatic label first, then by ascending maximum
    /// similarity to the manual set.
    LowCoverageFirst,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub target_per_class: usize,
    pub queue_strategy: QueueStrategy,
    pub similarity: f64,
    pub passes: usize,
    /// Seeds the Random queue order.
    pub queue_seed: u64,
    pub snapshot_every: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            target_per_class: 1000,
            queue_strategy: QueueStrategy::Random,
            similarity: 0.85,
            passes: 2,
            queue_seed: 0,
            snapshot_every: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum SampleStatus {
    Unlabeled,
    Auto { label: Label },
    Abstained { reason: Abstention },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub id: String,
    pub uri: String,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub sample: Sample,
    pub changed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSummary {
    pub passes: u32,
    pub assigned: usize,
    pub assigned_positive: usize,
    pub assigned_negative: usize,
    pub abstained: usize,
    /// Results dropped because the sample was labeled by hand meanwhile.
    pub skipped_manual: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    fn add(&mut self, label: Label) {
        match label {
            Label::Positive => self.positive += 1,
            Label::Negative => self.negative += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.positive + self.negative
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub session_id: String,
    pub target_per_class: usize,
    pub pool_size: usize,
    pub manual: ClassCounts,
    pub auto: ClassCounts,
    pub abstained: usize,
    pub unlabeled: usize,
    pub propagations: u64,
    pub closed: bool,
    pub metrics: AnnotationMetrics,
}

/// Frozen inputs for one propagation run, taken under the session lock.
#[derive(Debug, Clone)]
pub struct PropagationJob {
    manual: Vec<(String, Label)>,
    pool: Vec<String>,
    embeddings: Arc<EmbeddingStore>,
    similarity: f64,
    passes: usize,
    pub started_at_version: u64,
}

#[derive(Debug, Clone)]
pub struct PropagationOutcome {
    results: Vec<AutoLabelResult>,
}

impl PropagationJob {
    /// Pure computation; safe to run off the session lock.
    pub fn run(self) -> Result<PropagationOutcome, SessionError> {
        let results =
            autolabel::propagate_passes(&self.manual, &self.pool, &self.embeddings, self.similarity, self.passes)?;
        Ok(PropagationOutcome { results })
    }
}

#[derive(Debug)]
pub struct AnnotationSession {
    id: String,
    config: SessionConfig,
    samples: IndexMap<String, Sample>,
    embeddings: Arc<EmbeddingStore>,
    abstained: HashMap<String, Abstention>,
    queue_order: Vec<usize>,
    version: u64,
    propagations: u64,
    closed: bool,
    log: EventLog,
}

impl AnnotationSession {
    fn fresh(
        id: String,
        pool: &DatasetManifest,
        embeddings: Arc<EmbeddingStore>,
        config: SessionConfig,
        log: EventLog,
    ) -> Result<Self, SessionError> {
        let mut samples = IndexMap::with_capacity(pool.len());
        for s in &pool.samples {
            if !embeddings.contains(&s.id) {
                return Err(AutoLabelError::MissingEmbedding(s.id.clone()).into());
            }
            samples.insert(s.id.clone(), s.clone());
        }
        let mut queue_order: Vec<usize> = (0..samples.len()).collect();
        queue_order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.queue_seed));
        let abstained = HashMap::new();
        Ok(AnnotationSession {
            id,
            config,
            samples,
            embeddings,
            abstained,
            queue_order,
            version: 0,
            propagations: 0,
            closed: false,
            log,
        })
    }

    /// Session whose events are kept in memory only.
    pub fn in_memory(
        id: impl Into<String>,
        pool: &DatasetManifest,
        embeddings: Arc<EmbeddingStore>,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        Self::fresh(id.into(), pool, embeddings, config, EventLog::memory())
    }

    /// Opens or resumes a session persisted under `state_dir`: the latest
    /// snapshot is loaded and the events after it are replayed.
    pub fn open(
        id: impl Into<String>,
        pool: &DatasetManifest,
        embeddings: Arc<EmbeddingStore>,
        config: SessionConfig,
        state_dir: &Path,
    ) -> Result<Self, SessionError> {
        let snapshot = events::read_snapshot(state_dir)?;
        let replay = events::read_events(state_dir)?;
        let log = EventLog::open_dir(state_dir, config.snapshot_every)?;
        let mut session = Self::fresh(id.into(), pool, embeddings, config, log)?;
        if let Some(snap) = snapshot {
            session.restore(snap);
        }
        let mut replayed = 0;
        let from = session.version;
        for event in replay.iter().filter(|e| e.seq > from) {
            session.apply(event);
            replayed += 1;
        }
        if replayed > 0 {
            info!(session = %session.id, replayed, version = session.version, "session state restored");
        }
        Ok(session)
    }

    /// Rebuilds a session purely from an event sequence.
    pub fn replay(
        id: impl Into<String>,
        pool: &DatasetManifest,
        embeddings: Arc<EmbeddingStore>,
        config: SessionConfig,
        events: &[Event],
    ) -> Result<Self, SessionError> {
        let mut session = Self::in_memory(id, pool, embeddings, config)?;
        for e in events {
            session.apply(e);
        }
        Ok(session)
    }

    fn restore(&mut self, snap: Snapshot) {
        for s in snap.samples {
            if let Some(slot) = self.samples.get_mut(&s.id) {
                *slot = s;
            }
        }
        self.abstained = snap.abstained.into_iter().collect();
        self.version = snap.version;
        self.propagations = snap.propagations;
        self.closed = snap.closed;
    }

    fn snapshot(&self) -> Snapshot {
        let mut abstained: Vec<(String, Abstention)> = self.abstained.iter().map(|(k, v)| (k.clone(), *v)).collect();
        abstained.sort_by(|a, b| a.0.cmp(&b.0));
        Snapshot {
            version: self.version,
            samples: self.samples.values().cloned().collect(),
            abstained,
            propagations: self.propagations,
            closed: self.closed,
        }
    }

    fn apply(&mut self, event: &Event) {
        match &event.kind {
            EventKind::LabelSubmitted { sample_id, label, annotator, .. } => {
                if let Some(s) = self.samples.get_mut(sample_id) {
                    s.apply_label(*label, LabelOrigin::Manual, annotator.clone());
                    s.created_at = Some(event.at);
                    self.abstained.remove(sample_id);
                }
            }
            EventKind::PropagationApplied { assignments, abstained, .. } => {
                for s in self.samples.values_mut() {
                    if s.is_auto() {
                        s.clear_label();
                        s.created_at = None;
                    }
                }
                for a in assignments {
                    if let Some(s) = self.samples.get_mut(&a.id) {
                        s.apply_label(a.label, LabelOrigin::Auto, None);
                    }
                }
                self.abstained = abstained
                    .iter()
                    .filter(|(id, _)| self.samples.get(id).is_some_and(|s| !s.is_manual()))
                    .cloned()
                    .collect();
                self.propagations += 1;
            }
            EventKind::Closed => self.closed = true,
        }
        self.version = event.seq;
    }

    fn commit(&mut self, kind: EventKind) -> Result<(), SessionError> {
        let event = Event { seq: self.version + 1, at: Utc::now(), kind };
        self.log.append(&event)?;
        self.apply(&event);
        if self.log.wants_snapshot(self.version) {
            self.log.write_snapshot(&self.snapshot())?;
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Events recorded so far, for in-memory sessions.
    pub fn events(&self) -> Option<&[Event]> {
        self.log.events()
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest::corpus(self.samples.values().cloned().collect())
    }

    pub fn sample(&self, id: &str) -> Option<&Sample> {
        self.samples.get(id)
    }

    fn status(&self, s: &Sample) -> SampleStatus {
        if s.is_auto() {
            SampleStatus::Auto { label: s.label.expect("auto implies label") }
        } else if let Some(reason) = self.abstained.get(&s.id) {
            SampleStatus::Abstained { reason: *reason }
        } else {
            SampleStatus::Unlabeled
        }
    }

    fn manual_labels(&self) -> Vec<(String, Label)> {
        self.samples
            .values()
            .filter(|s| s.is_manual())
            .map(|s| (s.id.clone(), s.label.expect("manual implies label")))
            .collect()
    }

    /// Up to `n` samples that have no manual label, in queue order.
    pub fn next_batch(&self, n: usize) -> Result<Vec<QueueItem>, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        let candidates: Vec<&Sample> = match self.config.queue_strategy {
            QueueStrategy::Random => self
                .queue_order
                .iter()
                .map(|&i| &self.samples[i])
                .filter(|s| !s.is_manual())
                .take(n)
                .collect(),
            QueueStrategy::LowCoverageFirst => {
                let manual = self.manual_labels();
                let index =
                    LabeledIndex::from_store(&self.embeddings, manual.iter().map(|(id, l)| (id.as_str(), *l)))?;
                let mut ranked: Vec<(bool, f64, usize, &Sample)> = Vec::new();
                for (pos, s) in self.samples.values().enumerate() {
                    if s.is_manual() {
                        continue;
                    }
                    let v = self.embeddings.get(&s.id).expect("pool rows checked at open");
                    let max_sim = index.max_similarity(v)?.unwrap_or(f64::NEG_INFINITY);
                    ranked.push((s.is_auto(), max_sim, pos, s));
                }
                ranked.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
                ranked.into_iter().take(n).map(|r| r.3).collect()
            }
        };
        Ok(candidates
            .into_iter()
            .map(|s| QueueItem { id: s.id.clone(), uri: s.uri.clone(), status: self.status(s) })
            .collect())
    }

    /// Records a manual label. Resubmitting the same label is a no-op; a
    /// different manual label is only replaced with `overwrite`.
    pub fn submit_label(
        &mut self,
        sample_id: &str,
        label: Label,
        annotator: Option<String>,
        overwrite: bool,
    ) -> Result<SubmitOutcome, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        let current = self.samples.get(sample_id).ok_or_else(|| SessionError::UnknownSample(sample_id.to_string()))?;
        if current.is_manual() {
            let existing = current.label.expect("manual implies label");
            if existing == label {
                return Ok(SubmitOutcome { sample: current.clone(), changed: false });
            }
            if !overwrite {
                return Err(SessionError::ConflictingManualLabel { id: sample_id.to_string(), existing });
            }
        }
        self.commit(EventKind::LabelSubmitted { sample_id: sample_id.to_string(), label, annotator, overwrite })?;
        Ok(SubmitOutcome { sample: self.samples[sample_id].clone(), changed: true })
    }

    /// Freezes the current manual labels into a job.
    pub fn begin_propagation(&self) -> Result<PropagationJob, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        let manual = self.manual_labels();
        for label in Label::ALL {
            if !manual.iter().any(|(_, l)| *l == label) {
                return Err(SessionError::EmptySeedClass(label));
            }
        }
        let pool = self.samples.values().filter(|s| !s.is_manual()).map(|s| s.id.clone()).collect();
        Ok(PropagationJob {
            manual,
            pool,
            embeddings: Arc::clone(&self.embeddings),
            similarity: self.config.similarity,
            passes: self.config.passes,
            started_at_version: self.version,
        })
    }

    /// Replaces all automatic labels with the job's results. Samples labeled
    /// by hand after the job started keep their manual label.
    pub fn apply_propagation(&mut self, outcome: PropagationOutcome) -> Result<PropagationSummary, SessionError> {
        if self.closed {
            return Err(SessionError::SessionClosed);
        }
        let merged = AutoLabelResult::merge(&outcome.results);
        let mut assignments = Vec::with_capacity(merged.assignments.len());
        let mut skipped_manual = 0;
        let pass_of: HashMap<&str, u32> = outcome
            .results
            .iter()
            .flat_map(|r| r.assignments.keys().map(move |id| (id.as_str(), r.pass_index)))
            .collect();
        let mut summary = PropagationSummary {
            passes: outcome.results.len() as u32,
            assigned: 0,
            assigned_positive: 0,
            assigned_negative: 0,
            abstained: 0,
            skipped_manual: 0,
        };
        for (id, a) in &merged.assignments {
            if self.samples.get(id).is_some_and(|s| s.is_manual()) {
                skipped_manual += 1;
                continue;
            }
            match a.label {
                Label::Positive => summary.assigned_positive += 1,
                Label::Negative => summary.assigned_negative += 1,
            }
            assignments.push(AutoLabel { id: id.clone(), label: a.label, pass: pass_of[id.as_str()] });
        }
        let abstained: Vec<(String, Abstention)> = merged
            .abstained
            .iter()
            .filter(|(id, _)| {
                let manual = self.samples.get(*id).is_some_and(|s| s.is_manual());
                skipped_manual += manual as usize;
                !manual
            })
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        summary.assigned = assignments.len();
        summary.abstained = abstained.len();
        summary.skipped_manual = skipped_manual;
        self.commit(EventKind::PropagationApplied { passes: summary.passes, assignments, abstained })?;
        Ok(summary)
    }

    pub fn trigger_propagation(&mut self) -> Result<PropagationSummary, SessionError> {
        let outcome = self.begin_propagation()?.run()?;
        self.apply_propagation(outcome)
    }

    pub fn close(&mut self) -> Result<(), SessionError> {
        if !self.closed {
            self.commit(EventKind::Closed)?;
        }
        Ok(())
    }

    pub fn stats(&self) -> SessionStats {
        let mut manual = ClassCounts::default();
        let mut auto = ClassCounts::default();
        for s in self.samples.values() {
            match (s.label, s.label_origin) {
                (Some(l), Some(LabelOrigin::Manual)) => manual.add(l),
                (Some(l), Some(LabelOrigin::Auto)) => auto.add(l),
                _ => {}
            }
        }
        let abstained = self.abstained.len();
        let labeled = manual.total() + auto.total();
        SessionStats {
            session_id: self.id.clone(),
            target_per_class: self.config.target_per_class,
            pool_size: self.samples.len(),
            manual,
            auto,
            abstained,
            unlabeled: self.samples.len() - labeled,
            propagations: self.propagations,
            closed: self.closed,
            metrics: AnnotationMetrics::from_counts(manual.total(), auto.total()),
        }
    }

    /// Directory-backed sessions write a final snapshot on request.
    pub fn checkpoint(&self) -> Result<(), SessionError> {
        Ok(self.log.write_snapshot(&self.snapshot())?)
    }
}

/// Key identifying a pool manifest, used to stop two sessions sharing one.
pub fn pool_key(path: &Path) -> PathBuf {
    path.canonicalize().unwrap_or_else(|_| path.to_path_buf())
}
