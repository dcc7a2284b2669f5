//! Ground-truth synthetic corpora and evaluation helpers.
//!
//! Cluster samples are drawn as `normalize(center + spread · g)` with `g`
//! standard normal, an inexpensive stand-in for a von Mises–Fisher
//! distribution. Fixtures are calibrated on measured similarity percentiles
//! rather than on a closed-form concentration.

use std::path::Path;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autolabel::{self, AutoLabelError, AutoLabelResult};
use crate::diversity::{self, CandidatePool, DiversityError, SelectOptions};
use crate::model::{DatasetManifest, EmbeddingStore, Label, LabelOrigin, Sample};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("sample {0:?} has no ground-truth label")]
    IdMismatch(String),
    #[error(transparent)]
    AutoLabel(#[from] AutoLabelError),
    #[error(transparent)]
    Diversity(#[from] DiversityError),
    #[error("bench spec: {0}")]
    BenchSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    /// Direction of the cluster mean; normalized on use.
    pub center: Vec<f64>,
    /// Standard deviation of the per-coordinate Gaussian perturbation.
    pub spread: f64,
    pub count: usize,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub clusters: Vec<ClusterSpec>,
    /// Fraction of each cluster whose true label is flipped.
    #[serde(default)]
    pub contamination: f64,
    pub dim: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Generated corpus; `truth` is never written into `manifest`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub manifest: DatasetManifest,
    pub embeddings: EmbeddingStore,
    pub truth: IndexMap<String, Label>,
    /// Cluster index per sample, in manifest order.
    pub cluster: Vec<usize>,
}

impl SyntheticCorpus {
    pub fn ids(&self) -> Vec<String> {
        self.manifest.samples.iter().map(|s| s.id.clone()).collect()
    }

    pub fn ids_in_cluster(&self, c: usize) -> Vec<String> {
        self.manifest
            .samples
            .iter()
            .zip(&self.cluster)
            .filter(|(_, &k)| k == c)
            .map(|(s, _)| s.id.clone())
            .collect()
    }

    /// `per_class` random ids of each true class, as a manual seed manifest.
    pub fn seed_manifest(&self, per_class: usize, seed: u64) -> DatasetManifest {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen = Vec::new();
        for label in Label::ALL {
            let mut ids: Vec<&String> = self.truth.iter().filter(|(_, l)| **l == label).map(|(id, _)| id).collect();
            ids.shuffle(&mut rng);
            ids.truncate(per_class);
            chosen.extend(ids.into_iter().map(|id| (id.clone(), label)));
        }
        let samples = chosen
            .into_iter()
            .map(|(id, label)| {
                let uri = format!("synth://{id}");
                let mut s = Sample::new(id, uri).with_label(label, LabelOrigin::Manual);
                s.annotator = Some("synthetic-oracle".into());
                s
            })
            .collect();
        DatasetManifest::corpus(samples)
    }
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

pub fn generate_synthetic_corpus(spec: &CorpusSpec) -> Result<SyntheticCorpus, SynthError> {
    if spec.dim == 0 {
        return Err(SynthError::InvalidSpec("dim must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.contamination) {
        return Err(SynthError::InvalidSpec("contamination must lie in [0, 1]".into()));
    }
    if spec.clusters.is_empty() {
        return Err(SynthError::InvalidSpec("at least one cluster is required".into()));
    }
    let mut centers = Vec::with_capacity(spec.clusters.len());
    for (i, c) in spec.clusters.iter().enumerate() {
        if c.center.len() != spec.dim {
            return Err(SynthError::InvalidSpec(format!("cluster {i} center has wrong dimension")));
        }
        if c.count == 0 {
            return Err(SynthError::InvalidSpec(format!("cluster {i} is empty")));
        }
        if !(c.spread >= 0.0 && c.spread.is_finite()) {
            return Err(SynthError::InvalidSpec(format!("cluster {i} spread must be non-negative")));
        }
        centers.push(unit(&c.center).ok_or_else(|| SynthError::InvalidSpec(format!("cluster {i} center is zero")))?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total: usize = spec.clusters.iter().map(|c| c.count).sum();
    let mut embeddings = EmbeddingStore::with_capacity(spec.dim, total).expect("dim checked");
    let mut samples = Vec::with_capacity(total);
    let mut truth = IndexMap::with_capacity(total);
    let mut cluster = Vec::with_capacity(total);
    let mut point = vec![0f64; spec.dim];
    let mut row = vec![0f32; spec.dim];

    for (ci, (c, center)) in spec.clusters.iter().zip(&centers).enumerate() {
        let flipped = (c.count as f64 * spec.contamination).round() as usize;
        for j in 0..c.count {
            let id = format!("s{:06}", samples.len());
            loop {
                for (p, m) in point.iter_mut().zip(center) {
                    let g: f64 = rng.sample(StandardNormal);
                    *p = m + c.spread * g;
                }
                if let Some(u) = unit(&point) {
                    for (r, x) in row.iter_mut().zip(&u) {
                        *r = *x as f32;
                    }
                    if row.iter().any(|&x| x != 0.0) {
                        break;
                    }
                }
            }
            embeddings.push(id.clone(), &row).expect("unit rows are valid");
            let label = if j < flipped { c.label.opposite() } else { c.label };
            truth.insert(id.clone(), label);
            samples.push(Sample::new(id.clone(), format!("synth://{id}")));
            cluster.push(ci);
        }
    }
    Ok(SyntheticCorpus { manifest: DatasetManifest::corpus(samples), embeddings, truth, cluster })
}

/// Empirical `q`-quantile of pairwise cosine similarity within `ids`.
/// Samples at most `max_pairs` pairs, chosen deterministically.
pub fn similarity_quantile(store: &EmbeddingStore, ids: &[String], q: f64, max_pairs: usize) -> f64 {
    let mut sims = Vec::new();
    let n = ids.len();
    let total = n * n.saturating_sub(1) / 2;
    let step = (total / max_pairs.max(1)).max(1);
    let mut k = 0usize;
    'outer: for i in 0..n {
        for j in i + 1..n {
            if k.is_multiple_of(step) {
                let s = autolabel::cosine_similarity(store.get(&ids[i]).unwrap(), store.get(&ids[j]).unwrap()).unwrap();
                sims.push(s);
                if sims.len() >= max_pairs {
                    break 'outer;
                }
            }
            k += 1;
        }
    }
    quantile(&mut sims, q)
}

/// Empirical quantile of cosine similarity between two id sets.
pub fn cross_similarity_quantile(store: &EmbeddingStore, a: &[String], b: &[String], q: f64) -> f64 {
    let mut sims = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            sims.push(autolabel::cosine_similarity(store.get(x).unwrap(), store.get(y).unwrap()).unwrap());
        }
    }
    quantile(&mut sims, q)
}

fn quantile(v: &mut [f64], q: f64) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((v.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    v[idx]
}

/// Largest spread (by bisection) for which a single generated cluster of
/// `count` points in `dim` dimensions still has its 5th-percentile pairwise
/// similarity at or above `target`.
pub fn calibrate_spread(dim: usize, count: usize, target: f64, seed: u64) -> f64 {
    let mut center = vec![0.0; dim];
    center[0] = 1.0;
    let p5 = |spread: f64| {
        let spec = CorpusSpec {
            clusters: vec![ClusterSpec { center: center.clone(), spread, count, label: Label::Positive }],
            contamination: 0.0,
            dim,
            seed,
        };
        let c = generate_synthetic_corpus(&spec).expect("valid calibration spec");
        similarity_quantile(&c.embeddings, &c.ids(), 0.05, 20_000)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if p5(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoLabelEvaluation {
    /// Over assigned samples only; absent when nothing was assigned.
    pub accuracy: Option<f64>,
    pub coverage: f64,
    pub abstention_rate: f64,
    pub assigned: usize,
    pub abstained: usize,
    pub confusion: Confusion,
}

pub fn evaluate_autolabel(
    result: &AutoLabelResult,
    truth: &IndexMap<String, Label>,
) -> Result<AutoLabelEvaluation, SynthError> {
    let mut confusion = Confusion::default();
    for (id, a) in &result.assignments {
        let t = *truth.get(id).ok_or_else(|| SynthError::IdMismatch(id.clone()))?;
        match (a.label, t) {
            (Label::Positive, Label::Positive) => confusion.true_positive += 1,
            (Label::Positive, Label::Negative) => confusion.false_positive += 1,
            (Label::Negative, Label::Negative) => confusion.true_negative += 1,
            (Label::Negative, Label::Positive) => confusion.false_negative += 1,
        }
    }
    if let Some(id) = result.abstained.keys().find(|id| !truth.contains_key(*id)) {
        return Err(SynthError::IdMismatch(id.clone()));
    }
    let assigned = result.assignments.len();
    let abstained = result.abstained.len();
    let pool = assigned + abstained;
    let correct = confusion.true_positive + confusion.true_negative;
    let frac = |n: usize| if pool == 0 { 0.0 } else { n as f64 / pool as f64 };
    Ok(AutoLabelEvaluation {
        accuracy: (assigned > 0).then(|| correct as f64 / assigned as f64),
        coverage: frac(assigned),
        abstention_rate: frac(abstained),
        assigned,
        abstained,
        confusion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub selected_score: f64,
    pub mean_random_score: f64,
    /// Present when the pool is small enough to enumerate every subset.
    pub exhaustive_max: Option<f64>,
    /// Every candidate subset scores zero.
    pub degenerate: bool,
}

/// Subsets enumerated at most by [`compare_diversity`].
pub const EXHAUSTIVE_LIMIT: u128 = 200_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Compares the best-of-`draws` selection against `trials` single random
/// draws and, on small pools, against the exhaustive optimum.
pub fn compare_diversity(
    pool: &CandidatePool,
    k: usize,
    draws: u64,
    seed: u64,
    trials: usize,
) -> Result<DiversityReport, SynthError> {
    let selection = diversity::select_diverse_subset(pool, k, draws, seed, SelectOptions::default())?;
    // Baseline draws come from a different seed so they are not a prefix of the search.
    let baseline_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let trials = trials.max(1);
    let mut sum = 0.0;
    for t in 0..trials as u64 {
        sum += pool.score_indices(&diversity::draw_subset(pool.len(), k, baseline_seed, t))?;
    }
    let mean_random_score = sum / trials as f64;

    let exhaustive_max = (binomial(pool.len(), k) <= EXHAUSTIVE_LIMIT).then(|| {
        let mut best = f64::MIN;
        for_each_combination(pool.len(), k, |c| {
            best = best.max(pool.score_indices(c).expect("k >= 1"));
        });
        best
    });
    let degenerate = exhaustive_max.map_or(selection.score == 0.0, |m| m == 0.0);
    Ok(DiversityReport { selected_score: selection.score, mean_random_score, exhaustive_max, degenerate })
}

/// `cmrf bench` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSpec {
    pub corpus: CorpusSpec,
    #[serde(default = "default_seed_per_class")]
    pub seed_per_class: usize,
    #[serde(default = "default_similarity")]
    pub similarity: f64,
    #[serde(default = "default_passes")]
    pub passes: usize,
    #[serde(default)]
    pub diversity: Option<BenchDiversity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchDiversity {
    pub k: usize,
    pub draws: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_seed_per_class() -> usize {
    20
}
fn default_similarity() -> f64 {
    0.85
}
fn default_passes() -> usize {
    2
}
fn default_trials() -> usize {
    1000
}

impl BenchSpec {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| SynthError::BenchSpec(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassReport {
    pub pass_index: u32,
    pub assigned: usize,
    pub abstained: usize,
}

/// `cmrf bench` output; the schema is described in `docs/bench-report.md`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pool_size: usize,
    pub seed_size: usize,
    pub passes: Vec<PassReport>,
    pub autolabel: AutoLabelEvaluation,
    pub metrics: crate::model::AnnotationMetrics,
    pub diversity: Option<DiversityReport>,
}

/// Generates the corpus, seeds it from ground truth, propagates and scores.
/// Diversity is compared over the true negatives of the pool.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport, SynthError> {
    let corpus = generate_synthetic_corpus(&spec.corpus)?;
    let seed = corpus.seed_manifest(spec.seed_per_class, spec.corpus.seed.wrapping_add(1));
    let manual: Vec<(String, Label)> = seed.samples.iter().map(|s| (s.id.clone(), s.label.unwrap())).collect();
    let pool = corpus.ids();
    let passes = autolabel::propagate_passes(&manual, &pool, &corpus.embeddings, spec.similarity, spec.passes)?;
    let merged = AutoLabelResult::merge(&passes);
    let autolabel = evaluate_autolabel(&merged, &corpus.truth)?;
    let metrics = crate::model::AnnotationMetrics::from_counts(manual.len(), merged.assignments.len());

    let diversity = match &spec.diversity {
        Some(d) => {
            let negatives: Vec<String> =
                corpus.truth.iter().filter(|(_, l)| **l == Label::Negative).map(|(id, _)| id.clone()).collect();
            let cands = CandidatePool::from_store(&corpus.embeddings, &negatives)?;
            Some(compare_diversity(&cands, d.k, d.draws, d.seed, d.trials)?)
        }
        None => None,
    };
    Ok(BenchReport {
        pool_size: pool.len(),
        seed_size: manual.len(),
        passes: passes
            .iter()
            .map(|p| PassReport { pass_index: p.pass_index, assigned: p.assignments.len(), abstained: p.abstained.len() })
            .collect(),
        autolabel,
        metrics,
        diversity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autolabel::{Abstention, Assignment};

    fn axis(dim: usize, i: usize, sign: f64) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = sign;
        v
    }

    fn two_clusters(spread: f64, seed: u64) -> CorpusSpec {
        CorpusSpec {
            clusters: vec![
                ClusterSpec { center: axis(8, 0, 1.0), spread, count: 30, label: Label::Positive },
                ClusterSpec { center: axis(8, 0, -1.0), spread, count: 30, label: Label::Negative },
            ],
            contamination: 0.0,
            dim: 8,
            seed,
        }
    }

    #[test]
    fn antipodal_limit() {
        let c = generate_synthetic_corpus(&two_clusters(0.0, 1)).unwrap();
        let a = c.ids_in_cluster(0);
        let b = c.ids_in_cluster(1);
        assert_eq!(similarity_quantile(&c.embeddings, &a, 0.0, 1000), 1.0);
        assert_eq!(cross_similarity_quantile(&c.embeddings, &a, &b, 1.0), -1.0);
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let a = generate_synthetic_corpus(&two_clusters(0.1, 5)).unwrap();
        let b = generate_synthetic_corpus(&two_clusters(0.1, 5)).unwrap();
        assert_eq!(a, b);
        for (_, v) in a.embeddings.iter() {
            let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
        assert!(a.manifest.samples.iter().all(|s| s.label.is_none()));
    }

    #[test]
    fn calibrated_spread_meets_target() {
        let spread = calibrate_spread(16, 100, 0.9, 3);
        assert!(spread > 0.0);
        let spec = CorpusSpec {
            clusters: vec![ClusterSpec { center: axis(16, 0, 1.0), spread, count: 100, label: Label::Positive }],
            contamination: 0.0,
            dim: 16,
            seed: 3,
        };
        let c = generate_synthetic_corpus(&spec).unwrap();
        assert!(similarity_quantile(&c.embeddings, &c.ids(), 0.05, 20_000) >= 0.9);
    }

    #[test]
    fn contamination_flips_labels() {
        let mut spec = two_clusters(0.05, 2);
        spec.contamination = 0.1;
        let c = generate_synthetic_corpus(&spec).unwrap();
        let flipped = c.ids_in_cluster(0).iter().filter(|id| c.truth[*id] == Label::Negative).count();
        assert_eq!(flipped, 3);
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_clusters(0.1, 0);
        s.clusters[0].center = vec![0.0; 8];
        assert!(matches!(generate_synthetic_corpus(&s), Err(SynthError::InvalidSpec(_))));
        let mut s = two_clusters(0.1, 0);
        s.clusters[1].count = 0;
        assert!(generate_synthetic_corpus(&s).is_err());
    }

    fn result(assign: &[(&str, Label)], abstain: &[&str]) -> AutoLabelResult {
        let mut r = AutoLabelResult::empty(1);
        for (id, l) in assign {
            r.assignments.insert(id.to_string(), Assignment { label: *l, positive_votes: 1, negative_votes: 0 });
        }
        for id in abstain {
            r.abstained.insert(id.to_string(), Abstention::NoNeighborInRadius);
        }
        r
    }

    #[test]
    fn evaluation_arithmetic() {
        let truth: IndexMap<String, Label> = (0..10).map(|i| (format!("x{i}"), Label::Positive)).collect();
        let names: Vec<String> = (0..10).map(|i| format!("x{i}")).collect();
        let mut assign: Vec<(&str, Label)> = names.iter().map(|n| (n.as_str(), Label::Positive)).collect();
        assert_eq!(evaluate_autolabel(&result(&assign, &[]), &truth).unwrap().accuracy, Some(1.0));
        assign[3].1 = Label::Negative;
        let e = evaluate_autolabel(&result(&assign, &[]), &truth).unwrap();
        assert!((e.accuracy.unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(e.confusion.false_negative, 1);

        let none = evaluate_autolabel(&result(&[], &["x0", "x1"]), &truth).unwrap();
        assert_eq!((none.accuracy, none.coverage, none.abstention_rate), (None, 0.0, 1.0));
        assert!(matches!(evaluate_autolabel(&result(&[("zz", Label::Positive)], &[]), &truth), Err(SynthError::IdMismatch(_))));
    }

    #[test]
    fn degenerate_pool_flagged() {
        let rows = vec![vec![1.0f32, 2.0]; 6];
        let pool = CandidatePool::from_rows((0..6).map(|i| i.to_string()).collect(), &rows).unwrap();
        let r = compare_diversity(&pool, 3, 100, 0, 10).unwrap();
        assert!(r.degenerate);
        assert_eq!((r.selected_score, r.mean_random_score, r.exhaustive_max), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn more_draws_never_score_lower() {
        let c = generate_synthetic_corpus(&two_clusters(0.3, 8)).unwrap();
        let pool = CandidatePool::from_store(&c.embeddings, &c.ids()).unwrap();
        let one = compare_diversity(&pool, 5, 1, 4, 100).unwrap();
        let many = compare_diversity(&pool, 5, 10_000, 4, 100).unwrap();
        assert!(many.selected_score >= one.selected_score);
        assert!(many.selected_score >= many.mean_random_score);
        assert_eq!(many.exhaustive_max, None);
    }

    #[test]
    fn combinations_enumerated() {
        let mut n = 0;
        for_each_combination(8, 3, |_| n += 1);
        assert_eq!(n, 56);
        assert_eq!(binomial(8, 3), 56);
    }
}
