//! Label propagation from a manually labeled seed to an unlabeled pool with a
//! radius near-neighbors classifier over cosine similarity.
//!
//! A labeled sample `j` is a neighbor of query `q` iff `cos(q, j) >= a`, i.e.
//! its cosine distance `1 - cos` is at most `1 - a`. A pool sample takes the
//! strict-majority label of its neighbors; it abstains when it has none or
//! when the vote is tied. Votes are unweighted.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EmbeddingStore, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutoLabelError {
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("no embedding for sample {0:?}")]
    MissingEmbedding(String),
    #[error("the labeled seed has no {0} samples")]
    EmptySeedClass(Label),
    #[error("similarity threshold {0} must lie strictly between 0 and 1")]
    InvalidRadius(f64),
}

pub(crate) fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&x, &y)| x as f64 * y as f64).sum()
}

pub(crate) fn norm(u: &[f32]) -> f64 {
    u.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn cosine_with_norms(u: &[f32], nu: f64, v: &[f32], nv: f64) -> f64 {
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// `u·v / (‖u‖‖v‖)`, accumulated in f64.
pub fn cosine_similarity(u: &[f32], v: &[f32]) -> Result<f64, AutoLabelError> {
    if u.len() != v.len() {
        return Err(AutoLabelError::DimMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(AutoLabelError::ZeroNorm);
    }
    Ok(cosine_with_norms(u, nu, v, nv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub id: String,
    pub similarity: f64,
    pub label: Label,
}

/// Labeled vectors with cached norms.
#[derive(Debug, Clone)]
pub struct LabeledIndex {
    dim: usize,
    ids: Vec<String>,
    labels: Vec<Label>,
    data: Vec<f32>,
    norms: Vec<f64>,
}

impl LabeledIndex {
    pub fn new(dim: usize) -> Self {
        LabeledIndex { dim, ids: Vec::new(), labels: Vec::new(), data: Vec::new(), norms: Vec::new() }
    }

    /// Builds an index from `(id, label)` pairs, looking vectors up in `store`.
    pub fn from_store<'a>(
        store: &EmbeddingStore,
        labeled: impl IntoIterator<Item = (&'a str, Label)>,
    ) -> Result<Self, AutoLabelError> {
        let mut index = Self::new(store.dim());
        for (id, label) in labeled {
            let v = store.get(id).ok_or_else(|| AutoLabelError::MissingEmbedding(id.to_string()))?;
            index.push(id, v, label)?;
        }
        Ok(index)
    }

    pub fn push(&mut self, id: &str, vector: &[f32], label: Label) -> Result<(), AutoLabelError> {
        if vector.len() != self.dim {
            return Err(AutoLabelError::DimMismatch(self.dim, vector.len()));
        }
        let n = norm(vector);
        if n == 0.0 {
            return Err(AutoLabelError::ZeroNorm);
        }
        self.ids.push(id.to_string());
        self.labels.push(label);
        self.data.extend_from_slice(vector);
        self.norms.push(n);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn similarities<'s>(&'s self, query: &'s [f32], nq: f64) -> impl Iterator<Item = (usize, f64)> + 's {
        (0..self.len()).map(move |i| (i, cosine_with_norms(query, nq, self.row(i), self.norms[i])))
    }

    fn check_query(&self, query: &[f32]) -> Result<f64, AutoLabelError> {
        if query.len() != self.dim {
            return Err(AutoLabelError::DimMismatch(query.len(), self.dim));
        }
        let nq = norm(query);
        if nq == 0.0 {
            return Err(AutoLabelError::ZeroNorm);
        }
        Ok(nq)
    }

    /// `(positive, negative)` neighbor counts within the radius.
    fn votes(&self, query: &[f32], a: f64) -> Result<(u32, u32), AutoLabelError> {
        let nq = self.check_query(query)?;
        let mut pos = 0;
        let mut neg = 0;
        for (i, s) in self.similarities(query, nq) {
            if s >= a {
                match self.labels[i] {
                    Label::Positive => pos += 1,
                    Label::Negative => neg += 1,
                }
            }
        }
        Ok((pos, neg))
    }

    /// Highest similarity between `query` and any labeled vector, or `None`
    /// for an empty index.
    pub fn max_similarity(&self, query: &[f32]) -> Result<Option<f64>, AutoLabelError> {
        let nq = self.check_query(query)?;
        Ok(self.similarities(query, nq).map(|(_, s)| s).reduce(f64::max))
    }
}

/// Every labeled vector within similarity `a` of `query`, in index order.
pub fn radius_neighbors(query: &[f32], labeled: &LabeledIndex, a: f64) -> Result<Vec<Neighbor>, AutoLabelError> {
    check_radius(a)?;
    let nq = labeled.check_query(query)?;
    Ok(labeled
        .similarities(query, nq)
        .filter(|&(_, s)| s >= a)
        .map(|(i, s)| Neighbor { id: labeled.ids[i].clone(), similarity: s, label: labeled.labels[i] })
        .collect())
}

fn check_radius(a: f64) -> Result<(), AutoLabelError> {
    if a > 0.0 && a < 1.0 {
        Ok(())
    } else {
        Err(AutoLabelError::InvalidRadius(a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub label: Label,
    pub positive_votes: u32,
    pub negative_votes: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Abstention {
    NoNeighborInRadius,
    TieVote,
}

/// Output of one propagation pass, keyed in pool order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoLabelResult {
    pub pass_index: u32,
    pub assignments: IndexMap<String, Assignment>,
    pub abstained: IndexMap<String, Abstention>,
}

impl AutoLabelResult {
    pub fn empty(pass_index: u32) -> Self {
        AutoLabelResult { pass_index, assignments: IndexMap::new(), abstained: IndexMap::new() }
    }

    pub fn count(&self, label: Label) -> usize {
        self.assignments.values().filter(|a| a.label == label).count()
    }

    pub fn abstained_ids(&self) -> Vec<String> {
        self.abstained.keys().cloned().collect()
    }

    /// Folds successive passes into one result: the union of assignments and
    /// the abstentions left after the last pass.
    pub fn merge(passes: &[AutoLabelResult]) -> AutoLabelResult {
        let mut merged = AutoLabelResult::empty(passes.last().map_or(0, |p| p.pass_index));
        for pass in passes {
            for (id, a) in &pass.assignments {
                merged.assignments.entry(id.clone()).or_insert(*a);
            }
        }
        if let Some(last) = passes.last() {
            merged.abstained = last
                .abstained
                .iter()
                .filter(|(id, _)| !merged.assignments.contains_key(*id))
                .map(|(k, v)| (k.clone(), *v))
                .collect();
        }
        merged
    }
}

fn decide(pos: u32, neg: u32) -> Result<Assignment, Abstention> {
    match (pos, neg) {
        (0, 0) => Err(Abstention::NoNeighborInRadius),
        (p, n) if p > n => Ok(Assignment { label: Label::Positive, positive_votes: p, negative_votes: n }),
        (p, n) if n > p => Ok(Assignment { label: Label::Negative, positive_votes: p, negative_votes: n }),
        _ => Err(Abstention::TieVote),
    }
}

/// Classifies each query id against a frozen labeled index. Queries are
/// independent, so they are evaluated in parallel; output order follows input.
pub fn classify_pool(
    index: &LabeledIndex,
    pool: &[String],
    embeddings: &EmbeddingStore,
    a: f64,
    pass_index: u32,
) -> Result<AutoLabelResult, AutoLabelError> {
    check_radius(a)?;
    let outcomes: Vec<Result<Assignment, Abstention>> = pool
        .par_iter()
        .map(|id| {
            let v = embeddings.get(id).ok_or_else(|| AutoLabelError::MissingEmbedding(id.clone()))?;
            let (pos, neg) = index.votes(v, a)?;
            Ok(decide(pos, neg))
        })
        .collect::<Result<_, AutoLabelError>>()?;

    let mut result = AutoLabelResult::empty(pass_index);
    for (id, outcome) in pool.iter().zip(outcomes) {
        match outcome {
            Ok(assignment) => {
                result.assignments.insert(id.clone(), assignment);
            }
            Err(reason) => {
                result.abstained.insert(id.clone(), reason);
            }
        }
    }
    Ok(result)
}

fn seed_index(
    manual: &[(String, Label)],
    embeddings: &EmbeddingStore,
) -> Result<LabeledIndex, AutoLabelError> {
    let index = LabeledIndex::from_store(embeddings, manual.iter().map(|(id, l)| (id.as_str(), *l)))?;
    for label in Label::ALL {
        if index.count(label) == 0 {
            return Err(AutoLabelError::EmptySeedClass(label));
        }
    }
    Ok(index)
}

/// Pool ids in first-seen order, without duplicates or excluded ids.
fn clean_pool(pool: &[String], exclude: &HashSet<&str>) -> Vec<String> {
    let mut seen = HashSet::new();
    pool.iter()
        .filter(|id| !exclude.contains(id.as_str()) && seen.insert(id.as_str()))
        .cloned()
        .collect()
}

/// First propagation pass: label `pool` from the manual seed `manual`.
///
/// Pool ids that are themselves in the seed are skipped; every other pool id
/// ends up in exactly one of `assignments` or `abstained`.
pub fn propagate_labels(
    manual: &[(String, Label)],
    pool: &[String],
    embeddings: &EmbeddingStore,
    a: f64,
) -> Result<AutoLabelResult, AutoLabelError> {
    check_radius(a)?;
    let index = seed_index(manual, embeddings)?;
    let seeded: HashSet<&str> = manual.iter().map(|(id, _)| id.as_str()).collect();
    classify_pool(&index, &clean_pool(pool, &seeded), embeddings, a, 1)
}

/// Re-runs propagation on `remaining` with the manual seed plus every label
/// assigned by `first` as voters. Labels assigned earlier are never revisited.
pub fn second_pass(
    first: &AutoLabelResult,
    manual: &[(String, Label)],
    remaining: &[String],
    embeddings: &EmbeddingStore,
    a: f64,
) -> Result<AutoLabelResult, AutoLabelError> {
    check_radius(a)?;
    let mut index = seed_index(manual, embeddings)?;
    for (id, assignment) in &first.assignments {
        let v = embeddings.get(id).ok_or_else(|| AutoLabelError::MissingEmbedding(id.clone()))?;
        index.push(id, v, assignment.label)?;
    }
    let mut labeled: HashSet<&str> = manual.iter().map(|(id, _)| id.as_str()).collect();
    labeled.extend(first.assignments.keys().map(String::as_str));
    classify_pool(&index, &clean_pool(remaining, &labeled), embeddings, a, first.pass_index + 1)
}

/// Runs `passes` propagation passes, each one voting with everything labeled
/// so far and targeting what the previous pass abstained on.
pub fn propagate_passes(
    manual: &[(String, Label)],
    pool: &[String],
    embeddings: &EmbeddingStore,
    a: f64,
    passes: usize,
) -> Result<Vec<AutoLabelResult>, AutoLabelError> {
    let mut results = vec![propagate_labels(manual, pool, embeddings, a)?];
    for _ in 1..passes.max(1) {
        let merged = AutoLabelResult::merge(&results);
        let next = second_pass(&merged, manual, &merged.abstained_ids(), embeddings, a)?;
        results.push(next);
    }
    Ok(results)
}

/// Per-id neighbor counts, mainly for diagnostics.
pub fn vote_table(
    index: &LabeledIndex,
    pool: &[String],
    embeddings: &EmbeddingStore,
    a: f64,
) -> Result<HashMap<String, (u32, u32)>, AutoLabelError> {
    pool.iter()
        .map(|id| {
            let v = embeddings.get(id).ok_or_else(|| AutoLabelError::MissingEmbedding(id.clone()))?;
            Ok((id.clone(), index.votes(v, a)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1., 2., 3.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1., 0.], &[0., 1.]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1., 0.], &[1., 1.]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine_similarity(&[1., 0.], &[1.]), Err(AutoLabelError::DimMismatch(2, 1)));
        assert_eq!(cosine_similarity(&[0., 0.], &[1., 1.]), Err(AutoLabelError::ZeroNorm));
    }

    #[test]
    fn radius_examples() {
        let mut idx = LabeledIndex::new(2);
        idx.push("p", &[1., 0.], Label::Positive).unwrap();
        let n = radius_neighbors(&[1., 0.], &idx, 0.85).unwrap();
        assert_eq!(n, vec![Neighbor { id: "p".into(), similarity: 1.0, label: Label::Positive }]);

        let mut idx = LabeledIndex::new(2);
        idx.push("p", &[0., 1.], Label::Positive).unwrap();
        assert!(radius_neighbors(&[1., 0.], &idx, 0.85).unwrap().is_empty());
        assert_eq!(radius_neighbors(&[1., 0.], &idx, 1.0), Err(AutoLabelError::InvalidRadius(1.0)));
    }

    #[test]
    fn radius_boundary_is_closed() {
        // cos((1,0),(3,4)) is exactly 0.6 in f64.
        let mut idx = LabeledIndex::new(2);
        idx.push("b", &[3., 4.], Label::Negative).unwrap();
        assert_eq!(cosine_similarity(&[1., 0.], &[3., 4.]).unwrap(), 0.6);
        assert_eq!(radius_neighbors(&[1., 0.], &idx, 0.6).unwrap().len(), 1);
    }

    #[test]
    fn radius_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let dim = 3;
        let mut idx = LabeledIndex::new(dim);
        let mut rows = Vec::new();
        for i in 0..50 {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            let label = if i % 2 == 0 { Label::Positive } else { Label::Negative };
            idx.push(&format!("r{i}"), &v, label).unwrap();
            rows.push(v);
        }
        let query = [0.6f32, 0.2, -0.3];
        let got: Vec<String> = radius_neighbors(&query, &idx, 0.85).unwrap().into_iter().map(|n| n.id).collect();
        let mut expected = Vec::new();
        for (i, r) in rows.iter().enumerate() {
            let d: f64 = query.iter().zip(r).map(|(a, b)| *a as f64 * *b as f64).sum();
            let nq: f64 = query.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            let nr: f64 = r.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt();
            if d / (nq * nr) >= 0.85 {
                expected.push(format!("r{i}"));
            }
        }
        assert!(!expected.is_empty());
        assert_eq!(got, expected);
    }

    /// Unit vectors in the plane at the given angles (degrees).
    fn planar(angles: &[(&str, f64)]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2).unwrap();
        for (id, deg) in angles {
            let r = deg.to_radians();
            s.push(*id, &[r.cos() as f32, r.sin() as f32]).unwrap();
        }
        s
    }

    #[test]
    fn majority_two_to_one() {
        // cos(10°) ≈ 0.985 and cos(25°) ≈ 0.906 are inside a = 0.85.
        let emb = planar(&[("q", 0.), ("p1", 10.), ("p2", -10.), ("n1", 25.), ("far", 90.)]);
        let manual = vec![
            ("p1".to_string(), Label::Positive),
            ("p2".to_string(), Label::Positive),
            ("n1".to_string(), Label::Negative),
            ("far".to_string(), Label::Negative),
        ];
        let r = propagate_labels(&manual, &ids(&["q"]), &emb, 0.85).unwrap();
        assert_eq!(
            r.assignments["q"],
            Assignment { label: Label::Positive, positive_votes: 2, negative_votes: 1 }
        );
    }

    #[test]
    fn tie_and_isolation_abstain() {
        let emb = planar(&[("q", 0.), ("iso", 180.), ("p", 10.), ("n", -10.)]);
        let manual = vec![("p".to_string(), Label::Positive), ("n".to_string(), Label::Negative)];
        let r = propagate_labels(&manual, &ids(&["q", "iso"]), &emb, 0.85).unwrap();
        assert_eq!(r.abstained["q"], Abstention::TieVote);
        assert_eq!(r.abstained["iso"], Abstention::NoNeighborInRadius);
        assert!(r.assignments.is_empty());
    }

    #[test]
    fn seed_errors() {
        let emb = planar(&[("p", 0.), ("q", 5.)]);
        let manual = vec![("p".to_string(), Label::Positive)];
        assert_eq!(
            propagate_labels(&manual, &ids(&["q"]), &emb, 0.85),
            Err(AutoLabelError::EmptySeedClass(Label::Negative))
        );
        let manual = vec![("p".to_string(), Label::Positive), ("ghost".to_string(), Label::Negative)];
        assert_eq!(
            propagate_labels(&manual, &ids(&["q"]), &emb, 0.85),
            Err(AutoLabelError::MissingEmbedding("ghost".into()))
        );
    }

    #[test]
    fn second_pass_extends_chain() {
        // 0°, 25°, 50°: adjacent pairs are at cos 25° ≈ 0.906, the ends at cos 50° ≈ 0.643.
        let emb = planar(&[("x1", 0.), ("x2", 25.), ("x3", 50.), ("neg", 180.)]);
        let c12 = cosine_similarity(emb.get("x1").unwrap(), emb.get("x2").unwrap()).unwrap();
        let c23 = cosine_similarity(emb.get("x2").unwrap(), emb.get("x3").unwrap()).unwrap();
        let c13 = cosine_similarity(emb.get("x1").unwrap(), emb.get("x3").unwrap()).unwrap();
        assert!(c12 >= 0.85 && c23 >= 0.85 && c13 < 0.85);

        let manual = vec![("x1".to_string(), Label::Positive), ("neg".to_string(), Label::Negative)];
        let pool = ids(&["x2", "x3"]);
        let first = propagate_labels(&manual, &pool, &emb, 0.85).unwrap();
        assert_eq!(first.assignments.keys().collect::<Vec<_>>(), ["x2"]);
        assert_eq!(first.abstained.keys().collect::<Vec<_>>(), ["x3"]);

        let second = second_pass(&first, &manual, &first.abstained_ids(), &emb, 0.85).unwrap();
        assert_eq!(second.pass_index, 2);
        assert_eq!(second.assignments["x3"].label, Label::Positive);
        assert_eq!(second, second_pass(&first, &manual, &first.abstained_ids(), &emb, 0.85).unwrap());
    }

    #[test]
    fn second_pass_without_abstentions_is_empty() {
        let emb = planar(&[("p", 0.), ("n", 180.), ("q", 5.)]);
        let manual = vec![("p".to_string(), Label::Positive), ("n".to_string(), Label::Negative)];
        let first = propagate_labels(&manual, &ids(&["q"]), &emb, 0.85).unwrap();
        assert!(first.abstained.is_empty());
        let second = second_pass(&first, &manual, &first.abstained_ids(), &emb, 0.85).unwrap();
        assert!(second.assignments.is_empty() && second.abstained.is_empty());
    }

    #[test]
    fn seed_ids_in_pool_are_skipped() {
        let emb = planar(&[("p", 0.), ("n", 180.), ("q", 5.)]);
        let manual = vec![("p".to_string(), Label::Positive), ("n".to_string(), Label::Negative)];
        let r = propagate_labels(&manual, &ids(&["p", "q", "q", "n"]), &emb, 0.85).unwrap();
        assert_eq!(r.assignments.len() + r.abstained.len(), 1);
    }

    fn random_store(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(dim).unwrap();
        for i in 0..n {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
            s.push(format!("v{i}"), &v).unwrap();
        }
        s
    }

    proptest! {
        #[test]
        fn scale_invariance(seed in 0u64..1000, scale in 0.01f32..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let emb = random_store(&mut rng, 40, 3);
            let mut scaled = EmbeddingStore::new(3).unwrap();
            for (id, v) in emb.iter() {
                let w: Vec<f32> = v.iter().map(|x| x * scale).collect();
                scaled.push(id, &w).unwrap();
            }
            let manual: Vec<(String, Label)> = (0..8)
                .map(|i| (format!("v{i}"), if i % 2 == 0 { Label::Positive } else { Label::Negative }))
                .collect();
            let pool: Vec<String> = (8..40).map(|i| format!("v{i}")).collect();
            let a = propagate_labels(&manual, &pool, &emb, 0.8).unwrap();
            let b = propagate_labels(&manual, &pool, &scaled, 0.8).unwrap();
            // Scaling by a non power of two perturbs the last ulp of the
            // cosine, so compare only away from the radius boundary.
            let idx = LabeledIndex::from_store(&emb, manual.iter().map(|(i, l)| (i.as_str(), *l))).unwrap();
            for id in &pool {
                let v = emb.get(id).unwrap();
                let near_boundary = idx
                    .similarities(v, norm(v))
                    .any(|(_, s)| (s - 0.8).abs() < 1e-5);
                if !near_boundary {
                    prop_assert_eq!(a.assignments.get(id), b.assignments.get(id));
                    prop_assert_eq!(a.abstained.get(id), b.abstained.get(id));
                }
            }
        }

        #[test]
        fn neighbor_sets_shrink_as_threshold_rises(seed in 0u64..1000, a1 in 0.05f64..0.95, a2 in 0.05f64..0.95) {
            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let emb = random_store(&mut rng, 30, 4);
            let idx = LabeledIndex::from_store(&emb, emb.ids()[..20].iter().map(|i| (i.as_str(), Label::Positive))).unwrap();
            for id in &emb.ids()[20..] {
                let q = emb.get(id).unwrap();
                let wide: HashSet<String> = radius_neighbors(q, &idx, lo).unwrap().into_iter().map(|n| n.id).collect();
                let narrow = radius_neighbors(q, &idx, hi).unwrap();
                prop_assert!(narrow.iter().all(|n| wide.contains(&n.id)));
            }
        }

        #[test]
        fn pool_is_partitioned(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let emb = random_store(&mut rng, 60, 3);
            let manual: Vec<(String, Label)> = (0..10)
                .map(|i| (format!("v{i}"), if i < 5 { Label::Positive } else { Label::Negative }))
                .collect();
            let pool: Vec<String> = (10..60).map(|i| format!("v{i}")).collect();
            let r = propagate_labels(&manual, &pool, &emb, 0.7).unwrap();
            prop_assert_eq!(r.assignments.len() + r.abstained.len(), pool.len());
            prop_assert!(r.assignments.keys().all(|k| !r.abstained.contains_key(k)));
            for a in r.assignments.values() {
                let (win, lose) = match a.label {
                    Label::Positive => (a.positive_votes, a.negative_votes),
                    Label::Negative => (a.negative_votes, a.positive_votes),
                };
                prop_assert!(win > lose);
            }
        }
    }
}
