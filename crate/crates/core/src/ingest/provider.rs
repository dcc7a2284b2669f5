//! The boundary to the external baseline model.
//!
//! A provider turns sample URIs into classifier scores and penultimate-layer
//! embeddings. [`HttpProvider`] talks to a served model; the mock providers
//! back tests and examples.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const ENV_PROVIDER_URL: &str = "CMRF_PROVIDER_URL";
pub const ENV_PROVIDER_TIMEOUT_MS: &str = "CMRF_PROVIDER_TIMEOUT_MS";
const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Transient failure; callers may retry.
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("provider returned a malformed response: {0}")]
    BadResponse(String),
    #[error("provider has no entry for {0:?}")]
    UnknownUri(String),
}

/// Scores and embeds batches of sample URIs.
///
/// Implementations must be deterministic for a fixed configuration and must
/// return exactly one result per input, in input order.
pub trait InferenceProvider: Send + Sync {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError>;

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError>;
}

impl<P: InferenceProvider + ?Sized> InferenceProvider for &P {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError> {
        (**self).score(uris)
    }

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        (**self).embed(uris)
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UrisRequest {
    pub uris: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f32>>,
}

/// Client for a model served over HTTP.
///
/// `POST {base}/score` and `POST {base}/embed` both take `{"uris": [...]}`
/// and answer `{"scores": [...]}` and `{"embeddings": [[...], ...]}`.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(HttpProvider { base_url: base_url.into().trim_end_matches('/').to_string(), client })
    }

    /// Reads `CMRF_PROVIDER_URL` and `CMRF_PROVIDER_TIMEOUT_MS`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let url = std::env::var(ENV_PROVIDER_URL)
            .map_err(|_| ProviderError::Unavailable(format!("{ENV_PROVIDER_URL} is not set")))?;
        Self::new(url, Duration::from_millis(timeout_from_env()))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, uris: &[String]) -> Result<T, ProviderError> {
        let resp = self
            .client
            .post(format!("{}/{path}", self.base_url))
            .json(&UrisRequest { uris: uris.to_vec() })
            .send()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(ProviderError::Unavailable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(ProviderError::BadResponse(format!("HTTP {status}")));
        }
        resp.json::<T>().map_err(|e| ProviderError::BadResponse(e.to_string()))
    }
}

pub(crate) fn timeout_from_env() -> u64 {
    std::env::var(ENV_PROVIDER_TIMEOUT_MS)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_TIMEOUT_MS)
}

impl InferenceProvider for HttpProvider {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError> {
        let resp: ScoreResponse = self.post("score", uris)?;
        if resp.scores.len() != uris.len() {
            return Err(ProviderError::BadResponse(format!(
                "{} scores for {} uris",
                resp.scores.len(),
                uris.len()
            )));
        }
        Ok(resp.scores)
    }

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let resp: EmbedResponse = self.post("embed", uris)?;
        if resp.embeddings.len() != uris.len() {
            return Err(ProviderError::BadResponse(format!(
                "{} embeddings for {} uris",
                resp.embeddings.len(),
                uris.len()
            )));
        }
        Ok(resp.embeddings)
    }
}

/// Returns the same score and embedding for every URI.
#[derive(Debug, Clone)]
pub struct ConstantProvider {
    pub score: f64,
    pub embedding: Vec<f32>,
}

impl ConstantProvider {
    pub fn new(score: f64) -> Self {
        ConstantProvider { score, embedding: vec![1.0] }
    }
}

impl InferenceProvider for ConstantProvider {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError> {
        Ok(vec![self.score; uris.len()])
    }

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(vec![self.embedding.clone(); uris.len()])
    }
}

/// Lookup-table provider, typically built from a fixture file.
#[derive(Debug, Clone, Default)]
pub struct TableProvider {
    pub scores: HashMap<String, f64>,
    pub embeddings: HashMap<String, Vec<f32>>,
}

impl TableProvider {
    pub fn from_scores(scores: impl IntoIterator<Item = (String, f64)>) -> Self {
        TableProvider { scores: scores.into_iter().collect(), embeddings: HashMap::new() }
    }
}

impl InferenceProvider for TableProvider {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError> {
        uris.iter()
            .map(|u| self.scores.get(u).copied().ok_or_else(|| ProviderError::UnknownUri(u.clone())))
            .collect()
    }

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        uris.iter()
            .map(|u| self.embeddings.get(u).cloned().ok_or_else(|| ProviderError::UnknownUri(u.clone())))
            .collect()
    }
}

/// Derives a score in `[0, 1)` and a `dim`-dimensional embedding from the
/// SHA-256 digest of each URI.
#[derive(Debug, Clone)]
pub struct HashProvider {
    pub dim: usize,
}

impl HashProvider {
    pub fn score_of(uri: &str) -> f64 {
        let digest = Sha256::digest(uri.as_bytes());
        let word = u64::from_le_bytes(digest[..8].try_into().unwrap());
        (word >> 11) as f64 / (1u64 << 53) as f64
    }

    fn embed_one(&self, uri: &str) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dim);
        let mut counter = 0u32;
        while out.len() < self.dim {
            let mut h = Sha256::new();
            h.update(uri.as_bytes());
            h.update(counter.to_le_bytes());
            for pair in h.finalize().chunks_exact(4) {
                if out.len() == self.dim {
                    break;
                }
                let v = u32::from_le_bytes(pair.try_into().unwrap());
                out.push((v as f64 / u32::MAX as f64 * 2.0 - 1.0) as f32);
            }
            counter += 1;
        }
        if out.iter().all(|&x| x == 0.0) {
            out[0] = 1.0;
        }
        out
    }
}

impl InferenceProvider for HashProvider {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError> {
        Ok(uris.iter().map(|u| Self::score_of(u)).collect())
    }

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        Ok(uris.iter().map(|u| self.embed_one(u)).collect())
    }
}

/// Wraps a provider and fails on chosen URIs or after a call budget.
#[derive(Debug)]
pub struct FlakyProvider<P> {
    pub inner: P,
    pub failing_uris: Vec<String>,
    /// Calls beyond this budget fail with `Unavailable`.
    pub call_budget: Option<usize>,
    calls: AtomicUsize,
}

impl<P> FlakyProvider<P> {
    pub fn new(inner: P) -> Self {
        FlakyProvider { inner, failing_uris: Vec::new(), call_budget: None, calls: AtomicUsize::new(0) }
    }

    pub fn failing_on(mut self, uri: impl Into<String>) -> Self {
        self.failing_uris.push(uri.into());
        self
    }

    pub fn with_call_budget(mut self, budget: usize) -> Self {
        self.call_budget = Some(budget);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn check(&self, uris: &[String]) -> Result<(), ProviderError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.call_budget.is_some_and(|b| n >= b) {
            return Err(ProviderError::Unavailable("call budget exhausted".into()));
        }
        if let Some(bad) = uris.iter().find(|u| self.failing_uris.contains(u)) {
            return Err(ProviderError::Unavailable(format!("cannot process {bad}")));
        }
        Ok(())
    }
}

impl<P: InferenceProvider> InferenceProvider for FlakyProvider<P> {
    fn score(&self, uris: &[String]) -> Result<Vec<f64>, ProviderError> {
        self.check(uris)?;
        self.inner.score(uris)
    }

    fn embed(&self, uris: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.check(uris)?;
        self.inner.embed(uris)
    }
}
