//! Batch scoring against an [`InferenceProvider`] with retries and a resume
//! checkpoint.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use super::provider::{InferenceProvider, ProviderError};
use crate::model::{DatasetManifest, Sample};

#[derive(Debug, Clone)]
pub struct FetchOptions {
    pub batch: usize,
    /// Batches in flight at once.
    pub workers: usize,
    /// Extra attempts after the first failure of a call.
    pub retries: u32,
    pub backoff: Duration,
    /// JSON-lines file of `{"id", "score"}` records already obtained.
    pub checkpoint: Option<PathBuf>,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            batch: 64,
            workers: 1,
            retries: 3,
            backoff: Duration::from_millis(100),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("provider failed for {} sample(s): {}; last error: {last_error}", ids.len(), preview(ids))]
    ProviderUnavailable {
        ids: Vec<String>,
        last_error: ProviderError,
        /// Input samples in order, with every score that was obtained.
        partial: DatasetManifest,
    },
    #[error("checkpoint {path}: {source}")]
    Checkpoint { path: PathBuf, source: io::Error },
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 5;
    let head = ids[..ids.len().min(SHOWN)].join(", ");
    match ids.len().saturating_sub(SHOWN) {
        0 => head,
        rest => format!("{head} and {rest} more"),
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointRecord {
    id: String,
    score: f64,
}

/// Scores every sample, reusing checkpointed scores and appending new ones to
/// the checkpoint as batches complete.
///
/// A batch that keeps failing is retried item by item so that one bad sample
/// does not block its neighbours; the error then names exactly the samples
/// that could not be scored. Output order always follows input order.
pub fn fetch_scored<P: InferenceProvider + ?Sized>(
    provider: &P,
    samples: &[Sample],
    opts: &FetchOptions,
) -> Result<DatasetManifest, FetchError> {
    let mut known = match &opts.checkpoint {
        Some(path) => load_checkpoint(path)
            .map_err(|source| FetchError::Checkpoint { path: path.clone(), source })?,
        None => HashMap::new(),
    };
    let pending: Vec<&Sample> = samples.iter().filter(|s| !known.contains_key(&s.id)).collect();
    debug!(total = samples.len(), pending = pending.len(), "fetching scores");

    let mut checkpoint = match &opts.checkpoint {
        Some(path) => Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|source| FetchError::Checkpoint { path: path.clone(), source })?,
        ),
        None => None,
    };

    let batches: Vec<&[&Sample]> = pending.chunks(opts.batch.max(1)).collect();
    let mut failed: Vec<String> = Vec::new();
    let mut last_error = None;

    for wave in batches.chunks(opts.workers.max(1)) {
        let results: Vec<BatchOutcome> = if wave.len() == 1 {
            vec![score_batch(provider, wave[0], opts)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|batch| scope.spawn(|| score_batch(provider, batch, opts)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("scoring worker panicked")).collect()
            })
        };

        let mut lines = String::new();
        for outcome in results {
            for (id, score) in outcome.scored {
                lines.push_str(&serde_json::to_string(&CheckpointRecord { id: id.clone(), score }).unwrap());
                lines.push('\n');
                known.insert(id, score);
            }
            failed.extend(outcome.failed);
            if outcome.last_error.is_some() {
                last_error = outcome.last_error;
            }
        }
        if let (Some(file), Some(path)) = (checkpoint.as_mut(), opts.checkpoint.as_ref()) {
            file.write_all(lines.as_bytes())
                .and_then(|_| file.sync_data())
                .map_err(|source| FetchError::Checkpoint { path: path.clone(), source })?;
        }
    }

    let scored: Vec<Sample> = samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(&score) = known.get(&s.id) {
                s.score = Some(score);
            }
            s
        })
        .collect();

    if failed.is_empty() {
        Ok(DatasetManifest::corpus(scored))
    } else {
        let order: HashMap<&str, usize> =
            samples.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        failed.sort_by_key(|id| order[id.as_str()]);
        Err(FetchError::ProviderUnavailable {
            ids: failed,
            last_error: last_error.unwrap_or_else(|| ProviderError::Unavailable("unknown".into())),
            partial: DatasetManifest::corpus(scored),
        })
    }
}

struct BatchOutcome {
    scored: Vec<(String, f64)>,
    failed: Vec<String>,
    last_error: Option<ProviderError>,
}

fn score_batch<P: InferenceProvider + ?Sized>(
    provider: &P,
    batch: &[&Sample],
    opts: &FetchOptions,
) -> BatchOutcome {
    let uris: Vec<String> = batch.iter().map(|s| s.uri.clone()).collect();
    match call_with_retry(provider, &uris, opts) {
        Ok(scores) => BatchOutcome {
            scored: batch.iter().map(|s| s.id.clone()).zip(scores).collect(),
            failed: Vec::new(),
            last_error: None,
        },
        Err(err) if batch.len() == 1 => BatchOutcome {
            scored: Vec::new(),
            failed: vec![batch[0].id.clone()],
            last_error: Some(err),
        },
        Err(err) => {
            warn!(size = batch.len(), error = %err, "batch failed, retrying samples individually");
            let mut outcome = BatchOutcome { scored: Vec::new(), failed: Vec::new(), last_error: Some(err) };
            for sample in batch {
                match call_with_retry(provider, std::slice::from_ref(&sample.uri), opts) {
                    Ok(mut s) => outcome.scored.push((sample.id.clone(), s.remove(0))),
                    Err(e) => {
                        outcome.failed.push(sample.id.clone());
                        outcome.last_error = Some(e);
                    }
                }
            }
            outcome
        }
    }
}

fn call_with_retry<P: InferenceProvider + ?Sized>(
    provider: &P,
    uris: &[String],
    opts: &FetchOptions,
) -> Result<Vec<f64>, ProviderError> {
    let mut delay = opts.backoff;
    let mut attempt = 0;
    loop {
        let result = provider.score(uris).and_then(|scores| {
            if scores.len() != uris.len() {
                return Err(ProviderError::BadResponse(format!(
                    "{} scores for {} uris",
                    scores.len(),
                    uris.len()
                )));
            }
            match scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                Some(bad) => Err(ProviderError::BadResponse(format!("score {bad} outside [0, 1]"))),
                None => Ok(scores),
            }
        });
        match result {
            Ok(scores) => return Ok(scores),
            Err(ProviderError::Unavailable(msg)) if attempt < opts.retries => {
                debug!(attempt, %msg, "provider unavailable, backing off");
                std::thread::sleep(delay);
                delay = delay.saturating_mul(2);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Loads `id -> score` records. A torn final line (crash mid-write) is
/// ignored; a malformed line anywhere else is an error.
pub(crate) fn load_checkpoint(path: &Path) -> io::Result<HashMap<String, f64>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(HashMap::new()),
        Err(e) => return Err(e),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut out = HashMap::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointRecord>(line) {
            Ok(r) => {
                out.insert(r.id, r.score);
            }
            Err(_) if i + 1 == lines.len() => warn!("ignoring torn checkpoint record"),
            Err(e) => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::provider::{ConstantProvider, FlakyProvider, HashProvider};
    use sha2::{Digest, Sha256};

    fn samples(ids: &[&str]) -> Vec<Sample> {
        ids.iter().map(|id| Sample::new(*id, format!("uri://{id}"))).collect()
    }

    fn fast() -> FetchOptions {
        FetchOptions { backoff: Duration::from_millis(1), ..FetchOptions::default() }
    }

    #[test]
    fn constant_provider_scores_all() {
        let out = fetch_scored(&ConstantProvider::new(0.5), &samples(&["a", "b", "c"]), &fast()).unwrap();
        assert!(out.samples.iter().all(|s| s.score == Some(0.5)));
        assert_eq!(out.len(), 3);
    }

    #[test]
    fn failing_sample_is_named_and_others_scored() {
        let p = FlakyProvider::new(ConstantProvider::new(0.7)).failing_on("uri://b");
        let opts = FetchOptions { retries: 1, ..fast() };
        match fetch_scored(&p, &samples(&["a", "b", "c"]), &opts) {
            Err(FetchError::ProviderUnavailable { ids, partial, .. }) => {
                assert_eq!(ids, vec!["b".to_string()]);
                let scores: Vec<_> = partial.samples.iter().map(|s| s.score).collect();
                assert_eq!(scores, vec![Some(0.7), None, Some(0.7)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hash_scores_match_independent_recomputation() {
        let ids: Vec<String> = (0..40).map(|i| format!("s{i}")).collect();
        let input: Vec<Sample> = ids.iter().map(|id| Sample::new(id.clone(), format!("img/{id}.jpg"))).collect();
        let opts = FetchOptions { batch: 7, workers: 3, ..fast() };
        let out = fetch_scored(&HashProvider { dim: 4 }, &input, &opts).unwrap();
        for s in &out.samples {
            let d = Sha256::digest(s.uri.as_bytes());
            let mut w = 0u64;
            for (i, b) in d[..8].iter().enumerate() {
                w |= (*b as u64) << (8 * i);
            }
            let expected = (w >> 11) as f64 * 2f64.powi(-53);
            assert_eq!(s.score, Some(expected));
        }
    }

    #[test]
    fn checkpoint_resume_skips_rescoring() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("scores.ckpt");
        let input = samples(&["a", "b", "c", "d", "e", "f"]);
        let opts = FetchOptions { batch: 2, retries: 0, checkpoint: Some(ckpt.clone()), ..fast() };

        let dying = FlakyProvider::new(HashProvider { dim: 2 }).with_call_budget(2);
        assert!(fetch_scored(&dying, &input, &opts).is_err());
        assert_eq!(load_checkpoint(&ckpt).unwrap().len(), 4);

        let healthy = FlakyProvider::new(HashProvider { dim: 2 });
        let resumed = fetch_scored(&healthy, &input, &opts).unwrap();
        assert_eq!(healthy.calls(), 1);
        let direct = fetch_scored(&HashProvider { dim: 2 }, &input, &fast()).unwrap();
        assert_eq!(resumed, direct);
    }

    #[test]
    fn torn_checkpoint_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("c");
        std::fs::write(&ckpt, "{\"id\":\"a\",\"score\":0.5}\n{\"id\":\"b\",\"sc").unwrap();
        let loaded = load_checkpoint(&ckpt).unwrap();
        assert_eq!(loaded.len(), 1);
        std::fs::write(&ckpt, "garbage\n{\"id\":\"a\",\"score\":0.5}\n").unwrap();
        assert!(load_checkpoint(&ckpt).is_err());
    }
}
