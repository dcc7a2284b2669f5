//! Hard-candidate mining: keep the corpus samples the baseline model scores
//! strictly above the threshold `t`.
//!
//! For a corpus that is mostly negative, the retained samples are dominated by
//! confident false positives, i.e. hard negatives.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::ingest::{self, FetchError, FetchOptions, InferenceProvider};
use crate::model::{threshold_warning, DatasetManifest, Sample};

pub type SampleSet = Vec<Sample>;

#[derive(Debug, Error)]
pub enum MinerError {
    #[error("sample {0:?} has no score")]
    MissingScore(String),
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("scoring failed; resume from checkpoint {checkpoint}: {source}")]
    Provider {
        checkpoint: PathBuf,
        #[source]
        source: FetchError,
    },
    #[error("mining checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_threshold(t: f64) -> Result<(), MinerError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(MinerError::InvalidThreshold(t));
    }
    if t <= 0.5 {
        warn!("{}", threshold_warning(t));
    }
    Ok(())
}

/// Returns `{x : score(x) > t}` in input order.
pub fn filter_by_threshold(scored: &[Sample], t: f64) -> Result<SampleSet, MinerError> {
    check_threshold(t)?;
    retain_above(scored, t)
}

fn retain_above(scored: &[Sample], t: f64) -> Result<SampleSet, MinerError> {
    let mut kept = Vec::new();
    for s in scored {
        let score = s.score.ok_or_else(|| MinerError::MissingScore(s.id.clone()))?;
        if score > t {
            kept.push(s.clone());
        }
    }
    Ok(kept)
}

#[derive(Debug, Clone)]
pub struct MiningOptions {
    /// Corpus samples held in memory at once.
    pub chunk: usize,
    pub fetch: FetchOptions,
}

impl Default for MiningOptions {
    fn default() -> Self {
        MiningOptions { chunk: 4096, fetch: FetchOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct MiningProgress {
    /// Corpus samples fully processed.
    processed: u64,
    /// Output bytes that belong to processed samples.
    out_bytes: u64,
    retained: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MiningSummary {
    pub scanned: u64,
    pub retained: u64,
    pub resumed_from: u64,
}

/// Path of the progress file kept next to the output while mining runs.
pub fn checkpoint_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".ckpt");
    out.with_file_name(name)
}

/// Streams a corpus through scoring and thresholding, appending retained
/// samples to `out` as JSON lines.
///
/// Memory is bounded by `opts.chunk`. After every chunk a progress record is
/// written next to `out`; if a run fails, calling this again with the same
/// corpus resumes after the last completed chunk and produces a byte-identical
/// output file. The progress file is removed on success.
pub fn mine_hard_candidates<P, I>(
    provider: &P,
    corpus: I,
    t: f64,
    out: &Path,
    opts: &MiningOptions,
) -> Result<MiningSummary, MinerError>
where
    P: InferenceProvider + ?Sized,
    I: IntoIterator<Item = Sample>,
{
    check_threshold(t)?;
    let ckpt = checkpoint_path(out);
    let progress = read_progress(&ckpt)?;
    let resumed_from = progress.map_or(0, |p| p.processed);
    let mut progress = progress.unwrap_or(MiningProgress { processed: 0, out_bytes: 0, retained: 0 });

    let file = if resumed_from > 0 {
        let f = OpenOptions::new().write(true).open(out)?;
        f.set_len(progress.out_bytes)?;
        info!(resumed_from, "resuming mining run");
        f
    } else {
        File::create(out)?
    };
    let mut file = file;
    io::Seek::seek(&mut file, io::SeekFrom::End(0))?;
    let mut writer = BufWriter::new(file);

    let mut iter = corpus.into_iter().skip(resumed_from as usize).peekable();
    let chunk = opts.chunk.max(1);
    while iter.peek().is_some() {
        let batch: Vec<Sample> = iter.by_ref().take(chunk).collect();
        let scored = ingest::fetch_scored(provider, &batch, &opts.fetch)
            .map_err(|source| MinerError::Provider { checkpoint: ckpt.clone(), source })?;
        let kept = retain_above(&scored.samples, t)?;
        for s in &kept {
            let line = ingest::sample_to_line(s);
            writer.write_all(line.as_bytes())?;
            writer.write_all(b"\n")?;
            progress.out_bytes += line.len() as u64 + 1;
        }
        writer.flush()?;
        writer.get_ref().sync_data()?;
        progress.processed += batch.len() as u64;
        progress.retained += kept.len() as u64;
        write_progress(&ckpt, &progress)?;
    }
    writer.flush()?;
    drop(writer);
    if ckpt.exists() {
        std::fs::remove_file(&ckpt)?;
    }
    info!(scanned = progress.processed, retained = progress.retained, "mining complete");
    Ok(MiningSummary { scanned: progress.processed, retained: progress.retained, resumed_from })
}

/// Convenience wrapper returning the retained pool as a manifest.
pub fn mine_to_manifest<P, I>(
    provider: &P,
    corpus: I,
    t: f64,
    out: &Path,
    opts: &MiningOptions,
) -> Result<DatasetManifest, MinerError>
where
    P: InferenceProvider + ?Sized,
    I: IntoIterator<Item = Sample>,
{
    mine_hard_candidates(provider, corpus, t, out, opts)?;
    ingest::load_manifest(out).map_err(|e| MinerError::Checkpoint {
        path: out.to_path_buf(),
        message: e.to_string(),
    })
}

fn read_progress(path: &Path) -> Result<Option<MiningProgress>, MinerError> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).map(Some).map_err(|e| MinerError::Checkpoint {
            path: path.to_path_buf(),
            message: e.to_string(),
        }),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_progress(path: &Path, progress: &MiningProgress) -> Result<(), MinerError> {
    let tmp = crate::ingest::tmp_sibling(path);
    std::fs::write(&tmp, serde_json::to_vec(progress).unwrap())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
