use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing::{info, warn};

use cmrf::diversity::{select_diverse_subset, CandidatePool, SelectOptions};
use cmrf::ingest::{self, FetchOptions, HttpProvider};
use cmrf::miner::{self, MiningOptions};
use cmrf::model::{DatasetManifest, Label, LabelOrigin, ManifestRole, Strategy};
use cmrf::pipeline::{run_configured, RunConfig};
use cmrf::service::session::pool_key;
use cmrf::service::{AnnotationSession, AppState, QueueStrategy, SessionConfig};
use cmrf::synth::{run_bench, BenchSpec};
use cmrf::AutoLabelResult;

#[derive(Parser)]
#[command(name = "cmrf", version, about = "Dataset refinement in embedding space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ProviderArgs {
    #[arg(long, env = "CMRF_PROVIDER_TIMEOUT_MS", default_value_t = 30_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum QueueArg {
    Random,
    LowCoverageFirst,
}

#[derive(Subcommand)]
enum Command {
    /// Keep corpus samples whose score is strictly above the threshold.
    Mine {
        /// Scored manifest, or the base URL of an inference provider.
        #[arg(long, env = "CMRF_PROVIDER_URL")]
        scores: String,
        /// Corpus manifest to score when --scores is a URL.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4096)]
        chunk: usize,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Label a pool from a manual seed by radius near-neighbor vote.
    Propagate {
        #[arg(long)]
        seed: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(short = 'a', long = "similarity", default_value_t = 0.85)]
        a: f64,
        #[arg(long, default_value_t = 2)]
        passes: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the most spread-out k-subset of a pool among R random draws.
    Diversify {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(short = 'k')]
        k: usize,
        #[arg(short = 'R', default_value_t = 300_000)]
        r: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full strategy from a TOML config and emit the refined dataset.
    Run {
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate propagation and diversity on a synthetic corpus.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Serve the seed-labeling HTTP API for one pool.
    Serve {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Event log and snapshot directory; in-memory when omitted.
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[arg(long, default_value = "default")]
        session: String,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, env = "CMRF_SERVICE_TOKEN")]
        token: Option<String>,
        #[arg(long, value_enum, default_value = "random")]
        queue: QueueArg,
        #[arg(long, default_value_t = 1000)]
        target_per_class: usize,
        #[arg(short = 'a', long = "similarity", default_value_t = 0.85)]
        a: f64,
        #[arg(long, default_value_t = 2)]
        passes: usize,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Mine { scores, corpus, threshold, out, chunk, provider } => {
            mine(&scores, corpus.as_deref(), threshold, &out, chunk, &provider)
        }
        Command::Propagate { seed, pool, embeddings, a, passes, out } => {
            propagate(&seed, &pool, &embeddings, a, passes, &out)
        }
        Command::Diversify { pool, embeddings, k, r, seed, workers, out } => {
            let manifest = ingest::load_manifest(&pool)?;
            let store = ingest::read_embedding_store(&embeddings)?;
            let ids: Vec<String> = manifest.samples.iter().map(|s| s.id.clone()).collect();
            let cands = CandidatePool::from_store(&store, &ids)?;
            let sel = select_diverse_subset(&cands, k, r, seed, SelectOptions { workers })?;
            let chosen: Vec<_> = sel.indices.iter().map(|&i| manifest.samples[i].clone()).collect();
            ingest::save_manifest(&DatasetManifest::new(manifest.role, chosen), &out)?;
            info!(k, draws = sel.draws, winner = sel.draw_index, score = sel.score, "diverse subset written");
            Ok(())
        }
        Command::Run { strategy, config } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = strategy {
                cfg.pipeline.strategy = s;
            }
            let (dataset, files) = run_configured(&cfg)?;
            info!(
                positives = dataset.positives.len(),
                negatives = dataset.negatives.len(),
                train = %files.train.display(),
                "refined dataset emitted"
            );
            println!("{}", serde_json::to_string_pretty(&dataset.metrics)?);
            Ok(())
        }
        Command::Bench { spec, report } => {
            let spec = BenchSpec::load(&spec)?;
            let rep = run_bench(&spec)?;
            std::fs::write(&report, serde_json::to_vec_pretty(&rep)?)?;
            info!(report = %report.display(), "bench report written");
            Ok(())
        }
        Command::Serve { pool, embeddings, state_dir, session, addr, token, queue, target_per_class, a, passes } => {
            let manifest = ingest::load_manifest(&pool)?;
            let store = Arc::new(ingest::read_embedding_store(&embeddings)?);
            let config = SessionConfig {
                target_per_class,
                queue_strategy: match queue {
                    QueueArg::Random => QueueStrategy::Random,
                    QueueArg::LowCoverageFirst => QueueStrategy::LowCoverageFirst,
                },
                similarity: a,
                passes,
                ..SessionConfig::default()
            };
            let s = match &state_dir {
                Some(dir) => AnnotationSession::open(session, &manifest, store, config, dir)?,
                None => AnnotationSession::in_memory(session, &manifest, store, config)?,
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let mut state = AppState::new();
                if let Some(t) = token {
                    state = state.with_token(t);
                }
                state.insert(&pool_key(&pool), s).await?;
                let listener = tokio::net::TcpListener::bind(&addr).await?;
                info!(addr = %listener.local_addr()?, "annotation service listening");
                cmrf::service::serve(listener, state).await?;
                Ok(())
            })
        }
    }
}

fn mine(scores: &str, corpus: Option<&Path>, t: f64, out: &Path, chunk: usize, p: &ProviderArgs) -> Result<()> {
    if scores.starts_with("http://") || scores.starts_with("https://") {
        let Some(corpus) = corpus else { bail!("--corpus is required when --scores is a provider URL") };
        let provider = HttpProvider::new(scores, Duration::from_millis(p.timeout_ms))?;
        let corpus = ingest::load_manifest(corpus)?;
        let opts = MiningOptions {
            chunk,
            fetch: FetchOptions { batch: p.batch, workers: p.workers, retries: p.retries, ..FetchOptions::default() },
        };
        let summary = miner::mine_hard_candidates(&provider, corpus.samples, t, out, &opts)?;
        info!(scanned = summary.scanned, retained = summary.retained, resumed_from = summary.resumed_from, "mined");
    } else {
        if corpus.is_some() {
            warn!("--corpus is ignored when --scores is a manifest");
        }
        let scored = ingest::load_manifest(scores)?;
        let kept = miner::filter_by_threshold(&scored.samples, t)?;
        info!(scanned = scored.len(), retained = kept.len(), "mined");
        ingest::save_manifest(&DatasetManifest::corpus(kept), out)?;
    }
    Ok(())
}

fn propagate(seed: &Path, pool: &Path, embeddings: &Path, a: f64, passes: usize, out: &Path) -> Result<()> {
    let seed = ingest::load_manifest(seed)?;
    let mut pool = ingest::load_manifest(pool)?;
    let store = ingest::read_embedding_store(embeddings)?;
    let manual: Vec<(String, Label)> = seed.samples.iter().filter_map(|s| s.label.map(|l| (s.id.clone(), l))).collect();
    let ids: Vec<String> = pool.samples.iter().map(|s| s.id.clone()).collect();
    let results = cmrf::propagate_passes(&manual, &ids, &store, a, passes)?;
    for r in &results {
        info!(pass = r.pass_index, assigned = r.assignments.len(), abstained = r.abstained.len(), "propagation pass");
    }
    let merged = AutoLabelResult::merge(&results);
    for s in &mut pool.samples {
        if let Some(asg) = merged.assignments.get(&s.id) {
            s.apply_label(asg.label, LabelOrigin::Auto, None);
        }
    }
    pool.role = ManifestRole::CorpusPool;
    ingest::save_manifest(&pool, out)?;
    Ok(())
}
