// Stream a corpus through a scoring provider and keep the samples the
// baseline model scores above the threshold. An interrupted run resumes
// from its progress file.

use cmrf::ingest::provider::{FlakyProvider, HashProvider};
use cmrf::miner::{checkpoint_path, mine_hard_candidates, MiningOptions};
use cmrf::{load_manifest, Sample};

pub fn run_example() -> anyhow::Result<()> {
    let corpus: Vec<Sample> = (0..2000).map(|i| Sample::new(format!("c{i:05}"), format!("corpus://{i}"))).collect();
    let dir = tempfile::tempdir()?;
    let out = dir.path().join("pool.jsonl");
    let mut opts = MiningOptions { chunk: 250, ..MiningOptions::default() };
    opts.fetch.batch = 50;
    opts.fetch.retries = 0;

    // The provider dies after 12 calls, part way through the corpus.
    let flaky = FlakyProvider::new(HashProvider { dim: 8 }).with_call_budget(12);
    let err = mine_hard_candidates(&flaky, corpus.clone(), 0.8, &out, &opts).unwrap_err();
    println!("first run stopped: {err}");
    println!("progress kept in {}", checkpoint_path(&out).display());

    let summary = mine_hard_candidates(&HashProvider { dim: 8 }, corpus, 0.8, &out, &opts)?;
    println!(
        "resumed at sample {}, scanned {}, retained {} hard candidates",
        summary.resumed_from, summary.scanned, summary.retained
    );
    let pool = load_manifest(&out)?;
    assert!(pool.samples.iter().all(|s| s.score.unwrap() > 0.8));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
