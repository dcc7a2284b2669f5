// Task-specific positives plus hard negatives mined from a scored corpus,
// balanced and written out with metrics and provenance.

use cmrf::ingest::provider::HashProvider;
use cmrf::model::ManifestRole;
use cmrf::{emit_refined, run_strategy1, DatasetManifest, Label, LabelOrigin, PipelineConfig, Sample};

pub fn run_example() -> anyhow::Result<()> {
    let positives = DatasetManifest::new(
        ManifestRole::TaskDataset,
        (0..150)
            .map(|i| Sample::new(format!("task{i:03}"), format!("task://{i}")).with_label(Label::Positive, LabelOrigin::Seed))
            .collect(),
    );
    let corpus = DatasetManifest::corpus(
        (0..3000)
            .map(|i| {
                let uri = format!("corpus://{i}");
                let score = HashProvider::score_of(&uri);
                Sample::new(format!("c{i:05}"), uri).with_score(score)
            })
            .collect(),
    );
    let config = PipelineConfig { threshold: 0.9, rng_seed: 3, ..PipelineConfig::default() };
    let dataset = run_strategy1(&config, &positives, &corpus)?;
    println!("{} positives / {} negatives", dataset.positives.len(), dataset.negatives.len());

    let dir = tempfile::tempdir()?;
    let files = emit_refined(&dataset, dir.path())?;
    println!("{}", std::fs::read_to_string(&files.metrics)?);
    let first = std::fs::read_to_string(&files.provenance)?;
    println!("provenance: {}", first.lines().next().unwrap_or_default());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
