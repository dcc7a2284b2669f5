// Both classes from the general corpus: a manual seed is propagated over the
// mined pool, negatives are chosen for diversity, and the result is balanced.

use cmrf::pipeline::run_strategy2_detailed;
use cmrf::synth::{calibrate_spread, generate_synthetic_corpus, ClusterSpec, CorpusSpec};
use cmrf::{emit_refined, Label, PipelineConfig, Strategy};

pub fn run_example() -> anyhow::Result<()> {
    let dim = 16;
    let spread = calibrate_spread(dim, 200, 0.9, 11);
    let axis = |i: usize| (0..dim).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let corpus = generate_synthetic_corpus(&CorpusSpec {
        clusters: vec![
            ClusterSpec { center: axis(0), spread, count: 120, label: Label::Positive },
            ClusterSpec { center: axis(1), spread, count: 140, label: Label::Negative },
            ClusterSpec { center: axis(2), spread, count: 140, label: Label::Negative },
        ],
        contamination: 0.0,
        dim,
        seed: 11,
    })?;
    let seed = corpus.seed_manifest(20, 2);

    let config = PipelineConfig {
        strategy: Strategy::Two,
        random_subsets: 5_000,
        seed_per_class: 20,
        rng_seed: 42,
        ..PipelineConfig::default()
    };
    let run = run_strategy2_detailed(&config, &seed, &corpus.manifest, &corpus.embeddings)?;
    for p in &run.passes {
        println!("pass {}: {} assigned, {} abstained", p.pass_index, p.assignments.len(), p.abstained.len());
    }
    let d = &run.dataset;
    println!("{} positives / {} negatives, diversity {:.4}", d.positives.len(), d.negatives.len(), run.selection.score);
    println!(
        "{:.2}% of labels automatic, annotation effort reduced x{:.1}",
        100.0 * d.metrics.auto_fraction,
        d.metrics.reduction_factor.unwrap_or(1.0)
    );

    let dir = tempfile::tempdir()?;
    let files = emit_refined(d, dir.path())?;
    println!("train manifest at {}", files.train.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
