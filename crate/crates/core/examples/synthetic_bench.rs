// Generate a contaminated two-cluster corpus and report propagation accuracy
// and the diversity gain over random subsets as JSON.

use cmrf::synth::{calibrate_spread, run_bench, BenchDiversity, BenchSpec, ClusterSpec, CorpusSpec};
use cmrf::Label;

pub fn run_example() -> anyhow::Result<()> {
    let dim = 12;
    let spread = calibrate_spread(dim, 150, 0.9, 21);
    let axis = |i: usize| (0..dim).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let spec = BenchSpec {
        corpus: CorpusSpec {
            clusters: vec![
                ClusterSpec { center: axis(0), spread, count: 150, label: Label::Positive },
                ClusterSpec { center: axis(1), spread, count: 150, label: Label::Negative },
            ],
            contamination: 0.05,
            dim,
            seed: 21,
        },
        seed_per_class: 15,
        similarity: 0.85,
        passes: 2,
        diversity: Some(BenchDiversity { k: 20, draws: 2_000, trials: 200, seed: 4 }),
    };
    let report = run_bench(&spec)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
