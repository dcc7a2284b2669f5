// Label an unlabeled pool from a small manual seed with the radius
// near-neighbor vote, then run the second pass with the first pass's labels
// as extra voters.

use cmrf::synth::{calibrate_spread, evaluate_autolabel, generate_synthetic_corpus, ClusterSpec, CorpusSpec};
use cmrf::{propagate_passes, AutoLabelResult, Label};

pub fn run_example() -> anyhow::Result<()> {
    let dim = 16;
    let spread = calibrate_spread(dim, 200, 0.9, 7);
    let axis = |i: usize| (0..dim).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let spec = CorpusSpec {
        clusters: vec![
            ClusterSpec { center: axis(0), spread, count: 200, label: Label::Positive },
            ClusterSpec { center: axis(1), spread, count: 200, label: Label::Negative },
        ],
        contamination: 0.0,
        dim,
        seed: 7,
    };
    let corpus = generate_synthetic_corpus(&spec)?;
    let seed = corpus.seed_manifest(20, 1);
    let manual: Vec<(String, Label)> = seed.samples.iter().map(|s| (s.id.clone(), s.label.unwrap())).collect();

    let passes = propagate_passes(&manual, &corpus.ids(), &corpus.embeddings, 0.85, 2)?;
    for p in &passes {
        println!(
            "pass {}: {} positive, {} negative, {} abstained",
            p.pass_index,
            p.count(Label::Positive),
            p.count(Label::Negative),
            p.abstained.len()
        );
    }
    let eval = evaluate_autolabel(&AutoLabelResult::merge(&passes), &corpus.truth)?;
    println!(
        "accuracy {:.3}, coverage {:.3} over {} unlabeled samples",
        eval.accuracy.unwrap_or(0.0),
        eval.coverage,
        eval.assigned + eval.abstained
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
