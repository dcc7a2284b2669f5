use std::path::Path;
use std::process::Command;

use cmrf::synth::{generate_synthetic_corpus, ClusterSpec, CorpusSpec, SyntheticCorpus};
use cmrf::{load_manifest, save_manifest, write_embedding_store, DatasetManifest, Label};

fn cmrf(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cmrf")).args(args).current_dir(cwd).env("RUST_LOG", "warn").output().unwrap()
}

fn assert_ok(out: &std::process::Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn corpus() -> SyntheticCorpus {
    let axis = |i: usize| (0..8).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    generate_synthetic_corpus(&CorpusSpec {
        clusters: vec![
            ClusterSpec { center: axis(0), spread: 0.05, count: 30, label: Label::Positive },
            ClusterSpec { center: axis(1), spread: 0.05, count: 40, label: Label::Negative },
        ],
        contamination: 0.0,
        dim: 8,
        seed: 1,
    })
    .unwrap()
}

fn write_inputs(dir: &Path) -> SyntheticCorpus {
    let c = corpus();
    let mut pool = c.manifest.clone();
    for (i, s) in pool.samples.iter_mut().enumerate() {
        s.score = Some(0.6 + 0.4 * (i % 10) as f64 / 10.0);
    }
    save_manifest(&pool, dir.join("scored.jsonl")).unwrap();
    save_manifest(&c.manifest, dir.join("pool.jsonl")).unwrap();
    save_manifest(&c.seed_manifest(5, 3), dir.join("seed.jsonl")).unwrap();
    write_embedding_store(&c.embeddings, dir.join("emb.cmrf")).unwrap();
    c
}

#[test]
fn mine_propagate_diversify() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_inputs(d);

    assert_ok(&cmrf(&["mine", "--scores", "scored.jsonl", "--threshold", "0.8", "--out", "mined.jsonl"], d));
    let mined = load_manifest(d.join("mined.jsonl")).unwrap();
    // Scores cycle through 0.60, 0.64, ..., 0.96; strictly above 0.8 leaves four of ten.
    assert_eq!(mined.len(), 28);

    let args = ["propagate", "--seed", "seed.jsonl", "--pool", "pool.jsonl", "--embeddings", "emb.cmrf", "-a", "0.85"];
    assert_ok(&cmrf(&[&args[..], &["--passes", "2", "--out", "labeled.jsonl"]].concat(), d));
    let labeled = load_manifest(d.join("labeled.jsonl")).unwrap();
    assert_eq!(labeled.auto_ids().len(), 60);

    let args = ["diversify", "--pool", "pool.jsonl", "--embeddings", "emb.cmrf", "-k", "5", "-R", "500"];
    assert_ok(&cmrf(&[&args[..], &["--seed", "42", "--out", "div.jsonl"]].concat(), d));
    assert_eq!(load_manifest(d.join("div.jsonl")).unwrap().len(), 5);
}

#[test]
fn run_strategy2_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_inputs(d);
    std::fs::write(
        d.join("cmrf.toml"),
        r#"
[pipeline]
random_subsets = 200
seed_per_class = 5
rng_seed = 7

[inputs]
seed = "seed.jsonl"
pool = "pool.jsonl"
embeddings = "emb.cmrf"

[output]
dir = "out"
"#,
    )
    .unwrap();
    let out = cmrf(&["run", "--strategy", "2", "--config", "cmrf.toml"], d);
    assert_ok(&out);
    let train: DatasetManifest = load_manifest(d.join("out/train.jsonl")).unwrap();
    let pos = train.samples.iter().filter(|s| s.label == Some(Label::Positive)).count();
    assert_eq!((pos, train.len() - pos), (30, 30));
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("out/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["annotation"]["manual_count"], 10);

    // Strategy 1 needs task positives, which this config lacks.
    let out = cmrf(&["run", "--strategy", "1", "--config", "cmrf.toml"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("task_positives"));
}

#[test]
fn bench_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("spec.toml"),
        r#"
seed_per_class = 5

[corpus]
dim = 4
seed = 9
clusters = [
  { center = [1.0, 0.0, 0.0, 0.0], spread = 0.05, count = 20, label = "positive" },
  { center = [0.0, 1.0, 0.0, 0.0], spread = 0.05, count = 20, label = "negative" },
]

[diversity]
k = 3
draws = 100
trials = 10
"#,
    )
    .unwrap();
    assert_ok(&cmrf(&["bench", "--spec", "spec.toml", "--report", "report.json"], d));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pool_size"], 40);
    assert_eq!(report["autolabel"]["accuracy"], 1.0);
    assert!(report["diversity"]["exhaustive_max"].is_number());
}
