// Run the seed-labeling API on a local port and drive one labeling round
// over HTTP the way the annotation UI does.

use std::path::Path;
use std::sync::Arc;

use cmrf::service::{serve, AnnotationSession, AppState, QueueStrategy, SessionConfig};
use cmrf::synth::{generate_synthetic_corpus, ClusterSpec, CorpusSpec};
use cmrf::Label;
use serde_json::{json, Value};

pub fn run_example() -> anyhow::Result<()> {
    let dim = 8;
    let axis = |i: usize| (0..dim).map(|j| if j == i { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    let corpus = generate_synthetic_corpus(&CorpusSpec {
        clusters: vec![
            ClusterSpec { center: axis(0), spread: 0.08, count: 40, label: Label::Positive },
            ClusterSpec { center: axis(1), spread: 0.08, count: 40, label: Label::Negative },
        ],
        contamination: 0.0,
        dim,
        seed: 3,
    })?;
    let config = SessionConfig { queue_strategy: QueueStrategy::LowCoverageFirst, ..SessionConfig::default() };
    let session = AnnotationSession::in_memory("demo", &corpus.manifest, Arc::new(corpus.embeddings.clone()), config)?;

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    let state = AppState::new().with_token("demo-token");
    rt.block_on(state.insert(Path::new("synthetic-pool.jsonl"), session))?;
    rt.spawn(serve(listener, state));

    let http = reqwest::blocking::Client::new();
    let auth = "Bearer demo-token";
    let get = |path: &str| -> anyhow::Result<Value> {
        Ok(http.get(format!("{base}{path}")).header("Authorization", auth).send()?.json()?)
    };
    let post = |path: &str, body: Value| -> anyhow::Result<Value> {
        Ok(http.post(format!("{base}{path}")).header("Authorization", auth).json(&body).send()?.json()?)
    };

    // The oracle annotator labels each queued sample with its true class.
    for _ in 0..3 {
        let batch = get("/sessions/demo/next?n=4")?;
        for item in batch["items"].as_array().unwrap() {
            let id = item["id"].as_str().unwrap();
            let label = corpus.truth[id];
            post("/sessions/demo/labels", json!({ "sample_id": id, "label": label, "annotator": "example" }))?;
        }
        let stats = get("/sessions/demo/stats")?;
        if stats["manual"]["positive"].as_u64() > Some(0) && stats["manual"]["negative"].as_u64() > Some(0) {
            let prop = post("/sessions/demo/propagate", json!({}))?;
            println!("version {}: {}", prop["state_version"], prop["summary"]);
        }
    }
    let stats = get("/sessions/demo/stats")?;
    println!("manual {} auto {} abstained {}", stats["manual"], stats["auto"], stats["abstained"]);
    println!("metrics {}", stats["metrics"]);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
