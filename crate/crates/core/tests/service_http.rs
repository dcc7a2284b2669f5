use std::path::Path;
use std::sync::Arc;

use cmrf::service::{serve, AnnotationSession, AppState, RegistryError, SessionConfig};
use cmrf::{DatasetManifest, EmbeddingStore, Sample};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

/// Two tight clusters on the plane: `p*` near 0°, `n*` near 180°.
fn pool() -> (DatasetManifest, Arc<EmbeddingStore>) {
    let mut store = EmbeddingStore::new(2).unwrap();
    let mut samples = Vec::new();
    for i in 0..10 {
        for (prefix, base) in [("p", 0.0f64), ("n", 180.0)] {
            let id = format!("{prefix}{i}");
            let r = (base + i as f64).to_radians();
            store.push(&id, &[r.cos() as f32, r.sin() as f32]).unwrap();
            samples.push(Sample::new(id.clone(), format!("img/{id}")));
        }
    }
    (DatasetManifest::corpus(samples), Arc::new(store))
}

struct Server {
    base: String,
    http: Client,
    state: AppState,
    rt: tokio::runtime::Runtime,
}

impl Server {
    fn start(token: Option<&str>) -> Server {
        let (m, e) = pool();
        let session = AnnotationSession::in_memory("s1", &m, e, SessionConfig::default()).unwrap();
        let rt = tokio::runtime::Runtime::new().unwrap();
        let mut state = AppState::new();
        if let Some(t) = token {
            state = state.with_token(t);
        }
        rt.block_on(state.insert(Path::new("pool-a.jsonl"), session)).unwrap();
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        rt.spawn(serve(listener, state.clone()));
        Server { base, http: Client::new(), state, rt }
    }

    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status(), r.json().unwrap())
    }

    fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self.http.post(format!("{}{path}", self.base)).json(&body).send().unwrap();
        (r.status(), r.json().unwrap())
    }

    fn label(&self, id: &str, label: &str) -> (StatusCode, Value) {
        self.post("/sessions/s1/labels", json!({ "sample_id": id, "label": label, "annotator": "t" }))
    }
}

#[test]
fn labeling_round_over_http() {
    let s = Server::start(None);
    let (st, body) = s.get("/healthz");
    assert_eq!((st, body["status"].as_str()), (StatusCode::OK, Some("ok")));

    let (st, next) = s.get("/sessions/s1/next?n=5");
    assert_eq!(st, StatusCode::OK);
    assert_eq!(next["items"].as_array().unwrap().len(), 5);
    assert_eq!(next["state_version"], 0);

    let (st, body) = s.label("p0", "positive");
    assert_eq!(st, StatusCode::OK);
    assert_eq!((body["changed"].as_bool(), body["state_version"].as_u64()), (Some(true), Some(1)));
    let (_, body) = s.label("p0", "positive");
    assert_eq!((body["changed"].as_bool(), body["state_version"].as_u64()), (Some(false), Some(1)));

    let (st, body) = s.post("/sessions/s1/propagate", json!({}));
    assert_eq!((st, body["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("empty_seed_class")));

    s.label("n0", "negative");
    let (st, body) = s.post("/sessions/s1/propagate", json!({}));
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["summary"]["assigned"], 18);
    assert_eq!(body["state_version"], 3);

    let (_, stats) = s.get("/sessions/s1/stats");
    assert_eq!(stats["manual"], json!({ "positive": 1, "negative": 1 }));
    assert_eq!(stats["auto"], json!({ "positive": 9, "negative": 9 }));
    assert_eq!(stats["metrics"]["reduction_factor"], 10.0);
    assert_eq!(stats["state_version"], 3);

    // The stats match the manifest the session would export.
    let manifest = s.rt.block_on(s.state.with_session("s1", |x| x.manifest())).unwrap();
    assert_eq!(manifest.manual_ids().len(), 2);
    assert_eq!(manifest.auto_ids().len(), 18);
}

#[test]
fn error_statuses() {
    let s = Server::start(None);
    let (st, body) = s.get("/sessions/nope/stats");
    assert_eq!((st, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));
    let (st, body) = s.label("zzz", "positive");
    assert_eq!((st, body["error"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_sample")));

    s.label("p1", "positive");
    let (st, body) = s.label("p1", "negative");
    assert_eq!((st, body["error"].as_str()), (StatusCode::CONFLICT, Some("conflicting_manual_label")));
    assert_eq!(body["state_version"], 1);
    let (st, _) = s.post("/sessions/s1/labels", json!({ "sample_id": "p1", "label": "negative", "overwrite": true }));
    assert_eq!(st, StatusCode::OK);

    let (st, _) = s.post("/sessions/s1/close", json!({}));
    assert_eq!(st, StatusCode::OK);
    let (st, body) = s.get("/sessions/s1/next?n=1");
    assert_eq!((st, body["error"].as_str()), (StatusCode::GONE, Some("session_closed")));
}

#[test]
fn bearer_token_guards_session_routes() {
    let s = Server::start(Some("sekrit"));
    assert_eq!(s.get("/healthz").0, StatusCode::OK);
    assert_eq!(s.get("/sessions/s1/stats").0, StatusCode::UNAUTHORIZED);
    let r = s.http.get(format!("{}/sessions/s1/stats", s.base)).bearer_auth("wrong").send().unwrap();
    assert_eq!(r.status(), StatusCode::UNAUTHORIZED);
    let r = s.http.get(format!("{}/sessions/s1/stats", s.base)).bearer_auth("sekrit").send().unwrap();
    assert_eq!(r.status(), StatusCode::OK);
}

#[test]
fn one_session_per_pool() {
    let s = Server::start(None);
    let (m, e) = pool();
    let other = AnnotationSession::in_memory("s2", &m, e.clone(), SessionConfig::default()).unwrap();
    let err = s.rt.block_on(s.state.insert(Path::new("pool-a.jsonl"), other)).unwrap_err();
    assert!(matches!(err, RegistryError::PoolInUse { .. }));
    let dup = AnnotationSession::in_memory("s1", &m, e.clone(), SessionConfig::default()).unwrap();
    let err = s.rt.block_on(s.state.insert(Path::new("pool-b.jsonl"), dup)).unwrap_err();
    assert!(matches!(err, RegistryError::DuplicateSession(_)));
    let fine = AnnotationSession::in_memory("s3", &m, e, SessionConfig::default()).unwrap();
    s.rt.block_on(s.state.insert(Path::new("pool-b.jsonl"), fine)).unwrap();
}

#[test]
fn labels_during_propagation_keep_partition_and_versions() {
    let s = Arc::new(Server::start(None));
    s.label("p0", "positive");
    s.label("n0", "negative");
    let mut last = 0;
    std::thread::scope(|scope| {
        let prop = {
            let s = Arc::clone(&s);
            scope.spawn(move || {
                for _ in 0..5 {
                    assert_eq!(s.post("/sessions/s1/propagate", json!({})).0, StatusCode::OK);
                }
            })
        };
        for i in 1..10 {
            let (st, body) = s.label(&format!("p{i}"), "positive");
            assert_eq!(st, StatusCode::OK);
            let v = body["state_version"].as_u64().unwrap();
            assert!(v > last);
            last = v;
        }
        prop.join().unwrap();
    });
    let manifest = s.rt.block_on(s.state.with_session("s1", |x| x.manifest())).unwrap();
    assert!(manifest.validate().is_valid());
    for id in manifest.manual_ids() {
        assert!(!manifest.auto_ids().contains(&id));
    }
    assert_eq!(manifest.manual_ids().len(), 11);
}
