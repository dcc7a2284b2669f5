mod embedding_store {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/embedding_store.rs"));
}

#[test]
fn embedding_store_example_runs() {
    embedding_store::run_example().expect("embedding_store example should run");
}

mod mine_hard_candidates {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mine_hard_candidates.rs"));
}

#[test]
fn mine_hard_candidates_example_runs() {
    mine_hard_candidates::run_example().expect("mine_hard_candidates example should run");
}

mod propagate_labels {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/propagate_labels.rs"));
}

#[test]
fn propagate_labels_example_runs() {
    propagate_labels::run_example().expect("propagate_labels example should run");
}

mod diverse_negatives {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/diverse_negatives.rs"));
}

#[test]
fn diverse_negatives_example_runs() {
    diverse_negatives::run_example().expect("diverse_negatives example should run");
}

mod strategy1 {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/strategy1.rs"));
}

#[test]
fn strategy1_example_runs() {
    strategy1::run_example().expect("strategy1 example should run");
}

mod strategy2 {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/strategy2.rs"));
}

#[test]
fn strategy2_example_runs() {
    strategy2::run_example().expect("strategy2 example should run");
}

mod annotation_service {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/annotation_service.rs"));
}

#[test]
fn annotation_service_example_runs() {
    annotation_service::run_example().expect("annotation_service example should run");
}

mod synthetic_bench {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/synthetic_bench.rs"));
}

#[test]
fn synthetic_bench_example_runs() {
    synthetic_bench::run_example().expect("synthetic_bench example should run");
}
