// Build an embedding store, write it in the binary `.cmrf` format and read it back.

use cmrf::ingest::{decode_embedding_store, encode_embedding_store, read_embedding_store, write_embedding_store};
use cmrf::EmbeddingStore;

pub fn run_example() -> anyhow::Result<()> {
    let mut store = EmbeddingStore::new(3)?;
    store.push("cat-001", &[0.9, 0.1, 0.0])?;
    store.push("cat-002", &[0.8, 0.2, 0.1])?;
    store.push("dog-001", &[0.0, 0.3, 0.95])?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("emb.cmrf");
    write_embedding_store(&store, &path)?;
    let back = read_embedding_store(&path)?;
    assert_eq!(back, store);
    println!("{} rows of dim {} round-tripped through {}", back.len(), back.dim(), path.display());

    // A zero vector has no direction, so cosine similarity is undefined for it.
    let mut bytes = encode_embedding_store(&store);
    let row = 18 + 2 * 3 * 4;
    bytes[row..row + 12].fill(0);
    match decode_embedding_store(&bytes) {
        Err(e) => println!("corrupted store rejected: {e}"),
        Ok(_) => anyhow::bail!("zero row should not load"),
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
