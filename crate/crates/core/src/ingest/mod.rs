//! Persistence formats and the inference-provider boundary.

mod fetch;
mod manifest;
pub mod provider;
mod store;

use std::path::{Path, PathBuf};

pub use fetch::{fetch_scored, FetchError, FetchOptions};
pub use manifest::{
    load_manifest, read_manifest, sample_to_line, save_manifest, write_manifest, ManifestError,
};
pub use provider::{HttpProvider, InferenceProvider, ProviderError};
pub use store::{
    decode_embedding_store, encode_embedding_store, read_embedding_store, write_embedding_store,
    StoreFormatError, FORMAT_VERSION, MAGIC,
};

pub(crate) fn tmp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}
