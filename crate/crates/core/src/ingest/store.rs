//! Binary embedding-store format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    4 bytes  "CMRF"
//! version  u16      1
//! dim      u32
//! count    u64
//! payload  count × dim IEEE-754 f32, row-major
//! ids      count UTF-8 ids, each terminated by '\n'
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{EmbeddingStore, StoreError};

pub const MAGIC: &[u8; 4] = b"CMRF";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 8;

#[derive(Debug, Error)]
pub enum StoreFormatError {
    #[error("file does not start with the CMRF magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("declared dim {dim} × count {count} does not match the payload ({detail})")]
    DimMismatch { dim: u32, count: u64, detail: String },
    #[error("file is truncated: {0}")]
    TruncatedFile(String),
    #[error("row {id:?} has zero norm")]
    ZeroNormVector { id: String },
    #[error("invalid row: {0}")]
    InvalidRow(#[from] StoreError),
    #[error("id section is not valid UTF-8")]
    InvalidUtf8,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn read_embedding_store(path: impl AsRef<Path>) -> Result<EmbeddingStore, StoreFormatError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode_embedding_store(&bytes)
}

pub fn decode_embedding_store(bytes: &[u8]) -> Result<EmbeddingStore, StoreFormatError> {
    if !MAGIC.starts_with(&bytes[..bytes.len().min(4)]) {
        return Err(StoreFormatError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(StoreFormatError::TruncatedFile(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(StoreFormatError::UnsupportedVersion(version));
    }
    let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    if dim == 0 {
        return Err(StoreFormatError::DimMismatch { dim, count, detail: "dim must be positive".into() });
    }

    let payload_len = (dim as u64)
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| usize::try_from(n).ok())
        .ok_or_else(|| StoreFormatError::DimMismatch {
            dim,
            count,
            detail: "payload size overflows".into(),
        })?;
    let body = &bytes[HEADER_LEN..];
    if body.len() < payload_len {
        return Err(StoreFormatError::TruncatedFile(format!(
            "payload needs {payload_len} bytes, {} available",
            body.len()
        )));
    }
    let (payload, id_section) = body.split_at(payload_len);
    let id_text = std::str::from_utf8(id_section).map_err(|_| StoreFormatError::InvalidUtf8)?;

    let mut ids = Vec::with_capacity(count as usize);
    let mut rest = id_text;
    while (ids.len() as u64) < count {
        match rest.find('\n') {
            Some(end) => {
                ids.push(&rest[..end]);
                rest = &rest[end + 1..];
            }
            None => {
                return Err(StoreFormatError::TruncatedFile(format!(
                    "expected {count} ids, found {}",
                    ids.len()
                )))
            }
        }
    }
    if !rest.is_empty() {
        return Err(StoreFormatError::DimMismatch {
            dim,
            count,
            detail: format!("{} unexpected trailing bytes", rest.len()),
        });
    }

    let dim = dim as usize;
    let mut store = EmbeddingStore::with_capacity(dim, ids.len())?;
    let mut row = vec![0f32; dim];
    for (id, chunk) in ids.into_iter().zip(payload.chunks_exact(dim * 4)) {
        for (dst, src) in row.iter_mut().zip(chunk.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().unwrap());
        }
        store.push(id, &row).map_err(|e| match e {
            StoreError::ZeroNormVector(id) => StoreFormatError::ZeroNormVector { id },
            other => StoreFormatError::InvalidRow(other),
        })?;
    }
    Ok(store)
}

pub fn encode_embedding_store(store: &EmbeddingStore) -> Vec<u8> {
    let ids_len: usize = store.ids().iter().map(|id| id.len() + 1).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + store.as_slice().len() * 4 + ids_len);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    for x in store.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for id in store.ids() {
        out.extend_from_slice(id.as_bytes());
        out.push(b'\n');
    }
    out
}

/// Writes the store through a temporary sibling file and renames it into
/// place, so readers never observe a half-written store.
pub fn write_embedding_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> io::Result<()> {
    let path = path.as_ref();
    let tmp = super::tmp_sibling(path);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&encode_embedding_store(store))?;
        w.flush()?;
        w.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(dim: u32, count: u64, floats: &[f32], ids: &str) -> Vec<u8> {
        let mut b = MAGIC.to_vec();
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&dim.to_le_bytes());
        b.extend_from_slice(&count.to_le_bytes());
        for f in floats {
            b.extend_from_slice(&f.to_le_bytes());
        }
        b.extend_from_slice(ids.as_bytes());
        b
    }

    #[test]
    fn reads_two_rows() {
        let bytes = raw(4, 2, &[1., 2., 3., 4., 5., 6., 7., 8.], "a\nb\n");
        assert_eq!(bytes.len(), HEADER_LEN + 32 + 4);
        let store = decode_embedding_store(&bytes).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.get("b"), Some(&[5., 6., 7., 8.][..]));
    }

    #[test]
    fn short_payload_is_truncated() {
        let bytes = raw(3, 1, &[1., 2.], "");
        assert!(matches!(decode_embedding_store(&bytes), Err(StoreFormatError::TruncatedFile(_))));
    }

    #[test]
    fn missing_ids_are_truncated() {
        let bytes = raw(1, 2, &[1., 2.], "a\n");
        assert!(matches!(decode_embedding_store(&bytes), Err(StoreFormatError::TruncatedFile(_))));
    }

    #[test]
    fn zero_row_rejected() {
        let bytes = raw(3, 1, &[0., 0., 0.], "z\n");
        match decode_embedding_store(&bytes) {
            Err(StoreFormatError::ZeroNormVector { id }) => assert_eq!(id, "z"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        assert!(matches!(decode_embedding_store(b"NOPE\x01\x00"), Err(StoreFormatError::BadMagic)));
        let bytes = raw(2, 1, &[1., 0.], "a\nleftover");
        assert!(matches!(decode_embedding_store(&bytes), Err(StoreFormatError::DimMismatch { .. })));
        let bytes = raw(0, 0, &[], "");
        assert!(matches!(decode_embedding_store(&bytes), Err(StoreFormatError::DimMismatch { .. })));
    }

    #[test]
    fn empty_store_round_trips() {
        let store = EmbeddingStore::new(5).unwrap();
        let bytes = encode_embedding_store(&store);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode_embedding_store(&bytes).unwrap(), store);
    }
}
