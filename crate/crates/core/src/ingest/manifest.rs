//! JSON-lines manifests: one [`Sample`] object per line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{DatasetManifest, ManifestRole, Sample};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?} (first seen on line {first_line})")]
    DuplicateId { id: String, line: usize, first_line: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let reader = BufReader::new(File::open(path)?);
    read_manifest(reader)
}

/// Parses a manifest from any line source. Blank lines are ignored; line
/// numbers in errors are 1-based.
pub fn read_manifest(reader: impl BufRead) -> Result<DatasetManifest, ManifestError> {
    let mut samples = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample = parse_sample_line(&line, line_no)?;
        if let Some(&first_line) = seen.get(&sample.id) {
            return Err(ManifestError::DuplicateId { id: sample.id, line: line_no, first_line });
        }
        seen.insert(sample.id.clone(), line_no);
        samples.push(sample);
    }
    Ok(DatasetManifest::new(ManifestRole::CorpusPool, samples))
}

pub(crate) fn parse_sample_line(line: &str, line_no: usize) -> Result<Sample, ManifestError> {
    serde_json::from_str(line)
        .map_err(|e| ManifestError::ParseError { line: line_no, message: e.to_string() })
}

pub fn sample_to_line(sample: &Sample) -> String {
    serde_json::to_string(sample).expect("sample serialization is infallible")
}

pub fn write_manifest(manifest: &DatasetManifest, mut w: impl Write) -> io::Result<()> {
    for sample in &manifest.samples {
        w.write_all(sample_to_line(sample).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> io::Result<()> {
    let path = path.as_ref();
    let tmp = super::tmp_sibling(path);
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_manifest(manifest, &mut w)?;
        w.get_ref().sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, LabelOrigin};

    #[test]
    fn minimal_line_parses_unlabeled() {
        let m = read_manifest(r#"{"id":"a","uri":"u","score":0.9}"#.as_bytes()).unwrap();
        assert_eq!(m.samples, vec![Sample::new("a", "u").with_score(0.9)]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = "{\"id\":\"a\",\"uri\":\"u\"}\n{\"id\":\"a\",\"uri\":\"v\"}\n";
        match read_manifest(text.as_bytes()) {
            Err(ManifestError::DuplicateId { id, line, first_line }) => {
                assert_eq!((id.as_str(), line, first_line), ("a", 2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_error_names_line() {
        let text = "{\"id\":\"a\",\"uri\":\"u\"}\n\nnot json\n";
        match read_manifest(text.as_bytes()) {
            Err(ManifestError::ParseError { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_label = r#"{"id":"a","uri":"u","label":"maybe"}"#;
        assert!(matches!(read_manifest(bad_label.as_bytes()), Err(ManifestError::ParseError { line: 1, .. })));
    }

    #[test]
    fn three_sample_round_trip_with_unknown_fields() {
        let mut s1 = Sample::new("a", "file:///a.jpg").with_score(0.25);
        s1.extra.insert("width".into(), serde_json::json!(640));
        let mut s2 = Sample::new("b", "file:///b.jpg").with_label(Label::Positive, LabelOrigin::Manual);
        s2.annotator = Some("ann-1".into());
        s2.created_at = Some("2024-03-01T10:20:30.123456789Z".parse().unwrap());
        let s3 = Sample::new("c", "file:///c.jpg").with_label(Label::Negative, LabelOrigin::Seed);
        let m = DatasetManifest::corpus(vec![s1, s2, s3]);

        let mut buf = Vec::new();
        write_manifest(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains(r#""label":"positive""#));
        assert!(text.contains(r#""label_origin":"seed""#));
        assert!(text.contains(r#""width":640"#));
        let back = read_manifest(buf.as_slice()).unwrap();
        assert_eq!(back, m);
    }
}
