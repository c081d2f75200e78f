//! Precomputed sentence embeddings keyed by a SHA-256 digest of the text.
//!
//! The store stands in for live encoder inference: any text the engine needs
//! to embed (corpus sentences, lyric chunks, queries) must have been exported
//! to an `emb.v1` file beforehand.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numfmt::round_sig;
use crate::{Error, Result, Scalar};

pub const EMBEDDING_DIM: usize = 384;
pub const FORMAT_TAG: &str = "emb.v1";
const SIGNIFICANT_DIGITS: usize = 9;

/// Lowercase hex SHA-256 of the UTF-8 bytes of `body`.
pub fn text_key(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dim: usize,
    model: String,
}

#[derive(Serialize, Deserialize)]
struct Row {
    key: String,
    vec: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<T> {
    dim: usize,
    model_tag: String,
    entries: BTreeMap<String, Vec<T>>,
}

/// Loads an `emb.v1` file whose header declares the system dimension (384).
pub fn load_embedding_store<T: Scalar>(path: impl AsRef<Path>) -> Result<EmbeddingStore<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let store = EmbeddingStore::read(file, path)?;
    if store.dim != EMBEDDING_DIM {
        return Err(Error::Parse {
            path: path.to_owned(),
            line: 1,
            message: format!("dim {} but this system uses {EMBEDDING_DIM}", store.dim),
        });
    }
    Ok(store)
}

impl<T: Scalar> EmbeddingStore<T> {
    pub fn new(dim: usize, model_tag: impl Into<String>) -> Self {
        EmbeddingStore {
            dim,
            model_tag: model_tag.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_text(&self, body: &str) -> bool {
        self.entries.contains_key(&text_key(body))
    }

    /// Stores `values` under the digest of `body`, replacing any previous entry.
    pub fn insert(&mut self, body: &str, values: Vec<T>) -> Result<()> {
        self.insert_key(text_key(body), values)
    }

    pub fn insert_key(&mut self, key: String, values: Vec<T>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::contract(format!(
                "embedding has {} values, store dim is {}",
                values.len(),
                self.dim
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("embedding has non-finite values"));
        }
        self.entries.insert(key, values);
        Ok(())
    }

    pub fn get_embedding(&self, body: &str) -> Result<&[T]> {
        let key = text_key(body);
        match self.entries.get(&key) {
            Some(v) => Ok(v),
            None => Err(Error::EmbeddingNotFound { key }),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Parses `emb.v1` JSON Lines with whatever dimension the header declares.
    pub fn read(input: impl Read, path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let mut lines = BufReader::new(input).lines();
        let header_line = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(parse_err(1, "missing emb.v1 header".into())),
        };
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| parse_err(1, format!("bad header: {e}")))?;
        if header.format != FORMAT_TAG {
            return Err(Error::UnsupportedVersion {
                found: header.format,
                expected: FORMAT_TAG.into(),
            });
        }
        if header.dim == 0 {
            return Err(parse_err(1, "dim must be positive".into()));
        }

        let mut store = EmbeddingStore::new(header.dim, header.model);
        for (i, line) in lines.enumerate() {
            let line_no = i as u64 + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(&line)
                .map_err(|e| parse_err(line_no, format!("bad row: {e}")))?;
            if row.key.len() != 64 || !row.key.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(parse_err(
                    line_no,
                    format!("key {:?} is not a hex digest", row.key),
                ));
            }
            if row.vec.len() != store.dim {
                return Err(parse_err(
                    line_no,
                    format!("{} values under dim={}", row.vec.len(), store.dim),
                ));
            }
            let values: Vec<T> = row.vec.iter().map(|&x| T::lit(x)).collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err(line_no, "non-finite value".into()));
            }
            if store.entries.insert(row.key.clone(), values).is_some() {
                return Err(parse_err(line_no, format!("duplicate key {}", row.key)));
            }
        }
        Ok(store)
    }

    /// Writes `emb.v1`, rows sorted by key, values at 9 significant digits.
    pub fn write(&self, out: impl Write) -> std::io::Result<()> {
        let mut out = BufWriter::new(out);
        let header = Header {
            format: FORMAT_TAG.into(),
            dim: self.dim,
            model: self.model_tag.clone(),
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (key, values) in &self.entries {
            let row = Row {
                key: key.clone(),
                vec: values
                    .iter()
                    .map(|v| round_sig(v.to_f64_lossy(), SIGNIFICANT_DIGITS))
                    .collect(),
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(file).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("store.jsonl")
    }

    fn row(key: &str, values: &[f64]) -> String {
        serde_json::json!({"key": key, "vec": values}).to_string()
    }

    #[test]
    fn keys_are_sha256_hex() {
        assert_eq!(
            text_key(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            text_key("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(text_key("happy"), text_key("happy"));
        assert_ne!(text_key("happy"), text_key("happy!"));
    }

    #[test]
    fn loads_rows() {
        let mut text = String::from("{\"format\":\"emb.v1\",\"dim\":3,\"model\":\"toy\"}\n");
        for t in ["a", "b", "c"] {
            text.push_str(&row(&text_key(t), &[1.0, 2.5, -0.125]));
            text.push('\n');
        }
        let store: EmbeddingStore<f64> = EmbeddingStore::read(text.as_bytes(), p()).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.model_tag(), "toy");
        assert_eq!(store.get_embedding("b").unwrap(), &[1.0, 2.5, -0.125]);
        assert_eq!(
            store.get_embedding("b").unwrap(),
            store.get_embedding("b").unwrap()
        );
    }

    #[test]
    fn missing_text_reports_its_key() {
        let store: EmbeddingStore<f64> = EmbeddingStore::new(3, "toy");
        match store.get_embedding("never seen") {
            Err(Error::EmbeddingNotFound { key }) => assert_eq!(key, text_key("never seen")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_short_rows_and_duplicates() {
        let header = "{\"format\":\"emb.v1\",\"dim\":384,\"model\":\"m\"}\n";
        let short = format!("{header}{}\n", row(&text_key("x"), &vec![0.0; 383]));
        assert!(matches!(
            EmbeddingStore::<f64>::read(short.as_bytes(), p()),
            Err(Error::Parse { line: 2, .. })
        ));

        let r = row(&text_key("x"), &vec![0.5; 384]);
        let dup = format!("{header}{r}\n{r}\n");
        assert!(matches!(
            EmbeddingStore::<f64>::read(dup.as_bytes(), p()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(matches!(
            EmbeddingStore::<f64>::read("".as_bytes(), p()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            EmbeddingStore::<f64>::read("{\"key\":\"x\"}\n".as_bytes(), p()),
            Err(Error::Parse { line: 1, .. })
        ));
        let v2 = "{\"format\":\"emb.v2\",\"dim\":3,\"model\":\"m\"}\n";
        assert!(matches!(
            EmbeddingStore::<f64>::read(v2.as_bytes(), p()),
            Err(Error::UnsupportedVersion { .. })
        ));
    }

    #[test]
    fn rejects_non_finite_values() {
        let text = format!(
            "{{\"format\":\"emb.v1\",\"dim\":1,\"model\":\"m\"}}\n{{\"key\":\"{}\",\"vec\":[1e400]}}\n",
            text_key("x")
        );
        assert!(matches!(
            EmbeddingStore::<f64>::read(text.as_bytes(), p()),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = format!(
            "{{\"format\":\"emb.v1\",\"dim\":1,\"model\":\"m\"}}\n{{\"key\":\"{}\",\"vec\":[1e300]}}\n",
            text_key("x")
        );
        assert!(EmbeddingStore::<f64>::read(text.as_bytes(), p()).is_ok());
        assert!(matches!(
            EmbeddingStore::<f32>::read(text.as_bytes(), p()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn reserialization_is_stable() {
        let mut store: EmbeddingStore<f64> = EmbeddingStore::new(4, "toy");
        for i in 0..20 {
            let v: Vec<f64> = (0..4)
                .map(|j| ((i * 4 + j) as f64 * 1.37).sin() / 7.0)
                .collect();
            store.insert(&format!("text {i}"), v).unwrap();
        }
        let mut first = Vec::new();
        store.write(&mut first).unwrap();
        let loaded: EmbeddingStore<f64> = EmbeddingStore::read(first.as_slice(), p()).unwrap();
        let mut second = Vec::new();
        loaded.write(&mut second).unwrap();
        assert_eq!(first, second);
        let reloaded: EmbeddingStore<f64> = EmbeddingStore::read(second.as_slice(), p()).unwrap();
        assert_eq!(loaded, reloaded);
    }

    #[test]
    fn system_loader_enforces_dimension() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.jsonl");
        let mut store: EmbeddingStore<f64> = EmbeddingStore::new(2, "toy");
        store.insert("a", vec![1.0, 2.0]).unwrap();
        store.save(&path).unwrap();
        assert!(load_embedding_store::<f64>(&path).is_err());

        let mut store: EmbeddingStore<f64> = EmbeddingStore::new(EMBEDDING_DIM, "toy");
        store.insert("a", vec![0.25; EMBEDDING_DIM]).unwrap();
        store.save(&path).unwrap();
        let loaded = load_embedding_store::<f32>(&path).unwrap();
        assert_eq!(loaded.get_embedding("a").unwrap()[0], 0.25f32);
    }
}
