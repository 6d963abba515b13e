//! Word vectors for clustering and keyword suggestion.
//!
//! Vectors come either from a static text file (`word f1 ... fD` rows with
//! an optional `N D` header) or from a remote service speaking a small JSON
//! protocol: `POST {"words": [...]}` answered by
//! `{"dimension": D, "vectors": {"word": [...]}}`.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vector file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("vector for {word:?} has {found} values, response declares dimension {expected}")]
    ResponseDimensionMismatch {
        word: String,
        expected: usize,
        found: usize,
    },
    #[error("zero-length vector")]
    ZeroVector,
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("embedding service returned HTTP {0}")]
    Transport(u16),
    #[error("embedding service unreachable: {0}")]
    Connection(String),
    #[error("embedding service response: {0}")]
    ProtocolError(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorStore {
    pub dimension: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
    pub source: String,
}

/// A loaded store plus the words dropped as duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLoad {
    pub store: VectorStore,
    pub duplicates: Vec<String>,
}

impl VectorStore {
    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads a word-vector text file. Words are lowercased; a repeated word
/// keeps its first vector.
pub fn load_vectors<R: BufRead>(reader: R, source: &str) -> Result<VectorLoad, EmbeddingError> {
    let mut dimension: Option<usize> = None;
    let mut vectors = BTreeMap::new();
    let mut duplicates = Vec::new();
    let mut saw_line = false;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !saw_line {
            saw_line = true;
            if let [n, d] = fields[..] {
                if let (Ok(_), Ok(d)) = (n.parse::<usize>(), d.parse::<usize>()) {
                    if d == 0 {
                        return Err(EmbeddingError::Parse {
                            line: lineno,
                            reason: "header declares dimension 0".into(),
                        });
                    }
                    dimension = Some(d);
                    continue;
                }
            }
        }
        let (word, values) = fields.split_first().expect("non-empty line");
        let expected = *dimension.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(EmbeddingError::DimensionMismatch {
                line: lineno,
                expected,
                found: values.len(),
            });
        }
        let parsed = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EmbeddingError::Parse {
                line: lineno,
                reason: e.to_string(),
            })?;
        let word = word.to_lowercase();
        if vectors.contains_key(&word) {
            log::warn!("{source}:{lineno}: duplicate vector for {word:?}, keeping the first");
            duplicates.push(word);
        } else {
            vectors.insert(word, parsed);
        }
    }

    let dimension = match dimension {
        Some(d) if saw_line => d,
        _ => return Err(EmbeddingError::EmptyFile),
    };
    Ok(VectorLoad {
        store: VectorStore {
            dimension,
            vectors,
            source: source.to_string(),
        },
        duplicates,
    })
}

/// Rows for the in-vocabulary words (input order, duplicates kept) and the
/// out-of-vocabulary words, also in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Embedded {
    pub words: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub oov: Vec<String>,
}

pub fn embed_words<S: AsRef<str>>(store: &VectorStore, words: &[S]) -> Embedded {
    let mut out = Embedded::default();
    for w in words {
        let w = w.as_ref();
        match store.get(w) {
            Some(v) => {
                out.words.push(w.to_string());
                out.rows.push(v.to_vec());
            }
            None => out.oov.push(w.to_string()),
        }
    }
    out
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::LengthMismatch(a.len(), b.len()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Client for a remote embedding service. Holds no mutable state, so one
/// client can be shared across threads.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    endpoint: String,
    timeout: Duration,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    words: &'a [String],
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteEmbedder {
            endpoint: endpoint.into(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn fetch(&self, words: &[String]) -> Result<VectorStore, EmbeddingError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut response = agent
            .post(&self.endpoint)
            .send_json(EmbedRequest { words })
            .map_err(|e| EmbeddingError::Connection(e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            return Err(EmbeddingError::Transport(status));
        }
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbeddingError::Connection(e.to_string()))?;
        parse_response(&body, &self.endpoint)
    }
}

/// Convenience wrapper around [`RemoteEmbedder::fetch`].
pub fn fetch_remote(endpoint: &str, words: &[String]) -> Result<VectorStore, EmbeddingError> {
    RemoteEmbedder::new(endpoint).fetch(words)
}

fn parse_response(body: &str, endpoint: &str) -> Result<VectorStore, EmbeddingError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| EmbeddingError::ProtocolError(e.to_string()))?;
    let dimension = value
        .get("dimension")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| EmbeddingError::ProtocolError("missing field `dimension`".into()))?
        as usize;
    let raw = value
        .get("vectors")
        .and_then(serde_json::Value::as_object)
        .ok_or_else(|| EmbeddingError::ProtocolError("missing field `vectors`".into()))?;
    let mut vectors = BTreeMap::new();
    for (word, v) in raw {
        let v: Vec<f64> = serde_json::from_value(v.clone())
            .map_err(|e| EmbeddingError::ProtocolError(format!("vector for {word:?}: {e}")))?;
        if v.len() != dimension {
            return Err(EmbeddingError::ResponseDimensionMismatch {
                word: word.clone(),
                expected: dimension,
                found: v.len(),
            });
        }
        vectors.entry(word.to_lowercase()).or_insert(v);
    }
    Ok(VectorStore {
        dimension,
        vectors,
        source: endpoint.to_string(),
    })
}
