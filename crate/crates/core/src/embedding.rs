//! Dense-embedding cosine scoring and the encoder service client.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// `dot(u, v) / (|u| |v|)`, or 0 when either norm is 0.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), actual: v.len(), line: None });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    let denom = uu.sqrt() * vv.sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub key: String,
    pub vector: Vec<f64>,
}

/// Vectors keyed by snippet id or query id, all of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::param("dimension", "must be positive"));
        }
        Ok(EmbeddingStore { dimension, vectors: HashMap::new() })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        self.check(&vector, None)?;
        let key = key.into();
        if self.vectors.contains_key(&key) {
            return Err(Error::DuplicateId { kind: "embedding", id: key, line: None });
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    fn check(&self, vector: &[f64], line: Option<u64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, actual: vector.len(), line });
        }
        if let Some(bad) = vector.iter().position(|x| !x.is_finite()) {
            let at = line.map(|l| format!("line {l}, ")).unwrap_or_default();
            return Err(Error::validation("embedding", "vector", format!("{at}component {bad} is not finite")));
        }
        Ok(())
    }

    /// Writes records sorted by key so the file is reproducible.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<&String> = self.vectors.keys().collect();
        keys.sort();
        let records: Vec<EmbeddingRecord> =
            keys.into_iter().map(|k| EmbeddingRecord { key: k.clone(), vector: self.vectors[k].clone() }).collect();
        jsonl::write(path, &records)
    }
}

/// Loads a `{"key", "vector"}` JSON-Lines file. The dimension is taken from
/// the first record.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let records = jsonl::read::<EmbeddingRecord>(path)?;
    let Some((_, first)) = records.first() else {
        return Err(Error::EmptyEmbeddingFile);
    };
    let mut store = EmbeddingStore::new(first.vector.len())?;
    for (line, rec) in records {
        store.check(&rec.vector, Some(line))?;
        if store.vectors.contains_key(&rec.key) {
            return Err(Error::DuplicateId { kind: "embedding", id: rec.key, line: Some(line) });
        }
        store.vectors.insert(rec.key, rec.vector);
    }
    Ok(store)
}

/// Cosine between the stored vectors of a query and a snippet.
pub fn embedding_score(store: &EmbeddingStore, query_key: &str, snippet_key: &str) -> Result<f64> {
    let q = store.get(query_key).ok_or_else(|| Error::MissingEmbedding { role: "query", key: query_key.to_owned() })?;
    let s = store
        .get(snippet_key)
        .ok_or_else(|| Error::MissingEmbedding { role: "snippet", key: snippet_key.to_owned() })?;
    cosine(q, s)
}

#[derive(Debug, Serialize)]
struct EncodeRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EncodeResponse {
    vectors: Vec<Vec<f64>>,
    dimension: usize,
}

#[derive(Debug, Serialize)]
struct ScorePair<'a> {
    query: &'a str,
    snippet: &'a str,
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    pairs: Vec<ScorePair<'a>>,
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub dimension: usize,
}

/// Blocking client for the encoder service (`/encode`, `/score`, `/health`).
///
/// Each call is an independent HTTP request with no shared mutable state, so
/// one client can be used from several threads at once.
#[derive(Debug, Clone)]
pub struct EncoderClient {
    base_url: String,
    timeout: Duration,
    expected_dimension: Option<usize>,
    http: reqwest::blocking::Client,
}

impl EncoderClient {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Result<Self> {
        let base_url = base_url.into().trim_end_matches('/').to_owned();
        if base_url.is_empty() {
            return Err(Error::param("base_url", "must be nonempty"));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(EncoderClient { base_url, timeout, expected_dimension: None, http })
    }

    pub fn with_expected_dimension(mut self, dimension: usize) -> Self {
        self.expected_dimension = Some(dimension);
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(&self, route: &str, body: &B) -> Result<R> {
        let url = format!("{}/{route}", self.base_url);
        let resp = self.http.post(&url).json(body).send().map_err(|e| Error::Transport(e.to_string()))?;
        Self::decode(resp)
    }

    fn decode<R: for<'de> Deserialize<'de>>(resp: reqwest::blocking::Response) -> Result<R> {
        let status = resp.status();
        let text = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| Error::MalformedResponse(e.to_string()))
    }

    pub fn health(&self) -> Result<Health> {
        let url = format!("{}/health", self.base_url);
        let resp = self.http.get(&url).send().map_err(|e| Error::Transport(e.to_string()))?;
        Self::decode(resp)
    }

    /// One vector per input text, in input order.
    pub fn fetch_embeddings(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        if texts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let resp: EncodeResponse = self.post("encode", &EncodeRequest { texts })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::CountMismatch { sent: texts.len(), received: resp.vectors.len() });
        }
        let dim = self.expected_dimension.unwrap_or(resp.dimension);
        if resp.dimension != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: resp.dimension, line: None });
        }
        for v in &resp.vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, actual: v.len(), line: None });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::MalformedResponse("non-finite vector component".into()));
            }
        }
        Ok(resp.vectors)
    }

    /// Relevance scores for `(query, snippet)` text pairs, in input order.
    pub fn score_pairs(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let body = ScoreRequest { pairs: pairs.iter().map(|&(query, snippet)| ScorePair { query, snippet }).collect() };
        let resp: ScoreResponse = self.post("score", &body)?;
        if resp.scores.len() != pairs.len() {
            return Err(Error::CountMismatch { sent: pairs.len(), received: resp.scores.len() });
        }
        Ok(resp.scores)
    }
}
