//! Relevance scorers behind a single provider interface.
//!
//! A provider maps a `(query, snippet)` pair to a finite score where higher
//! means more relevant. Pairs a provider cannot resolve are errors, never a
//! silent default.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use crate::corpus::{Query, Snippet};
use crate::embedding::{embedding_score, EmbeddingStore, EncoderClient};
use crate::error::{Error, Result};
use crate::tfidf::TfIdfIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    TfIdf,
    EmbeddingCosine,
    ScoreTable,
    EncoderService,
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::TfIdf => "tfidf",
            ProviderKind::EmbeddingCosine => "embedding",
            ProviderKind::ScoreTable => "table",
            ProviderKind::EncoderService => "service",
        })
    }
}

pub trait ScoreProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    fn score(&self, query: &Query, snippet: &Snippet) -> Result<f64>;

    /// Scores many snippets for one query. Providers with per-query setup or
    /// remote round trips override this.
    fn score_batch(&self, query: &Query, snippets: &[Snippet]) -> Result<Vec<f64>> {
        snippets.iter().map(|s| self.score(query, s)).collect()
    }
}

fn check_finite(query: &Query, snippet: &Snippet, score: f64) -> Result<f64> {
    if score.is_finite() {
        Ok(score)
    } else {
        Err(Error::InvalidScore {
            query_id: query.id.clone(),
            snippet_id: snippet.id.clone(),
            score,
            problem: "not finite",
        })
    }
}

/// Scores one pair, rejecting non-finite output.
pub fn relevance_score(provider: &dyn ScoreProvider, query: &Query, snippet: &Snippet) -> Result<f64> {
    let score = provider.score(query, snippet)?;
    check_finite(query, snippet, score)
}

/// Batch form of [`relevance_score`].
pub fn relevance_scores(provider: &dyn ScoreProvider, query: &Query, snippets: &[Snippet]) -> Result<Vec<f64>> {
    let scores = provider.score_batch(query, snippets)?;
    if scores.len() != snippets.len() {
        return Err(Error::CountMismatch { sent: snippets.len(), received: scores.len() });
    }
    scores.into_iter().zip(snippets).map(|(score, s)| check_finite(query, s, score)).collect()
}

/// Cosine over TF-IDF vectors; the query is vectorized from its text.
#[derive(Debug, Clone)]
pub struct TfIdfProvider {
    index: Arc<TfIdfIndex>,
}

impl TfIdfProvider {
    pub fn new(index: Arc<TfIdfIndex>) -> Self {
        TfIdfProvider { index }
    }

    pub fn index(&self) -> &TfIdfIndex {
        &self.index
    }
}

impl ScoreProvider for TfIdfProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::TfIdf
    }

    fn score(&self, query: &Query, snippet: &Snippet) -> Result<f64> {
        self.index.score(&query.text, &snippet.id)
    }

    fn score_batch(&self, query: &Query, snippets: &[Snippet]) -> Result<Vec<f64>> {
        let q = self.index.vectorize(&query.text);
        snippets.iter().map(|s| self.index.score_vector(&q, &s.id)).collect()
    }
}

/// Cosine over stored dense embeddings, keyed by query id and snippet id.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    store: Arc<EmbeddingStore>,
}

impl EmbeddingProvider {
    pub fn new(store: Arc<EmbeddingStore>) -> Self {
        EmbeddingProvider { store }
    }
}

impl ScoreProvider for EmbeddingProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::EmbeddingCosine
    }

    fn score(&self, query: &Query, snippet: &Snippet) -> Result<f64> {
        embedding_score(&self.store, &query.id, &snippet.id)
    }
}

/// Precomputed scores keyed by `(query_id, snippet_id)`, each in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    entries: HashMap<(String, String), f64>,
    pub model: String,
    pub source: String,
}

impl ScoreTable {
    pub fn new(model: impl Into<String>) -> Self {
        ScoreTable { model: model.into(), ..Default::default() }
    }

    pub fn insert(&mut self, query_id: impl Into<String>, snippet_id: impl Into<String>, score: f64) -> Result<()> {
        let key = (query_id.into(), snippet_id.into());
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidScore { query_id: key.0, snippet_id: key.1, score, problem: "outside [0, 1]" });
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateId {
                kind: "score table pair",
                id: format!("{},{}", key.0, key.1),
                line: None,
            });
        }
        self.entries.insert(key, score);
        Ok(())
    }

    pub fn get(&self, query_id: &str, snippet_id: &str) -> Option<f64> {
        self.entries.get(&(query_id.to_owned(), snippet_id.to_owned())).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ScoreProvider for ScoreTable {
    fn kind(&self) -> ProviderKind {
        ProviderKind::ScoreTable
    }

    fn score(&self, query: &Query, snippet: &Snippet) -> Result<f64> {
        self.get(&query.id, &snippet.id)
            .ok_or_else(|| Error::MissingScore { query_id: query.id.clone(), snippet_id: snippet.id.clone() })
    }
}

/// Scores from the encoder service's `/score` endpoint.
#[derive(Debug, Clone)]
pub struct EncoderServiceProvider {
    client: EncoderClient,
}

impl EncoderServiceProvider {
    pub fn new(client: EncoderClient) -> Self {
        EncoderServiceProvider { client }
    }
}

impl ScoreProvider for EncoderServiceProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::EncoderService
    }

    fn score(&self, query: &Query, snippet: &Snippet) -> Result<f64> {
        Ok(self.score_batch(query, std::slice::from_ref(snippet))?[0])
    }

    fn score_batch(&self, query: &Query, snippets: &[Snippet]) -> Result<Vec<f64>> {
        if snippets.is_empty() {
            return Ok(Vec::new());
        }
        let pairs: Vec<(&str, &str)> = snippets.iter().map(|s| (query.text.as_str(), s.text.as_str())).collect();
        let scores = self.client.score_pairs(&pairs)?;
        for (s, &score) in snippets.iter().zip(&scores) {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::InvalidScore {
                    query_id: query.id.clone(),
                    snippet_id: s.id.clone(),
                    score,
                    problem: "outside [0, 1]",
                });
            }
        }
        Ok(scores)
    }
}

pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

/// Entailment / neutral / contradiction probabilities from a 3-way NLI model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeWayScores {
    pub entailment: f64,
    pub neutral: f64,
    pub contradiction: f64,
}

impl ThreeWayScores {
    pub fn new(entailment: f64, neutral: f64, contradiction: f64) -> Result<Self> {
        let s = ThreeWayScores { entailment, neutral, contradiction };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.entailment, self.neutral, self.contradiction];
        let ok = parts.iter().all(|p| p.is_finite() && *p >= 0.0)
            && (parts.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE;
        if ok {
            Ok(())
        } else {
            Err(Error::SimplexViolation {
                entailment: self.entailment,
                neutral: self.neutral,
                contradiction: self.contradiction,
            })
        }
    }
}

/// Collapses neutral and contradiction into "not relevant": the relevance
/// score is the entailment probability.
pub fn snli_to_binary(scores: &ThreeWayScores) -> Result<f64> {
    scores.validate()?;
    Ok(scores.entailment.min(1.0))
}

fn open_csv(path: &Path, expected: &[&str]) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::parse(path, 1, e))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(path, 1, format!("expected header `{}`", expected.join(","))));
    }
    Ok(reader)
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

#[derive(Deserialize)]
struct ScoreRow {
    query_id: String,
    snippet_id: String,
    score: f64,
}

/// Reads a `query_id,snippet_id,score` CSV.
pub fn load_score_table(path: &Path) -> Result<ScoreTable> {
    let mut reader = open_csv(path, &["query_id", "snippet_id", "score"])?;
    let mut table = ScoreTable::new(file_stem(path));
    table.source = path.display().to_string();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e))?;
        let line = record_line(&rec);
        let row: ScoreRow = rec.deserialize(None).map_err(|e| Error::parse(path, line, e))?;
        table.insert(row.query_id, row.snippet_id, row.score).map_err(|e| Error::parse(path, line, e))?;
    }
    Ok(table)
}

#[derive(Deserialize)]
struct ThreeWayRow {
    query_id: String,
    snippet_id: String,
    entailment: f64,
    neutral: f64,
    contradiction: f64,
}

/// Reads a `query_id,snippet_id,entailment,neutral,contradiction` CSV and maps
/// each row to its binary relevance score.
pub fn load_three_way_table(path: &Path) -> Result<ScoreTable> {
    let mut reader = open_csv(path, &["query_id", "snippet_id", "entailment", "neutral", "contradiction"])?;
    let mut table = ScoreTable::new(file_stem(path));
    table.source = path.display().to_string();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e))?;
        let line = record_line(&rec);
        let row: ThreeWayRow = rec.deserialize(None).map_err(|e| Error::parse(path, line, e))?;
        let score = ThreeWayScores::new(row.entailment, row.neutral, row.contradiction)
            .and_then(|s| snli_to_binary(&s))
            .map_err(|e| Error::parse(path, line, e))?;
        table.insert(row.query_id, row.snippet_id, score).map_err(|e| Error::parse(path, line, e))?;
    }
    Ok(table)
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
