use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    /// A record parsed but violates a domain invariant.
    #[error("{context}: invalid `{field}`: {message}")]
    Validation { context: String, field: String, message: String },

    #[error("duplicate {kind} id `{id}`{}", line_suffix(*.line))]
    DuplicateId { kind: &'static str, id: String, line: Option<u64> },

    #[error("index contains no tokens: every snippet tokenized to nothing")]
    EmptyVocabulary,

    #[error("snippet `{0}` is not indexed")]
    UnknownSnippet(String),

    #[error("dimension mismatch: expected {expected}, got {actual}{}", line_suffix(*.line))]
    DimensionMismatch { expected: usize, actual: usize, line: Option<u64> },

    #[error("empty embedding file")]
    EmptyEmbeddingFile,

    #[error("missing embedding for {role} key `{key}`")]
    MissingEmbedding { role: &'static str, key: String },

    #[error("empty batch")]
    EmptyBatch,

    #[error("count mismatch: sent {sent} items, service returned {received}")]
    CountMismatch { sent: usize, received: usize },

    #[error("encoder service transport error: {0}")]
    Transport(String),

    #[error("malformed encoder service response: {0}")]
    MalformedResponse(String),

    #[error("no score for pair (query `{query_id}`, snippet `{snippet_id}`)")]
    MissingScore { query_id: String, snippet_id: String },

    #[error("score {score} for pair (query `{query_id}`, snippet `{snippet_id}`) is {problem}")]
    InvalidScore { query_id: String, snippet_id: String, score: f64, problem: &'static str },

    #[error("three-way scores ({entailment}, {neutral}, {contradiction}) are not a probability distribution")]
    SimplexViolation { entailment: f64, neutral: f64, contradiction: f64 },

    #[error("empty database")]
    EmptyDatabase,

    #[error("unknown constraint key `{0}` (expected area, cuisine or price_range)")]
    UnknownConstraintKey(String),

    #[error("no entity matches constraints")]
    NoEntityMatches,

    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("empty ranking")]
    EmptyRanking,

    #[error("majority vote needs an odd number of at least 3 labels, got {count}{}", pair_suffix(.pair_id))]
    InvalidVoteCount { count: usize, pair_id: Option<String> },

    #[error("submission has no answer for gold pair `{0}`")]
    MissingGoldAnswer(String),

    #[error("degenerate: chance agreement is 1")]
    DegenerateKappa,

    #[error("invalid rating matrix: {0}")]
    InvalidRatings(String),

    #[error("length mismatch: {predictions} predictions vs {golds} gold labels")]
    LengthMismatch { predictions: usize, golds: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("cannot split {items} items into {folds} folds")]
    TooFewItems { items: usize, folds: usize },

    #[error("bad index file: {0}")]
    BadIndexFile(String),
}

fn line_suffix(line: Option<u64>) -> String {
    match line {
        Some(l) => format!(" at line {l}"),
        None => String::new(),
    }
}

fn pair_suffix(pair: &Option<String>) -> String {
    match pair {
        Some(p) => format!(" for pair `{p}`"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl ToString) -> Self {
        Error::Parse { path: path.into(), line, message: message.to_string() }
    }

    pub(crate) fn validation(context: impl Into<String>, field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { context: context.into(), field: field.into(), message: message.into() }
    }

    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter { name, message: message.into() }
    }
}
