//! TF-IDF index over snippets and cosine scoring of query text against it.
//!
//! Every snippet is one document. Term weights are `count(t) * idf(t)` with the
//! smoothed `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, so every weight is
//! strictly positive and cosine scores fall in `[0, 1]`. Queries are vectorized
//! with the corpus idf; query tokens missing from the vocabulary are dropped.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Snippet;
use crate::error::{Error, Result};

/// Magic first line of a persisted index.
pub const INDEX_MAGIC: &str = "SNIPQ-TFIDF-1";

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

/// Sparse vector with strictly increasing column ids and strictly positive weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from `(column, weight)` pairs in any order. Duplicate
    /// columns are summed and zero weights dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (col, w) in pairs {
            *acc.entry(col).or_insert(0.0) += w;
        }
        SparseVector { entries: acc.into_iter().filter(|&(_, w)| w != 0.0).collect() }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, col: u32) -> f64 {
        self.entries.binary_search_by_key(&col, |&(c, _)| c).map(|i| self.entries[i].1).unwrap_or(0.0)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    /// Merge-join dot product.
    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (a, b) = (&self.entries, &other.entries);
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    sum += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }

    /// Cosine similarity, 0 when either vector is zero. Clamped to `[0, 1]`
    /// since both vectors are nonnegative.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (self.dot(other) / denom).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfIndex {
    vocabulary: BTreeMap<String, u32>,
    idf: Vec<f64>,
    doc_count: usize,
    snippet_ids: Vec<String>,
    vectors: Vec<SparseVector>,
    #[serde(skip)]
    row_of: HashMap<String, usize>,
}

impl TfIdfIndex {
    /// Builds the index with one document per snippet. Column ids follow the
    /// lexicographic order of the vocabulary.
    pub fn build(snippets: &[Snippet]) -> Result<Self> {
        if snippets.is_empty() {
            return Err(Error::EmptyInput);
        }
        let docs: Vec<Vec<String>> = snippets.iter().map(|s| tokenize(&s.text)).collect();

        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in &docs {
            let mut seen: Vec<&str> = doc.iter().map(String::as_str).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        if df.is_empty() {
            return Err(Error::EmptyVocabulary);
        }

        let n = snippets.len() as f64;
        let mut vocabulary = BTreeMap::new();
        let mut idf = Vec::with_capacity(df.len());
        for (col, (term, &count)) in df.iter().enumerate() {
            vocabulary.insert((*term).to_owned(), col as u32);
            idf.push(smoothed_idf(n, count as f64));
        }

        let mut index = TfIdfIndex {
            vocabulary,
            idf,
            doc_count: snippets.len(),
            snippet_ids: snippets.iter().map(|s| s.id.clone()).collect(),
            vectors: Vec::new(),
            row_of: HashMap::new(),
        };
        index.vectors = docs.iter().map(|d| index.weigh(d)).collect();
        index.rebuild_rows()?;
        Ok(index)
    }

    fn rebuild_rows(&mut self) -> Result<()> {
        self.row_of = HashMap::with_capacity(self.snippet_ids.len());
        for (i, id) in self.snippet_ids.iter().enumerate() {
            if self.row_of.insert(id.clone(), i).is_some() {
                return Err(Error::DuplicateId { kind: "snippet", id: id.clone(), line: None });
            }
        }
        Ok(())
    }

    fn weigh<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        SparseVector::from_pairs(
            tokens.iter().filter_map(|t| self.vocabulary.get(t.as_ref()).map(|&col| (col, self.idf[col as usize]))),
        )
    }

    /// Query-side TF-IDF vector: term count times corpus idf.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        self.weigh(&tokenize(text))
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn column(&self, token: &str) -> Option<u32> {
        self.vocabulary.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.column(token).map(|c| self.idf[c as usize])
    }

    pub fn snippet_vector(&self, snippet_id: &str) -> Option<&SparseVector> {
        self.row_of.get(snippet_id).map(|&r| &self.vectors[r])
    }

    /// Cosine between `query_text` and an indexed snippet.
    pub fn score(&self, query_text: &str, snippet_id: &str) -> Result<f64> {
        self.score_vector(&self.vectorize(query_text), snippet_id)
    }

    pub fn score_vector(&self, query: &SparseVector, snippet_id: &str) -> Result<f64> {
        let doc = self.snippet_vector(snippet_id).ok_or_else(|| Error::UnknownSnippet(snippet_id.to_owned()))?;
        Ok(query.cosine(doc))
    }

    /// Writes the index as the magic line followed by a JSON body.
    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self).expect("index serializes");
        fs::write(path, format!("{INDEX_MAGIC}\n{body}\n")).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let (magic, body) = raw.split_once('\n').ok_or_else(|| Error::BadIndexFile("missing header line".into()))?;
        if magic.trim_end() != INDEX_MAGIC {
            return Err(Error::BadIndexFile(format!("expected header `{INDEX_MAGIC}`, found `{magic}`")));
        }
        let mut index: TfIdfIndex = serde_json::from_str(body).map_err(|e| Error::BadIndexFile(e.to_string()))?;
        let cols = index.idf.len() as u32;
        if index.vocabulary.len() != index.idf.len()
            || index.vectors.len() != index.snippet_ids.len()
            || index.vocabulary.values().any(|&c| c >= cols)
            || index.vectors.iter().flat_map(|v| v.entries()).any(|&(c, w)| c >= cols || w.is_nan() || w <= 0.0)
        {
            return Err(Error::BadIndexFile("inconsistent index contents".into()));
        }
        index.rebuild_rows()?;
        Ok(index)
    }
}

fn smoothed_idf(n: f64, df: f64) -> f64 {
    ((1.0 + n) / (1.0 + df)).ln() + 1.0
}
