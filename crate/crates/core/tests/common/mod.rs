//! Reference implementations and fixture builders shared by the integration
//! tests and the acceptance runner. The oracles are written from the formulas
//! directly and share no code with the library.
#![allow(dead_code)]

pub mod stub;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use snipq::corpus::{EntityDatabase, EntityRecord, Query, Review, Snippet, SnippetSource};
use snipq::ranking::RankedEntity;
use snipq::scoring::ScoreTable;
use snipq::tfidf::{SparseVector, TfIdfIndex};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

// ---- TF-IDF ----

pub fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Document frequencies and smoothed idf over `docs`.
pub fn oracle_idf(docs: &[&str]) -> BTreeMap<String, f64> {
    let n = docs.len() as f64;
    let mut df: BTreeMap<String, f64> = BTreeMap::new();
    for d in docs {
        let toks = oracle_tokens(d);
        let mut seen: Vec<&String> = Vec::new();
        for t in &toks {
            if !seen.contains(&t) {
                seen.push(t);
                *df.entry(t.clone()).or_insert(0.0) += 1.0;
            }
        }
    }
    df.into_iter().map(|(t, c)| (t, ((1.0 + n) / (1.0 + c)).ln() + 1.0)).collect()
}

pub fn oracle_weights(text: &str, idf: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut w = BTreeMap::new();
    for t in oracle_tokens(text) {
        if let Some(v) = idf.get(&t) {
            *w.entry(t).or_insert(0.0) += v;
        }
    }
    w
}

pub fn oracle_cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().map(|(t, x)| x * b.get(t).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

pub fn snippets_from_docs<S: AsRef<str>>(docs: &[S]) -> Vec<Snippet> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| Snippet {
            id: format!("d{i}#description#0"),
            entity_id: format!("d{i}"),
            source: SnippetSource::Description,
            text: d.as_ref().to_owned(),
        })
        .collect()
}

const WORDS: [&str; 12] =
    ["cheap", "pizza", "vegan", "food", "italian", "cosy", "pub", "dogs", "quiet", "wine", "spicy", "noodles"];

/// Up to `max_docs` documents of up to `max_tokens` words from a small
/// vocabulary, with at least one nonempty document.
pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize, max_tokens: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max_docs);
    let mut docs: Vec<String> = (0..n)
        .map(|_| {
            let len = rng.gen_range(0..=max_tokens);
            let words: Vec<&str> = (0..len).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
            words.join(if rng.gen_bool(0.5) { " " } else { ", " })
        })
        .collect();
    if docs.iter().all(|d| d.is_empty()) {
        docs[0] = WORDS[rng.gen_range(0..WORDS.len())].to_owned();
    }
    docs
}

fn index_weights(index: &TfIdfIndex, v: &SparseVector, oracle: &BTreeMap<String, f64>) -> Result<(), String> {
    if v.entries().len() != oracle.len() {
        return Err(format!("{} nonzero weights, oracle has {}", v.entries().len(), oracle.len()));
    }
    for (t, w) in oracle {
        let col = index.column(t).ok_or_else(|| format!("token `{t}` missing from vocabulary"))?;
        if !close(v.get(col), *w, 1e-9) {
            return Err(format!("weight of `{t}`: {} vs oracle {w}", v.get(col)));
        }
    }
    Ok(())
}

/// Compares idf, document weights, query weights and cosine scores of the
/// library index against the oracle within `tol`.
pub fn check_tfidf(docs: &[String], queries: &[String], tol: f64) -> Result<(), String> {
    let snippets = snippets_from_docs(docs);
    let index = TfIdfIndex::build(&snippets).map_err(|e| e.to_string())?;
    let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
    let idf = oracle_idf(&refs);
    if index.vocabulary_size() != idf.len() {
        return Err(format!("vocabulary {} vs oracle {}", index.vocabulary_size(), idf.len()));
    }
    for (t, v) in &idf {
        let got = index.idf(t).ok_or_else(|| format!("no idf for `{t}`"))?;
        if !close(got, *v, tol) {
            return Err(format!("idf(`{t}`) {got} vs oracle {v}"));
        }
    }
    let doc_weights: Vec<_> = docs.iter().map(|d| oracle_weights(d, &idf)).collect();
    for (s, w) in snippets.iter().zip(&doc_weights) {
        index_weights(&index, index.snippet_vector(&s.id).unwrap(), w).map_err(|e| format!("{}: {e}", s.id))?;
    }
    for q in queries {
        let qw = oracle_weights(q, &idf);
        index_weights(&index, &index.vectorize(q), &qw).map_err(|e| format!("query `{q}`: {e}"))?;
        for (s, w) in snippets.iter().zip(&doc_weights) {
            let got = index.score(q, &s.id).map_err(|e| e.to_string())?;
            let want = oracle_cosine(&qw, w);
            if !close(got, want, tol) {
                return Err(format!("cos(`{q}`, {}) {got} vs oracle {want}", s.id));
            }
        }
    }
    Ok(())
}

// ---- ranking ----

/// `(entity_id, item_score, [(snippet_id, score)])`, best first.
pub type Row = (String, f64, Vec<(String, f64)>);

/// One entity of a synthetic ranking instance: its id and its snippet scores.
#[derive(Debug, Clone)]
pub struct InstanceEntity {
    pub id: String,
    pub scores: Vec<f64>,
}

impl InstanceEntity {
    pub fn snippet_id(&self, i: usize) -> String {
        format!("{}#review#{i}", self.id)
    }
}

/// Enumerate, sort, average. Sorting is a plain insertion sort on explicit
/// comparisons so it shares nothing with the library's ordering helpers.
pub fn oracle_rank(entities: &[InstanceEntity], j: usize, n: usize, strict: bool) -> Vec<Row> {
    let before = |a: &(String, f64), b: &(String, f64)| a.1 > b.1 || (a.1 == b.1 && a.0 < b.0);
    let mut rows: Vec<Row> = Vec::new();
    for e in entities {
        let mut snips: Vec<(String, f64)> = Vec::new();
        for (i, &s) in e.scores.iter().enumerate() {
            let item = (e.snippet_id(i), s);
            let pos = snips.iter().position(|x| before(&item, x)).unwrap_or(snips.len());
            snips.insert(pos, item);
        }
        snips.truncate(j);
        let mut total = 0.0;
        for s in &snips {
            total += s.1;
        }
        let count = if strict { j } else { snips.len() };
        let avg = if count == 0 { 0.0 } else { total / count as f64 };
        let row = (e.id.clone(), avg, snips);
        let pos = rows.iter().position(|r| row.1 > r.1 || (row.1 == r.1 && row.0 < r.0)).unwrap_or(rows.len());
        rows.insert(pos, row);
    }
    rows.truncate(n);
    rows
}

pub fn flatten_ranking(ranked: &[RankedEntity]) -> Vec<Row> {
    ranked
        .iter()
        .map(|r| {
            (
                r.entity_id.clone(),
                r.item_score,
                r.top_snippets.iter().map(|s| (s.snippet_id.clone(), s.score)).collect(),
            )
        })
        .collect()
}

/// Random instance: up to `max_entities` entities with up to `max_snippets`
/// snippets each. Scores come from a small grid so ties are common.
pub fn random_instance(rng: &mut ChaCha8Rng, max_entities: usize, max_snippets: usize) -> Vec<InstanceEntity> {
    let count = rng.gen_range(1..=max_entities);
    (0..count)
        .map(|i| {
            let k = rng.gen_range(0..=max_snippets);
            let scores = (0..k)
                .map(|_| if rng.gen_bool(0.3) { f64::from(rng.gen_range(0..=8u8)) / 8.0 } else { rng.gen::<f64>() })
                .collect();
            InstanceEntity { id: format!("e{i:02}"), scores }
        })
        .collect()
}

fn review_entity(id: &str, reviews: usize) -> EntityRecord {
    EntityRecord {
        id: id.into(),
        name: id.into(),
        cuisines: vec![],
        price_range: None,
        location: None,
        meals: vec![],
        special_diets: vec![],
        description: String::new(),
        reviews: (0..reviews).map(|i| Review { text: format!("review {i}"), rating: 5 }).collect(),
    }
}

/// Database and score table realising an instance for query `q`.
pub fn instance_db(entities: &[InstanceEntity]) -> (EntityDatabase, ScoreTable, Query) {
    let records = entities.iter().map(|e| review_entity(&e.id, e.scores.len())).collect();
    let db = EntityDatabase::new(records, 1).expect("valid instance");
    let mut table = ScoreTable::new("instance");
    for e in entities {
        for (i, &s) in e.scores.iter().enumerate() {
            table.insert("q", e.snippet_id(i), s).expect("score in range");
        }
    }
    (db, table, Query::new("q", "instance query"))
}

// ---- metrics ----

/// Weighted precision, recall and F1 computed by scanning each class in turn.
pub fn oracle_metrics(preds: &[bool], golds: &[bool]) -> (f64, f64, f64) {
    let total = golds.len() as f64;
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for class in [false, true] {
        let mut predicted = 0.0;
        let mut support = 0.0;
        let mut hit = 0.0;
        for (x, y) in preds.iter().zip(golds) {
            if *x == class {
                predicted += 1.0;
            }
            if *y == class {
                support += 1.0;
            }
            if *x == class && *y == class {
                hit += 1.0;
            }
        }
        let prec = if predicted > 0.0 { hit / predicted } else { 0.0 };
        let rec = if support > 0.0 { hit / support } else { 0.0 };
        let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        p += prec * support / total;
        r += rec * support / total;
        f += f1 * support / total;
    }
    (p, r, f)
}

/// Closed form of the always-relevant predictor at positive fraction `p`.
pub fn baseline_closed_form(p: f64) -> (f64, f64, f64) {
    (p * p, p, 2.0 * p * p / (1.0 + p))
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// ---- annotation ----

/// A ranking of `entities` entities with `snippets` snippets each whose ids
/// embed `method`, so rankings from different methods never share a pair.
pub fn disjoint_ranking(method: &str, entities: usize, snippets: usize) -> Vec<RankedEntity> {
    (0..entities)
        .map(|e| RankedEntity {
            entity_id: format!("{method}-e{e}"),
            item_score: 1.0 - e as f64 / 10.0,
            top_snippets: (0..snippets)
                .map(|s| snipq::ranking::ScoredSnippet {
                    snippet_id: format!("{method}-e{e}#review#{s}"),
                    score: 1.0 - s as f64 / 10.0,
                })
                .collect(),
        })
        .collect()
}

/// Samples `queries` queries named with `prefix` under each of `methods`.
pub fn sample_counts(
    sampler: &mut snipq::annotation::PairSampler,
    prefix: &str,
    queries: usize,
    methods: &[&str],
) -> snipq::Result<()> {
    for q in 0..queries {
        let query = Query::new(format!("{prefix}{q:03}"), "synthetic");
        for m in methods {
            sampler.add(&query, m, &disjoint_ranking(m, 5, 5))?;
        }
    }
    Ok(())
}

// ---- evaluation ----

/// `pos` positives followed by `neg` negatives.
pub fn labels(pos: usize, neg: usize) -> Vec<bool> {
    let mut v = vec![true; pos];
    v.extend(vec![false; neg]);
    v
}

/// 100 queries with five judged snippets each: 76 queries with four relevant
/// snippets, 7 with three and 17 with none (325 relevant, 83 queries hit).
pub fn retrieval_fixture() -> Vec<snipq::evaluation::JudgedQuery> {
    use snipq::corpus::QueryCategory;
    (0..100)
        .map(|i| {
            let relevant = match i {
                0..=75 => 4,
                76..=82 => 3,
                _ => 0,
            };
            let category = [QueryCategory::MenuItem, QueryCategory::Objective, QueryCategory::Subjective][i % 3];
            snipq::evaluation::JudgedQuery {
                query_id: format!("q{i:03}"),
                category,
                labels: (0..5).map(|k| k < relevant).collect(),
            }
        })
        .collect()
}

/// Checks that `folds` partition `0..labels.len()` into `k` folds of equal
/// size (up to one) whose positive counts are within one of proportional.
pub fn check_folds(folds: &[Vec<usize>], labels: &[bool], k: usize) -> Result<(), String> {
    if folds.len() != k {
        return Err(format!("{} folds, expected {k}", folds.len()));
    }
    let mut seen = vec![false; labels.len()];
    for f in folds {
        for &i in f {
            if std::mem::replace(&mut seen[i], true) {
                return Err(format!("index {i} in two folds"));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err("folds do not cover every item".into());
    }
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let n = labels.len() as f64;
    for (i, f) in folds.iter().enumerate() {
        let size = f.len() as f64;
        if (size - n / k as f64).abs() >= 1.0 {
            return Err(format!("fold {i} has {} items", f.len()));
        }
        let pos = f.iter().filter(|&&j| labels[j]).count() as f64;
        let want = positives * size / n;
        if (pos - want).abs() > 1.0 {
            return Err(format!("fold {i} has {pos} positives, proportional is {want:.2}"));
        }
    }
    Ok(())
}

/// Three deterministic labels per pair; the first annotator disagrees with
/// the other two on every fourth pair.
pub fn synthesize_labels(pairs_path: &std::path::Path, out: &std::path::Path) {
    let mut csv = String::from("pair_id,query_id,snippet_id,annotator_id,label\n");
    for (i, line) in std::fs::read_to_string(pairs_path).unwrap().lines().enumerate() {
        let pair: snipq::annotation::AnnotatedPair = serde_json::from_str(line).unwrap();
        let truth = u8::from(i % 3 != 0);
        for (w, label) in [("w1", if i % 4 == 0 { 1 - truth } else { truth }), ("w2", truth), ("w3", truth)] {
            csv.push_str(&format!("{},{},{},{w},{label}\n", pair.pair_id, pair.query_id, pair.snippet_id));
        }
    }
    std::fs::write(out, csv).unwrap();
}
