//! Classification and retrieval metrics, plus k-fold splitting.
//!
//! "Average" precision and recall are support-weighted means of the per-class
//! values, with a class that receives no predictions given precision 0. Under
//! this convention an always-relevant predictor on positive fraction `p` scores
//! precision `p^2`, recall `p` and weighted F1 `p * 2p / (1 + p)`.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotation::AnnotatedPair;
use crate::corpus::{EntityDatabase, Query, QueryCategory};
use crate::error::{Error, Result};
use crate::scoring::{relevance_score, ScoreProvider};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Relevant iff `score >= threshold`.
pub fn classify(score: f64, threshold: f64) -> bool {
    score >= threshold
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(predictions: &[bool], golds: &[bool]) -> Result<Self> {
        if predictions.len() != golds.len() {
            return Err(Error::LengthMismatch { predictions: predictions.len(), golds: golds.len() });
        }
        let mut cm = ConfusionMatrix::default();
        for (&p, &g) in predictions.iter().zip(golds) {
            match (p, g) {
                (true, true) => cm.tp += 1,
                (true, false) => cm.fp += 1,
                (false, false) => cm.tn += 1,
                (false, true) => cm.fn_ += 1,
            }
        }
        Ok(cm)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    fn new(hits: usize, predicted: usize, support: usize) -> Self {
        let precision = ratio(hits, predicted);
        let recall = ratio(hits, support);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        ClassMetrics { precision, recall, f1, support }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub irrelevant: ClassMetrics,
    pub relevant: ClassMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub weighted_f1: f64,
    pub per_class: PerClass,
    pub confusion: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let total = cm.total();
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        let relevant = ClassMetrics::new(cm.tp, cm.tp + cm.fp, cm.tp + cm.fn_);
        let irrelevant = ClassMetrics::new(cm.tn, cm.tn + cm.fn_, cm.tn + cm.fp);
        let weigh = |f: fn(&ClassMetrics) -> f64| {
            (f(&relevant) * relevant.support as f64 + f(&irrelevant) * irrelevant.support as f64) / total as f64
        };
        let report = MetricsReport {
            avg_precision: weigh(|c| c.precision),
            avg_recall: weigh(|c| c.recall),
            weighted_f1: weigh(|c| c.f1),
            per_class: PerClass { irrelevant, relevant },
            confusion: cm,
            threshold: None,
        };
        debug_assert!(report.is_consistent());
        Ok(report)
    }

    /// Checks that the weighted figures agree with the per-class ones.
    pub fn is_consistent(&self) -> bool {
        let PerClass { irrelevant, relevant } = &self.per_class;
        let total = (irrelevant.support + relevant.support) as f64;
        let check = |w: f64, a: f64, b: f64| {
            (w - (a * irrelevant.support as f64 + b * relevant.support as f64) / total).abs() < 1e-12
        };
        total == self.confusion.total() as f64
            && check(self.avg_precision, irrelevant.precision, relevant.precision)
            && check(self.avg_recall, irrelevant.recall, relevant.recall)
            && check(self.weighted_f1, irrelevant.f1, relevant.f1)
    }
}

pub fn classification_metrics(predictions: &[bool], golds: &[bool]) -> Result<MetricsReport> {
    let cm = ConfusionMatrix::from_labels(predictions, golds)?;
    MetricsReport::from_confusion(cm)
}

fn query_map(queries: &[Query]) -> HashMap<&str, &Query> {
    queries.iter().map(|q| (q.id.as_str(), q)).collect()
}

/// Scores every pair with `provider`, resolving ids against the queries and
/// the database.
pub fn score_pairs(
    provider: &dyn ScoreProvider,
    pairs: &[AnnotatedPair],
    queries: &[Query],
    db: &EntityDatabase,
) -> Result<Vec<f64>> {
    let by_id = query_map(queries);
    pairs
        .iter()
        .map(|p| {
            let query = by_id.get(p.query_id.as_str()).ok_or_else(|| {
                Error::validation(
                    format!("pair `{}`", p.pair_id),
                    "query_id",
                    format!("unknown query `{}`", p.query_id),
                )
            })?;
            let snippet = db.snippet(&p.snippet_id).ok_or_else(|| {
                Error::validation(
                    format!("pair `{}`", p.pair_id),
                    "snippet_id",
                    format!("unknown snippet `{}`", p.snippet_id),
                )
            })?;
            relevance_score(provider, query, snippet)
        })
        .collect()
}

/// Majority labels of `pairs`; every pair must have one.
pub fn gold_labels(pairs: &[AnnotatedPair]) -> Result<Vec<bool>> {
    pairs
        .iter()
        .map(|p| {
            p.majority.ok_or_else(|| {
                Error::validation(format!("pair `{}`", p.pair_id), "majority", "not set; run the vote first")
            })
        })
        .collect()
}

/// Thresholds the provider's score for each pair and compares with the
/// majority labels.
pub fn evaluate_provider(
    provider: &dyn ScoreProvider,
    pairs: &[AnnotatedPair],
    queries: &[Query],
    db: &EntityDatabase,
    threshold: f64,
) -> Result<MetricsReport> {
    let golds = gold_labels(pairs)?;
    let scores = score_pairs(provider, pairs, queries, db)?;
    evaluate_scores(&scores, &golds, threshold)
}

pub fn evaluate_scores(scores: &[f64], golds: &[bool], threshold: f64) -> Result<MetricsReport> {
    let predictions: Vec<bool> = scores.iter().map(|&s| classify(s, threshold)).collect();
    let mut report = classification_metrics(&predictions, golds)?;
    report.threshold = Some(threshold);
    Ok(report)
}

/// Per-fold reports and their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub folds: Vec<MetricsReport>,
    pub mean_avg_precision: f64,
    pub mean_avg_recall: f64,
    pub mean_weighted_f1: f64,
}

pub fn cross_validate(
    scores: &[f64],
    golds: &[bool],
    folds: &[Vec<usize>],
    threshold: f64,
) -> Result<CrossValidationReport> {
    if scores.len() != golds.len() {
        return Err(Error::LengthMismatch { predictions: scores.len(), golds: golds.len() });
    }
    if folds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let reports = folds
        .iter()
        .map(|fold| {
            let s: Vec<f64> = fold.iter().map(|&i| scores[i]).collect();
            let g: Vec<bool> = fold.iter().map(|&i| golds[i]).collect();
            evaluate_scores(&s, &g, threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    Ok(CrossValidationReport {
        mean_avg_precision: mean(|r| r.avg_precision),
        mean_avg_recall: mean(|r| r.avg_recall),
        mean_weighted_f1: mean(|r| r.weighted_f1),
        folds: reports,
    })
}

/// Splits item indices `0..labels.len()` into `k` folds.
///
/// Indices are shuffled with `ChaCha8Rng::seed_from_u64(seed)`. When
/// `stratify` is set, positives and negatives are shuffled separately and
/// dealt round-robin, positives first, so fold sizes differ by at most one and
/// so do per-fold positive counts. Each fold is returned in ascending order.
pub fn kfold_splits(labels: &[bool], k: usize, seed: u64, stratify: bool) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::param("k", "must be at least 2"));
    }
    if k > labels.len() {
        return Err(Error::TooFewItems { items: labels.len(), folds: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = if stratify {
        let (mut pos, mut neg): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| labels[i]);
        pos.shuffle(&mut rng);
        neg.shuffle(&mut rng);
        pos.into_iter().chain(neg).collect()
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        all
    };
    let mut folds = vec![Vec::with_capacity(labels.len() / k + 1); k];
    for (slot, idx) in order.into_iter().enumerate() {
        folds[slot % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Labels of the top-k snippets judged for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedQuery {
    pub query_id: String,
    pub category: QueryCategory,
    pub labels: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub queries: usize,
    pub pairs: usize,
    pub relevant: usize,
    pub queries_with_relevant: usize,
    pub snippet_relevance_pct: f64,
    pub pct_at_least_one: f64,
    pub avg_relevant: f64,
}

impl RetrievalSummary {
    fn from_queries<'a>(qs: impl IntoIterator<Item = &'a JudgedQuery>) -> Self {
        let (mut queries, mut pairs, mut relevant, mut hit) = (0, 0, 0, 0);
        for q in qs {
            let r = q.labels.iter().filter(|&&l| l).count();
            queries += 1;
            pairs += q.labels.len();
            relevant += r;
            hit += usize::from(r > 0);
        }
        RetrievalSummary {
            queries,
            pairs,
            relevant,
            queries_with_relevant: hit,
            snippet_relevance_pct: 100.0 * ratio(relevant, pairs),
            pct_at_least_one: 100.0 * ratio(hit, queries),
            avg_relevant: ratio(relevant, queries),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    #[serde(flatten)]
    pub overall: RetrievalSummary,
    pub by_category: BTreeMap<QueryCategory, RetrievalSummary>,
}

/// Snippet relevance (micro-averaged), share of queries with at least one
/// relevant snippet, and mean relevant snippets per query, overall and by
/// query category.
pub fn retrieval_metrics(judged: &[JudgedQuery], k_snippets: usize) -> Result<RetrievalReport> {
    if judged.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(q) = judged.iter().find(|q| q.labels.len() > k_snippets) {
        return Err(Error::validation(
            format!("query `{}`", q.query_id),
            "labels",
            format!("{} judged snippets exceeds k = {k_snippets}", q.labels.len()),
        ));
    }
    let mut groups: BTreeMap<QueryCategory, Vec<&JudgedQuery>> = BTreeMap::new();
    for q in judged {
        groups.entry(q.category).or_default().push(q);
    }
    Ok(RetrievalReport {
        overall: RetrievalSummary::from_queries(judged),
        by_category: groups.into_iter().map(|(c, qs)| (c, RetrievalSummary::from_queries(qs))).collect(),
    })
}

/// Groups the majority-labeled pairs selected by `method` per query, in query
/// file order. Queries without such pairs are skipped.
pub fn judged_queries_for_method(pairs: &[AnnotatedPair], method: &str, queries: &[Query]) -> Vec<JudgedQuery> {
    let mut per_query: HashMap<&str, Vec<bool>> = HashMap::new();
    for p in pairs.iter().filter(|p| p.source_methods.iter().any(|m| m == method)) {
        if let Some(m) = p.majority {
            per_query.entry(p.query_id.as_str()).or_default().push(m);
        }
    }
    queries
        .iter()
        .filter_map(|q| {
            per_query.remove(q.id.as_str()).map(|labels| JudgedQuery {
                query_id: q.id.clone(),
                category: q.category,
                labels,
            })
        })
        .collect()
}

/// Plain-text table of classification results: model, training data and the
/// three averaged metrics to three decimals.
pub fn classification_table(rows: &[(&str, &str, &MetricsReport)]) -> String {
    let header = ["Model", "Training data", "Avg Precision", "Avg Recall", "Weighted F1"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|(model, data, r)| {
            [
                model.to_string(),
                if data.is_empty() { "-".into() } else { data.to_string() },
                format!("{:.3}", r.avg_precision),
                format!("{:.3}", r.avg_recall),
                format!("{:.3}", r.weighted_f1),
            ]
        })
        .collect();
    render_table(&header.map(String::from), &body)
}

/// Plain-text table of retrieval results: snippet relevance overall and per
/// preference category (pair counts in parentheses), then the two
/// recommendation measures.
pub fn retrieval_table(rows: &[(&str, &RetrievalReport)]) -> String {
    let cats = [QueryCategory::MenuItem, QueryCategory::Objective, QueryCategory::Subjective];
    let pairs_in =
        |c: QueryCategory| -> usize { rows.first().and_then(|(_, r)| r.by_category.get(&c)).map_or(0, |s| s.pairs) };
    let all_pairs = rows.first().map_or(0, |(_, r)| r.overall.pairs);
    let header = [
        "Model".to_string(),
        format!("All ({all_pairs})"),
        format!("Menu Item ({})", pairs_in(cats[0])),
        format!("Objective ({})", pairs_in(cats[1])),
        format!("Subjective ({})", pairs_in(cats[2])),
        "% with at least one relevant".to_string(),
        "avg relevant".to_string(),
    ];
    let pct = |s: Option<&RetrievalSummary>| s.map_or("-".to_string(), |s| format!("{:.1}%", s.snippet_relevance_pct));
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|(model, r)| {
            [
                model.to_string(),
                pct(Some(&r.overall)),
                pct(r.by_category.get(&cats[0])),
                pct(r.by_category.get(&cats[1])),
                pct(r.by_category.get(&cats[2])),
                format!("{:.1}%", r.overall.pct_at_least_one),
                format!("{:.2}", r.overall.avg_relevant),
            ]
        })
        .collect();
    render_table(&header, &body)
}

fn render_table<const N: usize>(header: &[String; N], body: &[[String; N]]) -> String {
    let mut widths = header.each_ref().map(|h| h.chars().count());
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String; N]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for row in body {
        line(&mut out, row);
    }
    out
}
