//! Building the annotated query-snippet dataset.
//!
//! For every query and scoring method, one of the top-ranked entities is drawn
//! at random and its top snippets become candidate pairs. Crowd labels for the
//! pairs are aggregated by majority vote, workers are screened with known-label
//! gold pairs, and agreement is measured with Fleiss' kappa.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so a run is
//! fully determined by its seed and the order of calls.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Query;
use crate::error::{Error, Result};
use crate::ranking::RankedEntity;

pub const DEFAULT_K_ENTITIES: usize = 5;
pub const DEFAULT_K_SNIPPETS: usize = 5;
pub const DEFAULT_HIT_SIZE: usize = 23;
pub const DEFAULT_GOLD_PER_HIT: usize = 3;

mod binary {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn to_bit(b: bool) -> u8 {
        u8::from(b)
    }

    pub fn from_bit<E: de::Error>(v: u8) -> Result<bool, E> {
        match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(E::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }

    pub mod map {
        use super::*;
        use std::collections::BTreeMap;

        pub fn serialize<S: Serializer>(m: &BTreeMap<String, bool>, s: S) -> Result<S::Ok, S::Error> {
            s.collect_map(m.iter().map(|(k, &v)| (k, to_bit(v))))
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, bool>, D::Error> {
            BTreeMap::<String, u8>::deserialize(d)?.into_iter().map(|(k, v)| from_bit(v).map(|b| (k, b))).collect()
        }
    }

    pub mod opt {
        use super::*;

        pub fn serialize<S: Serializer>(v: &Option<bool>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(b) => s.serialize_some(&to_bit(*b)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
            Option::<u8>::deserialize(d)?.map(from_bit).transpose()
        }
    }
}

/// A query-snippet pair, with crowd labels once annotated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedPair {
    pub pair_id: String,
    pub query_id: String,
    pub snippet_id: String,
    /// Scoring methods that selected this pair.
    #[serde(default)]
    pub source_methods: Vec<String>,
    #[serde(default, with = "binary::map")]
    pub labels: BTreeMap<String, bool>,
    #[serde(default, with = "binary::opt", skip_serializing_if = "Option::is_none")]
    pub majority: Option<bool>,
}

impl AnnotatedPair {
    pub fn new(query_id: &str, snippet_id: &str) -> Self {
        AnnotatedPair {
            pair_id: pair_id(query_id, snippet_id),
            query_id: query_id.to_owned(),
            snippet_id: snippet_id.to_owned(),
            source_methods: Vec::new(),
            labels: BTreeMap::new(),
            majority: None,
        }
    }
}

pub fn pair_id(query_id: &str, snippet_id: &str) -> String {
    format!("{query_id}::{snippet_id}")
}

/// A pair selected by more than one method.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Collision {
    pub pair_id: String,
    pub method: String,
}

/// Accumulates sampled pairs across queries and methods, merging duplicates.
#[derive(Debug)]
pub struct PairSampler {
    rng: ChaCha8Rng,
    k_entities: usize,
    k_snippets: usize,
    pairs: Vec<AnnotatedPair>,
    by_id: HashMap<String, usize>,
    collisions: Vec<Collision>,
}

impl PairSampler {
    pub fn new(seed: u64, k_entities: usize, k_snippets: usize) -> Result<Self> {
        if k_entities == 0 {
            return Err(Error::param("k_entities", "must be at least 1"));
        }
        if k_snippets == 0 {
            return Err(Error::param("k_snippets", "must be at least 1"));
        }
        Ok(PairSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            k_entities,
            k_snippets,
            pairs: Vec::new(),
            by_id: HashMap::new(),
            collisions: Vec::new(),
        })
    }

    /// Draws one of the top `k_entities` entities uniformly and emits its top
    /// `k_snippets` snippets. Returns the pair ids produced by this call.
    pub fn add(&mut self, query: &Query, method: &str, ranked: &[RankedEntity]) -> Result<Vec<String>> {
        if ranked.is_empty() {
            return Err(Error::EmptyRanking);
        }
        let pool = self.k_entities.min(ranked.len());
        let chosen = &ranked[self.rng.gen_range(0..pool)];
        let mut ids = Vec::new();
        for s in chosen.top_snippets.iter().take(self.k_snippets) {
            let id = pair_id(&query.id, &s.snippet_id);
            match self.by_id.get(&id) {
                Some(&i) => {
                    let pair = &mut self.pairs[i];
                    if !pair.source_methods.iter().any(|m| m == method) {
                        pair.source_methods.push(method.to_owned());
                    }
                    self.collisions.push(Collision { pair_id: id.clone(), method: method.to_owned() });
                }
                None => {
                    let mut pair = AnnotatedPair::new(&query.id, &s.snippet_id);
                    pair.source_methods.push(method.to_owned());
                    self.by_id.insert(id.clone(), self.pairs.len());
                    self.pairs.push(pair);
                }
            }
            ids.push(id);
        }
        Ok(ids)
    }

    pub fn pairs(&self) -> &[AnnotatedPair] {
        &self.pairs
    }

    pub fn collisions(&self) -> &[Collision] {
        &self.collisions
    }

    pub fn finish(self) -> (Vec<AnnotatedPair>, Vec<Collision>) {
        (self.pairs, self.collisions)
    }
}

/// Single-ranking form of [`PairSampler::add`].
pub fn sample_annotation_pairs(
    ranked: &[RankedEntity],
    method: &str,
    query: &Query,
    seed: u64,
    k_entities: usize,
    k_snippets: usize,
) -> Result<Vec<AnnotatedPair>> {
    let mut sampler = PairSampler::new(seed, k_entities, k_snippets)?;
    sampler.add(query, method, ranked)?;
    Ok(sampler.finish().0)
}

/// The label held by more than half of an odd number (at least 3) of annotators.
pub fn majority_vote<I: IntoIterator<Item = bool>>(labels: I) -> Result<bool> {
    let (mut n, mut ones) = (0usize, 0usize);
    for l in labels {
        n += 1;
        ones += usize::from(l);
    }
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidVoteCount { count: n, pair_id: None });
    }
    Ok(2 * ones > n)
}

/// Sets `majority` on every pair; the first pair with an unusable label count
/// is reported by id.
pub fn assign_majorities(pairs: &mut [AnnotatedPair]) -> Result<()> {
    for pair in pairs.iter_mut() {
        let vote = majority_vote(pair.labels.values().copied())
            .map_err(|_| Error::InvalidVoteCount { count: pair.labels.len(), pair_id: Some(pair.pair_id.clone()) })?;
        pair.majority = Some(vote);
    }
    Ok(())
}

/// One row of the crowd label CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub pair_id: String,
    pub query_id: String,
    pub snippet_id: String,
    pub annotator_id: String,
    pub label: u8,
}

pub const LABEL_HEADER: [&str; 5] = ["pair_id", "query_id", "snippet_id", "annotator_id", "label"];

pub fn load_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| Error::parse(path, 1, e))?;
    if headers.iter().ne(LABEL_HEADER) {
        return Err(Error::parse(path, 1, format!("expected header `{}`", LABEL_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.position().map_or(0, |p| p.line()), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: LabelRow = rec.deserialize(None).map_err(|e| Error::parse(path, line, e))?;
        if row.label > 1 {
            return Err(Error::parse(path, line, format!("label must be 0 or 1, got {}", row.label)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Groups label rows into pairs, in order of first appearance. Majorities are
/// left unset.
pub fn aggregate_labels(rows: &[LabelRow]) -> Result<Vec<AnnotatedPair>> {
    let mut pairs: Vec<AnnotatedPair> = Vec::new();
    let mut pos: HashMap<&str, usize> = HashMap::new();
    for row in rows {
        let i = *pos.entry(row.pair_id.as_str()).or_insert_with(|| {
            pairs.push(AnnotatedPair {
                pair_id: row.pair_id.clone(),
                query_id: row.query_id.clone(),
                snippet_id: row.snippet_id.clone(),
                source_methods: Vec::new(),
                labels: BTreeMap::new(),
                majority: None,
            });
            pairs.len() - 1
        });
        let pair = &mut pairs[i];
        if pair.query_id != row.query_id || pair.snippet_id != row.snippet_id {
            return Err(Error::validation(
                format!("pair `{}`", row.pair_id),
                "query_id/snippet_id",
                "differs between label rows",
            ));
        }
        let label = match row.label {
            0 => false,
            1 => true,
            other => {
                return Err(Error::validation(
                    format!("pair `{}`", row.pair_id),
                    "label",
                    format!("must be 0 or 1, got {other}"),
                ))
            }
        };
        if pair.labels.insert(row.annotator_id.clone(), label).is_some() {
            return Err(Error::DuplicateId {
                kind: "annotator label",
                id: format!("{}/{}", row.pair_id, row.annotator_id),
                line: None,
            });
        }
    }
    Ok(pairs)
}

/// A crowd task: regular pairs with a few known-label gold pairs mixed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSpec {
    pub hit_id: String,
    pub pair_ids: Vec<String>,
    pub gold_pairs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HitConfig {
    pub size: usize,
    pub gold_per_hit: usize,
}

impl Default for HitConfig {
    fn default() -> Self {
        HitConfig { size: DEFAULT_HIT_SIZE, gold_per_hit: DEFAULT_GOLD_PER_HIT }
    }
}

/// Packs `pair_ids` into HITs of `config.size`, each carrying
/// `config.gold_per_hit` distinct pairs drawn from `gold_pool`, in shuffled
/// order. Only the last HIT may be shorter than `config.size`.
pub fn build_hits(pair_ids: &[String], gold_pool: &[String], seed: u64, config: HitConfig) -> Result<Vec<HitSpec>> {
    if config.gold_per_hit >= config.size {
        return Err(Error::param("gold_per_hit", "must be smaller than the HIT size"));
    }
    if gold_pool.len() < config.gold_per_hit {
        return Err(Error::param(
            "gold_pool",
            format!("need at least {} gold pairs, have {}", config.gold_per_hit, gold_pool.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut regular: Vec<&String> = pair_ids.iter().collect();
    regular.shuffle(&mut rng);
    let per_hit = config.size - config.gold_per_hit;
    regular
        .chunks(per_hit)
        .enumerate()
        .map(|(i, chunk)| {
            let gold: Vec<String> = gold_pool.choose_multiple(&mut rng, config.gold_per_hit).cloned().collect();
            let mut all: Vec<String> = chunk.iter().map(|s| (*s).clone()).chain(gold.iter().cloned()).collect();
            all.shuffle(&mut rng);
            HitSpec::new(format!("hit-{:04}", i + 1), all, gold, config)
        })
        .collect()
}

impl HitSpec {
    pub fn new(hit_id: String, pair_ids: Vec<String>, gold_pairs: Vec<String>, config: HitConfig) -> Result<Self> {
        if pair_ids.len() > config.size || pair_ids.len() <= gold_pairs.len() {
            return Err(Error::validation(
                format!("HIT `{hit_id}`"),
                "pair_ids",
                format!("has {} pairs for HIT size {}", pair_ids.len(), config.size),
            ));
        }
        if gold_pairs.len() != config.gold_per_hit {
            return Err(Error::validation(
                format!("HIT `{hit_id}`"),
                "gold_pairs",
                format!("expected {} gold pairs, got {}", config.gold_per_hit, gold_pairs.len()),
            ));
        }
        if let Some(g) = gold_pairs.iter().find(|g| !pair_ids.contains(g)) {
            return Err(Error::validation(
                format!("HIT `{hit_id}`"),
                "gold_pairs",
                format!("gold pair `{g}` is not part of the HIT"),
            ));
        }
        Ok(HitSpec { hit_id, pair_ids, gold_pairs })
    }
}

/// Writes `pair_id,query_text,snippet_text` rows, HIT by HIT, in each HIT's
/// (already shuffled) order.
pub fn write_hit_export(path: &Path, hits: &[HitSpec], texts: &HashMap<String, (String, String)>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    let io = |e: csv::Error| Error::io(path, e.into());
    w.write_record(["pair_id", "query_text", "snippet_text"]).map_err(io)?;
    for hit in hits {
        for id in &hit.pair_ids {
            let (q, s) = texts.get(id).ok_or_else(|| {
                Error::validation(format!("HIT `{}`", hit.hit_id), "pair_ids", format!("no text for pair `{id}`"))
            })?;
            w.write_record([id.as_str(), q.as_str(), s.as_str()]).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Whether a worker's submission for `hit` gets at least `min_correct` gold
/// pairs right.
pub fn quality_check(
    hit: &HitSpec,
    submitted: &HashMap<String, bool>,
    gold: &HashMap<String, bool>,
    min_correct: usize,
) -> Result<bool> {
    let mut correct = 0;
    for g in &hit.gold_pairs {
        let answer = submitted.get(g).ok_or_else(|| Error::MissingGoldAnswer(g.clone()))?;
        let truth = gold.get(g).ok_or_else(|| {
            Error::validation(format!("HIT `{}`", hit.hit_id), "gold_pairs", format!("no known label for `{g}`"))
        })?;
        correct += usize::from(answer == truth);
    }
    Ok(correct >= min_correct)
}

/// Fleiss' kappa for an items x categories count matrix where every row sums
/// to `raters_per_item`.
pub fn fleiss_kappa(ratings: &[Vec<usize>], raters_per_item: usize) -> Result<f64> {
    let n = raters_per_item;
    if ratings.is_empty() {
        return Err(Error::InvalidRatings("no items".into()));
    }
    if n < 2 {
        return Err(Error::InvalidRatings(format!("need at least 2 raters per item, got {n}")));
    }
    let k = ratings[0].len();
    let mut totals = vec![0usize; k];
    let mut p_bar = 0.0;
    for (i, row) in ratings.iter().enumerate() {
        if row.len() != k {
            return Err(Error::InvalidRatings(format!("row {i} has {} categories, expected {k}", row.len())));
        }
        let sum: usize = row.iter().sum();
        if sum != n {
            return Err(Error::InvalidRatings(format!("row {i} sums to {sum}, expected {n}")));
        }
        let agree: usize = row.iter().map(|&c| c * c.saturating_sub(1)).sum();
        p_bar += agree as f64 / (n * (n - 1)) as f64;
        for (t, &c) in totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    let items = ratings.len() as f64;
    p_bar /= items;
    let all = items * n as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / all).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(Error::DegenerateKappa);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

fn binary_row(labels: impl IntoIterator<Item = bool>) -> Vec<usize> {
    let mut row = vec![0, 0];
    for l in labels {
        row[usize::from(l)] += 1;
    }
    row
}

/// Kappa between one annotator and the majority label, over the pairs that
/// annotator labeled.
pub fn annotator_vs_majority_kappa(pairs: &[AnnotatedPair], annotator_id: &str) -> Result<f64> {
    let rows: Vec<Vec<usize>> =
        pairs.iter().filter_map(|p| Some(binary_row([*p.labels.get(annotator_id)?, p.majority?]))).collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    fleiss_kappa(&rows, 2)
}

/// Fleiss' kappa across all annotators, over pairs with exactly
/// `raters_per_item` labels.
pub fn overall_kappa(pairs: &[AnnotatedPair], raters_per_item: usize) -> Result<f64> {
    let rows: Vec<Vec<usize>> = pairs
        .iter()
        .filter(|p| p.labels.len() == raters_per_item)
        .map(|p| binary_row(p.labels.values().copied()))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    fleiss_kappa(&rows, raters_per_item)
}
