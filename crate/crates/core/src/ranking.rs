//! Entity ranking by the mean of each entity's best snippet scores, plus the
//! schema-slot pre-filter used in hybrid mode.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::corpus::{DatabaseView, EntityDatabase, EntityRecord, Query, SlotConstraints, SlotKey};
use crate::error::{Error, Result};
use crate::scoring::{relevance_scores, ScoreProvider};

/// How the top-J snippet scores are averaged for entities with fewer than J
/// snippets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Divide by the number of snippets actually available (at most J).
    #[default]
    Available,
    /// Always divide by J, as if missing snippets scored 0.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankingParams {
    /// Snippets averaged per entity (J).
    pub top_snippets: usize,
    /// Entities returned (N).
    pub top_entities: usize,
    pub averaging: Averaging,
}

impl Default for RankingParams {
    fn default() -> Self {
        RankingParams { top_snippets: 5, top_entities: 5, averaging: Averaging::Available }
    }
}

impl RankingParams {
    pub fn new(top_snippets: usize, top_entities: usize) -> Result<Self> {
        let p = RankingParams { top_snippets, top_entities, averaging: Averaging::Available };
        p.validate()?;
        Ok(p)
    }

    pub fn strict(mut self) -> Self {
        self.averaging = Averaging::Strict;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.top_snippets == 0 {
            return Err(Error::param("J", "must be at least 1"));
        }
        if self.top_entities == 0 {
            return Err(Error::param("N", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSnippet {
    pub snippet_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub entity_id: String,
    pub item_score: f64,
    pub top_snippets: Vec<ScoredSnippet>,
}

/// Descending score, then ascending snippet id.
fn snippet_order(a: &ScoredSnippet, b: &ScoredSnippet) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.snippet_id.cmp(&b.snippet_id))
}

/// Descending item score, then ascending entity id.
fn entity_order(a: &RankedEntity, b: &RankedEntity) -> Ordering {
    b.item_score.total_cmp(&a.item_score).then_with(|| a.entity_id.cmp(&b.entity_id))
}

/// Aggregates one entity's snippet scores into its ranked form.
///
/// An entity without snippets scores 0.
pub fn aggregate_entity(entity_id: &str, mut scored: Vec<ScoredSnippet>, params: &RankingParams) -> RankedEntity {
    scored.sort_by(snippet_order);
    scored.truncate(params.top_snippets);
    let sum = scored.iter().fold(0.0, |acc, s| acc + s.score);
    let divisor = match params.averaging {
        Averaging::Available => scored.len(),
        Averaging::Strict => params.top_snippets,
    };
    let item_score = if divisor == 0 { 0.0 } else { sum / divisor as f64 };
    RankedEntity { entity_id: entity_id.to_owned(), item_score, top_snippets: scored }
}

fn score_entity(
    provider: &dyn ScoreProvider,
    query: &Query,
    db: &EntityDatabase,
    entity: &EntityRecord,
    params: &RankingParams,
) -> Result<RankedEntity> {
    let snippets = db.snippets_for(&entity.id);
    let scores = relevance_scores(provider, query, snippets)?;
    let scored =
        snippets.iter().zip(scores).map(|(s, score)| ScoredSnippet { snippet_id: s.id.clone(), score }).collect();
    Ok(aggregate_entity(&entity.id, scored, params))
}

/// Ranks the entities of `view` for `query` and returns the best N.
pub fn rank_view(
    provider: &dyn ScoreProvider,
    query: &Query,
    view: &DatabaseView<'_>,
    params: &RankingParams,
) -> Result<Vec<RankedEntity>> {
    params.validate()?;
    if view.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let db = view.database();
    let mut ranked =
        view.entities().map(|e| score_entity(provider, query, db, e, params)).collect::<Result<Vec<_>>>()?;
    ranked.sort_by(entity_order);
    ranked.truncate(params.top_entities);
    Ok(ranked)
}

pub fn rank_and_select(
    provider: &dyn ScoreProvider,
    query: &Query,
    db: &EntityDatabase,
    params: &RankingParams,
) -> Result<Vec<RankedEntity>> {
    rank_view(provider, query, &db.view(), params)
}

fn eq_ignore_case(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

fn matches(entity: &EntityRecord, constraints: &SlotConstraints) -> bool {
    constraints.0.iter().all(|(key, wanted)| match key {
        SlotKey::Area => entity.location.is_some_and(|l| eq_ignore_case(l.as_str(), wanted)),
        SlotKey::PriceRange => entity.price_range.is_some_and(|p| eq_ignore_case(p.as_str(), wanted)),
        SlotKey::Cuisine => entity.cuisines.iter().any(|c| eq_ignore_case(c, wanted)),
    })
}

/// Entities satisfying every constraint, in database order. `area` matches the
/// entity's location, `price_range` its price range, and `cuisine` any element
/// of its cuisine list. Absent entity fields never match.
pub fn schema_filter<'a>(db: &'a EntityDatabase, constraints: &SlotConstraints) -> DatabaseView<'a> {
    let members = db.entities().iter().enumerate().filter(|(_, e)| matches(e, constraints)).map(|(i, _)| i).collect();
    DatabaseView::from_members(db, members)
}

/// Filters by the query's slot constraints, then ranks what remains.
pub fn rank_hybrid(
    provider: &dyn ScoreProvider,
    query: &Query,
    db: &EntityDatabase,
    params: &RankingParams,
) -> Result<Vec<RankedEntity>> {
    let none = SlotConstraints::default();
    let constraints = query.slot_constraints.as_ref().unwrap_or(&none);
    let view = schema_filter(db, constraints);
    if view.is_empty() {
        return Err(if db.is_empty() { Error::EmptyDatabase } else { Error::NoEntityMatches });
    }
    rank_view(provider, query, &view, params)
}
