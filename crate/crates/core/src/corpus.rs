//! Entity database ingestion and snippet extraction.
//!
//! An entity file is JSON-Lines, one restaurant per line. Every entity is turned
//! into a list of text snippets: one per nonempty structured field followed by
//! one per sufficiently positive review. Snippet ids have the form
//! `<entity_id>#<source>#<ordinal>`, where the ordinal is 0 for structured
//! fields and the review's position in the entity's review list for reviews.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

pub const DEFAULT_MIN_RATING: u8 = 4;

macro_rules! word_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $word),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;

            /// Case-insensitive.
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                let lower = s.trim().to_lowercase();
                match lower.as_str() {
                    $($word => Ok($name::$variant),)+
                    _ => Err(format!(
                        "`{s}` is not one of [{}]",
                        [$($word),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

word_enum!(PriceRange {
    Cheap => "cheap",
    Moderate => "moderate",
    Expensive => "expensive",
});

word_enum!(Location {
    East => "east",
    West => "west",
    Centre => "centre",
    South => "south",
});

word_enum!(Meal {
    Breakfast => "breakfast",
    Lunch => "lunch",
    Dinner => "dinner",
});

word_enum!(
    /// Which part of an entity a snippet was taken from.
    SnippetSource {
        Review => "review",
        Cuisines => "cuisines",
        Meals => "meals",
        SpecialDiets => "special_diets",
        PriceRange => "price_range",
        Location => "location",
        Description => "description",
    }
);

word_enum!(
    /// Query preference type, used to break metrics down by category.
    QueryCategory {
        MenuItem => "menu_item",
        Objective => "objective",
        Subjective => "subjective",
        Schema => "schema",
        Uncategorized => "uncategorized",
    }
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub text: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityRecord {
    pub id: String,
    pub name: String,
    pub cuisines: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_range: Option<PriceRange>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<Location>,
    pub meals: Vec<Meal>,
    pub special_diets: Vec<String>,
    pub description: String,
    pub reviews: Vec<Review>,
}

/// Wire form of an entity line. Enum-valued fields are kept as strings so that
/// validation errors can name the entity and field.
#[derive(Deserialize)]
struct RawEntity {
    id: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    cuisines: Vec<String>,
    #[serde(default)]
    price_range: Option<String>,
    #[serde(default)]
    location: Option<String>,
    #[serde(default)]
    meals: Vec<String>,
    #[serde(default)]
    special_diets: Vec<String>,
    #[serde(default)]
    description: String,
    #[serde(default)]
    reviews: Vec<RawReview>,
}

#[derive(Deserialize)]
struct RawReview {
    text: String,
    rating: i64,
}

impl RawEntity {
    fn validate(self) -> Result<EntityRecord> {
        let ctx = format!("entity `{}`", self.id);
        if self.id.trim().is_empty() {
            return Err(Error::validation("entity", "id", "must be nonempty"));
        }
        let price_range = self
            .price_range
            .map(|p| p.parse::<PriceRange>())
            .transpose()
            .map_err(|m| Error::validation(&ctx, "price_range", m))?;
        let location = self
            .location
            .map(|l| l.parse::<Location>())
            .transpose()
            .map_err(|m| Error::validation(&ctx, "location", m))?;
        let meals = self
            .meals
            .iter()
            .map(|m| m.parse::<Meal>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| Error::validation(&ctx, "meals", m))?;
        let reviews = self
            .reviews
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                if !(1..=5).contains(&r.rating) {
                    return Err(Error::validation(
                        &ctx,
                        format!("reviews[{i}].rating"),
                        format!("{} is outside 1..5", r.rating),
                    ));
                }
                if r.text.trim().is_empty() {
                    return Err(Error::validation(&ctx, format!("reviews[{i}].text"), "must be nonempty"));
                }
                Ok(Review { text: r.text, rating: r.rating as u8 })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(EntityRecord {
            id: self.id,
            name: self.name,
            cuisines: self.cuisines.iter().map(|c| c.trim().to_lowercase()).collect(),
            price_range,
            location,
            meals,
            special_diets: self.special_diets,
            description: self.description,
            reviews,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub entity_id: String,
    pub source: SnippetSource,
    pub text: String,
}

fn snippet_id(entity_id: &str, source: SnippetSource, ordinal: usize) -> String {
    format!("{entity_id}#{source}#{ordinal}")
}

fn join_nonempty<'a>(values: impl IntoIterator<Item = &'a str>) -> String {
    values.into_iter().map(str::trim).filter(|v| !v.is_empty()).collect::<Vec<_>>().join(", ")
}

/// Turns an entity into its snippets: structured fields first (cuisines, meals,
/// special diets, price range, location, description), then every review rated
/// at least `min_rating`, in review order. Empty fields produce nothing.
pub fn extract_snippets(entity: &EntityRecord, min_rating: u8) -> Vec<Snippet> {
    let structured = [
        (SnippetSource::Cuisines, join_nonempty(entity.cuisines.iter().map(String::as_str))),
        (SnippetSource::Meals, join_nonempty(entity.meals.iter().map(|m| m.as_str()))),
        (SnippetSource::SpecialDiets, join_nonempty(entity.special_diets.iter().map(String::as_str))),
        (SnippetSource::PriceRange, entity.price_range.map(|p| p.as_str().to_owned()).unwrap_or_default()),
        (SnippetSource::Location, entity.location.map(|l| l.as_str().to_owned()).unwrap_or_default()),
        (SnippetSource::Description, entity.description.clone()),
    ];

    let mut out: Vec<Snippet> = structured
        .into_iter()
        .filter(|(_, text)| !text.trim().is_empty())
        .map(|(source, text)| Snippet {
            id: snippet_id(&entity.id, source, 0),
            entity_id: entity.id.clone(),
            source,
            text,
        })
        .collect();

    out.extend(
        entity.reviews.iter().enumerate().filter(|(_, r)| r.rating >= min_rating && !r.text.trim().is_empty()).map(
            |(i, r)| Snippet {
                id: snippet_id(&entity.id, SnippetSource::Review, i),
                entity_id: entity.id.clone(),
                source: SnippetSource::Review,
                text: r.text.clone(),
            },
        ),
    );
    out
}

/// Validated entities together with their extracted snippets.
///
/// Snippets of one entity are stored contiguously, in entity order, so that
/// `snippets_for` is a slice lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityDatabase {
    entities: Vec<EntityRecord>,
    snippets: Vec<Snippet>,
    min_rating: u8,
    spans: HashMap<String, Range<usize>>,
    entity_pos: HashMap<String, usize>,
    snippet_pos: HashMap<String, usize>,
}

impl EntityDatabase {
    pub fn new(entities: Vec<EntityRecord>, min_rating: u8) -> Result<Self> {
        if !(1..=5).contains(&min_rating) {
            return Err(Error::param("min_rating", format!("{min_rating} is outside 1..5")));
        }
        let mut entity_pos = HashMap::with_capacity(entities.len());
        let mut spans = HashMap::with_capacity(entities.len());
        let mut snippets = Vec::new();
        for (i, entity) in entities.iter().enumerate() {
            if entity.id.trim().is_empty() {
                return Err(Error::validation("entity", "id", "must be nonempty"));
            }
            if entity_pos.insert(entity.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { kind: "entity", id: entity.id.clone(), line: None });
            }
            let start = snippets.len();
            snippets.extend(extract_snippets(entity, min_rating));
            spans.insert(entity.id.clone(), start..snippets.len());
        }
        let mut snippet_pos = HashMap::with_capacity(snippets.len());
        for (i, s) in snippets.iter().enumerate() {
            if snippet_pos.insert(s.id.clone(), i).is_some() {
                return Err(Error::DuplicateId { kind: "snippet", id: s.id.clone(), line: None });
            }
        }
        Ok(EntityDatabase { entities, snippets, min_rating, spans, entity_pos, snippet_pos })
    }

    pub fn entities(&self) -> &[EntityRecord] {
        &self.entities
    }

    pub fn snippets(&self) -> &[Snippet] {
        &self.snippets
    }

    pub fn min_rating(&self) -> u8 {
        self.min_rating
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity(&self, id: &str) -> Option<&EntityRecord> {
        self.entity_pos.get(id).map(|&i| &self.entities[i])
    }

    pub fn snippet(&self, id: &str) -> Option<&Snippet> {
        self.snippet_pos.get(id).map(|&i| &self.snippets[i])
    }

    pub fn snippets_for(&self, entity_id: &str) -> &[Snippet] {
        self.spans.get(entity_id).map(|r| &self.snippets[r.clone()]).unwrap_or(&[])
    }

    /// A view over every entity, in file order.
    pub fn view(&self) -> DatabaseView<'_> {
        DatabaseView { db: self, members: (0..self.entities.len()).collect() }
    }

    /// Writes the entities back out in the entity file format.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.entities)
    }
}

/// An order-preserving subset of an [`EntityDatabase`].
#[derive(Debug, Clone)]
pub struct DatabaseView<'a> {
    db: &'a EntityDatabase,
    members: Vec<usize>,
}

impl<'a> DatabaseView<'a> {
    pub(crate) fn from_members(db: &'a EntityDatabase, members: Vec<usize>) -> Self {
        DatabaseView { db, members }
    }

    pub fn database(&self) -> &'a EntityDatabase {
        self.db
    }

    pub fn entities(&self) -> impl Iterator<Item = &'a EntityRecord> + '_ {
        self.members.iter().map(|&i| &self.db.entities[i])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn load_corpus(path: &Path) -> Result<EntityDatabase> {
    load_corpus_with(path, DEFAULT_MIN_RATING)
}

pub fn load_corpus_with(path: &Path, min_rating: u8) -> Result<EntityDatabase> {
    let mut seen = HashSet::new();
    let mut entities = Vec::new();
    for (line, raw) in jsonl::read::<RawEntity>(path)? {
        let entity = raw.validate()?;
        if !seen.insert(entity.id.clone()) {
            return Err(Error::DuplicateId { kind: "entity", id: entity.id, line: Some(line) });
        }
        entities.push(entity);
    }
    EntityDatabase::new(entities, min_rating)
}

/// One of the three schema slots a query may constrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKey {
    Area,
    Cuisine,
    PriceRange,
}

impl FromStr for SlotKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "area" => Ok(SlotKey::Area),
            "cuisine" => Ok(SlotKey::Cuisine),
            "price_range" => Ok(SlotKey::PriceRange),
            other => Err(Error::UnknownConstraintKey(other.to_owned())),
        }
    }
}

/// Slot values requested by a query, taken verbatim from the query file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotConstraints(pub BTreeMap<SlotKey, String>);

impl SlotConstraints {
    /// Builds constraints from string keys, rejecting anything but the three slots.
    pub fn from_map<K: AsRef<str>, V: Into<String>>(map: impl IntoIterator<Item = (K, V)>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (k, v) in map {
            out.insert(k.as_ref().parse::<SlotKey>()?, v.into());
        }
        Ok(SlotConstraints(out))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, key: SlotKey) -> Option<&str> {
        self.0.get(&key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    pub category: QueryCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_constraints: Option<SlotConstraints>,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Query { id: id.into(), text: text.into(), category: QueryCategory::Uncategorized, slot_constraints: None }
    }
}

pub fn load_queries(path: &Path) -> Result<Vec<Query>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, query) in jsonl::read::<Query>(path)? {
        if query.id.trim().is_empty() {
            return Err(Error::parse(path, line, "query id must be nonempty"));
        }
        if query.text.trim().is_empty() {
            return Err(Error::parse(path, line, format!("query `{}` has empty text", query.id)));
        }
        if !seen.insert(query.id.clone()) {
            return Err(Error::DuplicateId { kind: "query", id: query.id, line: Some(line) });
        }
        out.push(query);
    }
    Ok(out)
}
