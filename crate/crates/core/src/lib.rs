//! Retrieval of database entities for free-form natural-language requests.
//!
//! Every entity (a restaurant) is broken into text snippets: its structured
//! field values and its positive reviews. A [`scoring::ScoreProvider`] rates
//! each snippet against a query; [`ranking::rank_and_select`] ranks entities by
//! the mean score of their best snippets. The [`annotation`] and
//! [`evaluation`] modules turn rankings into a labeled query-snippet dataset
//! and measure scorers against it.

pub mod annotation;
pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod evaluation;
mod jsonl;
pub mod ranking;
pub mod scoring;
pub mod tfidf;

pub use error::{Error, Result};
