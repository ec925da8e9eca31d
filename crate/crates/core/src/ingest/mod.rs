//! Knowledge-document ingestion.
//!
//! Documents are fetched per lesion from live web sources or from an offline
//! fixture corpus, then persisted as the canonical on-disk corpus so later
//! phases never fetch again.

mod corpus;
mod fixture;
mod html;
mod web;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Lesion;

pub use corpus::{build_corpus, Corpus, SourceRegistry, SourceTemplate};
pub use fixture::FixtureSource;
pub use html::strip_html;
pub use web::{RadiopaediaSource, WebConfig, WikipediaSource};

/// Upper bound on documents taken from one result page.
pub const FIRST_PAGE_CAP: usize = 25;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("network unreachable: {0}")]
    Network(String),
    #[error("http {status} from {url}")]
    Http { status: u16, url: String },
    #[error("no source configured for {0}")]
    UnconfiguredSource(SourceKind),
    #[error("at least one source must be configured")]
    NoSources,
    #[error("no documents for lesion `{0}` across all sources")]
    EmptyLesion(Lesion),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Wikipedia,
    Radiopaedia,
    Fixture,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Wikipedia => "wikipedia",
            SourceKind::Radiopaedia => "radiopaedia",
            SourceKind::Fixture => "fixture",
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wikipedia" => Ok(SourceKind::Wikipedia),
            "radiopaedia" | "radiopedia" => Ok(SourceKind::Radiopaedia),
            "fixture" => Ok(SourceKind::Fixture),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Only the highest-ranked hit.
    TopOne,
    /// Every hit on the first result page, capped at [`FIRST_PAGE_CAP`].
    FirstPage,
}

impl FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "top_one" => Ok(Scope::TopOne),
            "first_page" => Ok(Scope::FirstPage),
            other => Err(format!("unknown scope `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceQuery {
    pub source: SourceKind,
    pub term: String,
    pub scope: Scope,
}

impl SourceQuery {
    pub fn new(source: SourceKind, term: &str, scope: Scope) -> Result<Self, IngestError> {
        let term = term.trim();
        if term.is_empty() {
            return Err(IngestError::InvalidQuery("empty search term".into()));
        }
        Ok(SourceQuery {
            source,
            term: term.to_owned(),
            scope,
        })
    }

    pub fn limit(&self) -> usize {
        match self.scope {
            Scope::TopOne => 1,
            Scope::FirstPage => FIRST_PAGE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub source: SourceKind,
    pub term: String,
    pub title: String,
    /// URL for live sources, `fixture:<dir>/<file>` for fixtures.
    pub locator: String,
    pub body: String,
    /// Unix seconds; `None` for fixture documents so they stay byte-stable.
    #[serde(default)]
    pub retrieved_at: Option<u64>,
}

/// Documents from one query, plus descriptions of hits that were skipped.
#[derive(Debug, Clone, Default)]
pub struct Fetched {
    pub documents: Vec<RawDocument>,
    pub skipped: Vec<String>,
}

pub trait DocumentSource: Send + Sync {
    fn kind(&self) -> SourceKind;

    /// Returns hits in source rank order. An empty result is not an error.
    fn fetch(&self, query: &SourceQuery) -> Result<Fetched, IngestError>;
}

/// Runs `query` against `source` and applies the scope rule.
pub fn fetch_documents(source: &dyn DocumentSource, query: &SourceQuery) -> Result<Fetched, IngestError> {
    if source.kind() != query.source {
        return Err(IngestError::InvalidQuery(format!(
            "query for {} sent to {} source",
            query.source,
            source.kind()
        )));
    }
    let mut fetched = source.fetch(query)?;
    fetched.documents.retain(|d| !d.body.trim().is_empty());
    if fetched.documents.len() > query.limit() {
        if query.scope == Scope::FirstPage {
            log::info!(
                "{} returned {} documents for `{}`; capped at {}",
                query.source,
                fetched.documents.len(),
                query.term,
                FIRST_PAGE_CAP
            );
        }
        fetched.documents.truncate(query.limit());
    }
    Ok(fetched)
}
