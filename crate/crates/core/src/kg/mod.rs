//! Knowledge-graph storage.
//!
//! A [`KnowledgeGraph`] is a read-only view over triples with named, typed
//! entities. Two backends implement it: [`GraphStore`] keeps everything in
//! memory (fixtures, desk-scale dumps) and [`RemoteSparql`] forwards the same
//! lookups to a SPARQL 1.1 endpoint hosting Freebase.

mod cvt;
mod ingest;
mod remote;
mod resolve;
pub mod sparql;
mod store;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use cvt::{flatten_cvt, FlattenCache, FlattenedEdge};
pub use ingest::{parse_ntriples, parse_tsv, read_triples_file, TripleFormat, TripleRecord};
pub use remote::{RemoteSparql, SparqlConfig, SparqlTransport};
pub use resolve::{resolve_entity, Resolution, ResolutionCache, ResolveOptions};
pub use store::{GraphStore, NodeId, RelId, StoreStats};

/// Opaque entity identifier (`m.02mjmr` on Freebase, anything non-empty in fixtures).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(String);

impl TryFrom<String> for EntityId {
    type Error = KgError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.0
    }
}

impl EntityId {
    pub fn new(id: impl Into<String>) -> Result<Self, KgError> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(KgError::InvalidId(id));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for EntityId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for EntityId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub name: Option<String>,
    pub types: BTreeSet<String>,
    pub is_cvt: bool,
}

impl Entity {
    pub fn new(id: EntityId, name: Option<String>, types: BTreeSet<String>) -> Self {
        let is_cvt = is_cvt_name(&id, name.as_deref());
        Self {
            id,
            name,
            types,
            is_cvt,
        }
    }

    /// English name when present, otherwise the raw id.
    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.id.as_str())
    }
}

/// CVT nodes carry no name, or a name that is just their id.
pub fn is_cvt_name(id: &EntityId, name: Option<&str>) -> bool {
    match name {
        None => true,
        Some(n) => n.trim().is_empty() || n == id.as_str(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: String,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// Result list from a backend that may cap its answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limited<T> {
    pub items: Vec<T>,
    pub truncated: bool,
}

impl<T> Default for Limited<T> {
    fn default() -> Self {
        Self::complete(Vec::new())
    }
}

impl<T> Limited<T> {
    pub fn complete(items: Vec<T>) -> Self {
        Self {
            items,
            truncated: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KgError {
    #[error("record {index}: {reason}")]
    Ingest { index: usize, reason: String },
    #[error("invalid entity id {0:?}")]
    InvalidId(String),
    #[error("entity not found: {0}")]
    NotFound(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Backend-neutral read access to a knowledge graph.
///
/// Every method returns deterministic, id-sorted output so callers can
/// compare backends item by item.
pub trait KnowledgeGraph: Send + Sync {
    fn entity(&self, id: &EntityId) -> Result<Entity, KgError>;

    /// Entities whose name equals `name`, either exactly or ignoring case.
    fn find_by_name(&self, name: &str, ignore_case: bool) -> Result<Vec<Entity>, KgError>;

    /// Distinct relations on edges leaving (`Outgoing`) or entering `id`.
    fn relations(&self, id: &EntityId, direction: Direction) -> Result<Limited<String>, KgError>;

    fn neighbors(
        &self,
        id: &EntityId,
        relation: &str,
        direction: Direction,
    ) -> Result<Limited<EntityId>, KgError>;

    fn stats(&self) -> StoreStats;

    /// Union of incoming and outgoing relations, sorted and deduplicated.
    fn neighboring_relations(&self, id: &EntityId) -> Result<Vec<String>, KgError> {
        let mut all: BTreeSet<String> = BTreeSet::new();
        all.extend(self.relations(id, Direction::Outgoing)?.items);
        all.extend(self.relations(id, Direction::Incoming)?.items);
        Ok(all.into_iter().collect())
    }
}
