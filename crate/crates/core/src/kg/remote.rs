use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::RwLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sparql::{self, bindings, render_sparql, QueryKind, NS_PREFIX};
use super::{Direction, Entity, EntityId, KgError, KnowledgeGraph, Limited, StoreStats};
use crate::limit::Semaphore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparqlConfig {
    pub endpoint: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for SparqlConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8890/sparql".into(),
            timeout_secs: 30,
            retries: 2,
            backoff_base_ms: 500,
            max_in_flight: 8,
        }
    }
}

/// Sends one query and returns the parsed `application/sparql-results+json` body.
pub trait SparqlTransport: Send + Sync {
    fn execute(&self, query: &str) -> Result<Value, KgError>;
}

struct HttpTransport {
    client: reqwest::blocking::Client,
    endpoint: String,
}

impl SparqlTransport for HttpTransport {
    fn execute(&self, query: &str) -> Result<Value, KgError> {
        let resp = self
            .client
            .post(&self.endpoint)
            .header("Content-Type", "application/sparql-query")
            .header("Accept", "application/sparql-results+json")
            .body(query.to_string())
            .send()
            .map_err(|e| KgError::Backend(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| KgError::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(KgError::Backend(format!("HTTP {status}: {}", truncate(&body, 200))));
        }
        serde_json::from_str(&body).map_err(|e| KgError::Backend(format!("bad results JSON: {e}")))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// A [`KnowledgeGraph`] answered by a remote SPARQL endpoint.
///
/// Result lists are capped by the template LIMITs; hitting a cap sets
/// `truncated` instead of failing.
pub struct RemoteSparql {
    transport: Box<dyn SparqlTransport>,
    config: SparqlConfig,
    admission: Semaphore,
    entities: RwLock<HashMap<EntityId, Entity>>,
    names: RwLock<HashMap<EntityId, String>>,
}

type Row = BTreeMap<String, (String, String)>;

fn rows(results: &Value) -> Result<Vec<Row>, KgError> {
    let bindings = results
        .pointer("/results/bindings")
        .and_then(Value::as_array)
        .ok_or_else(|| KgError::Backend("results JSON lacks results.bindings".into()))?;
    Ok(bindings
        .iter()
        .filter_map(Value::as_object)
        .map(|obj| {
            obj.iter()
                .filter_map(|(var, cell)| {
                    let kind = cell.get("type")?.as_str()?.to_string();
                    let value = cell.get("value")?.as_str()?.to_string();
                    Some((var.clone(), (kind, value)))
                })
                .collect()
        })
        .collect())
}

fn local_name(iri: &str) -> Option<&str> {
    iri.strip_prefix(NS_PREFIX).filter(|s| !s.is_empty())
}

fn case_variants(name: &str) -> Vec<String> {
    let lower = name.to_lowercase();
    let title: String = lower
        .split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ");
    let upper = name.to_uppercase();
    let mut seen = BTreeSet::new();
    [lower, title, upper]
        .into_iter()
        .filter(|v| v != name && seen.insert(v.clone()))
        .collect()
}

impl RemoteSparql {
    pub fn new(config: SparqlConfig) -> Result<Self, KgError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| KgError::Backend(e.to_string()))?;
        let transport = HttpTransport {
            client,
            endpoint: config.endpoint.clone(),
        };
        Ok(Self::with_transport(Box::new(transport), config))
    }

    pub fn with_transport(transport: Box<dyn SparqlTransport>, config: SparqlConfig) -> Self {
        Self {
            admission: Semaphore::new(config.max_in_flight),
            transport,
            config,
            entities: RwLock::new(HashMap::new()),
            names: RwLock::new(HashMap::new()),
        }
    }

    fn run(&self, kind: QueryKind, pairs: &[(&str, &str)]) -> Result<Vec<Row>, KgError> {
        let query = render_sparql(kind, &bindings(pairs.iter().copied()))?;
        let _permit = self.admission.acquire();
        let mut attempt = 0;
        loop {
            match self.transport.execute(&query) {
                Ok(v) => return rows(&v),
                Err(e) if attempt < self.config.retries => {
                    let wait = self.config.backoff_base_ms.saturating_mul(1 << attempt);
                    tracing::warn!(%kind, attempt, error = %e, "sparql request failed, retrying");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn relation_query(&self, id: &EntityId, kind: QueryKind, limit: usize) -> Result<Limited<String>, KgError> {
        let rows = self.run(kind, &[("entity", id.as_str())])?;
        let truncated = rows.len() >= limit;
        let set: BTreeSet<String> = rows
            .iter()
            .filter_map(|r| r.get("relation"))
            .filter_map(|(_, v)| local_name(v))
            .map(str::to_string)
            .collect();
        Ok(Limited {
            items: set.into_iter().collect(),
            truncated,
        })
    }
}

impl KnowledgeGraph for RemoteSparql {
    fn entity(&self, id: &EntityId) -> Result<Entity, KgError> {
        if let Some(e) = self.entities.read().expect("entity cache").get(id) {
            return Ok(e.clone());
        }
        let rows = self.run(QueryKind::EntityInfo, &[("entity", id.as_str())])?;
        let mut name = None;
        let mut types = BTreeSet::new();
        for row in &rows {
            if let Some((_, n)) = row.get("name") {
                name.get_or_insert_with(|| n.clone());
            }
            if let Some(t) = row.get("type").and_then(|(_, v)| local_name(v)) {
                types.insert(t.to_string());
            }
        }
        if name.is_none() {
            name = self.names.read().expect("name cache").get(id).cloned();
        }
        let entity = Entity::new(id.clone(), name, types);
        self.entities
            .write()
            .expect("entity cache")
            .insert(id.clone(), entity.clone());
        Ok(entity)
    }

    fn find_by_name(&self, name: &str, ignore_case: bool) -> Result<Vec<Entity>, KgError> {
        // SPARQL string equality is case-sensitive; the fallback probes common casings.
        let probes = if ignore_case {
            case_variants(name)
        } else {
            vec![name.to_string()]
        };
        let mut found: BTreeMap<EntityId, (String, BTreeSet<String>)> = BTreeMap::new();
        for probe in probes {
            for row in self.run(QueryKind::EntityResolution, &[("name", probe.as_str())])? {
                let Some(id) = row.get("entity").and_then(|(_, v)| local_name(v)) else {
                    continue;
                };
                let Ok(id) = EntityId::new(id) else { continue };
                let slot = found
                    .entry(id)
                    .or_insert_with(|| (probe.clone(), BTreeSet::new()));
                if let Some(t) = row.get("type").and_then(|(_, v)| local_name(v)) {
                    slot.1.insert(t.to_string());
                }
            }
        }
        Ok(found
            .into_iter()
            .map(|(id, (name, types))| Entity::new(id, Some(name), types))
            .collect())
    }

    fn relations(&self, id: &EntityId, direction: Direction) -> Result<Limited<String>, KgError> {
        let kind = match direction {
            Direction::Outgoing => QueryKind::RelationsOutgoing,
            Direction::Incoming => QueryKind::RelationsIncoming,
        };
        self.relation_query(id, kind, sparql::RELATION_LIMIT)
    }

    fn neighbors(
        &self,
        id: &EntityId,
        relation: &str,
        direction: Direction,
    ) -> Result<Limited<EntityId>, KgError> {
        let kind = match direction {
            Direction::Outgoing => QueryKind::TriplesAggregated,
            Direction::Incoming => QueryKind::TriplesAggregatedIncoming,
        };
        let rows = self.run(kind, &[("entity", id.as_str()), ("relation", relation)])?;
        let truncated = rows.len() >= sparql::TRIPLE_LIMIT;
        let mut out = BTreeSet::new();
        let mut names = self.names.write().expect("name cache");
        for row in &rows {
            let Some(("uri", tail)) = row.get("tail").map(|(k, v)| (k.as_str(), v.as_str())) else {
                continue;
            };
            let Some(Ok(tail)) = local_name(tail).map(EntityId::new) else {
                continue;
            };
            let name = row
                .get("preferred_name")
                .or_else(|| row.get("fallback_name"))
                .map(|(_, v)| v.clone());
            if let Some(name) = name {
                names.insert(tail.clone(), name);
            }
            out.insert(tail);
        }
        Ok(Limited {
            items: out.into_iter().collect(),
            truncated,
        })
    }

    fn stats(&self) -> StoreStats {
        StoreStats {
            triples: 0,
            entities: self.entities.read().expect("entity cache").len(),
            relations: 0,
        }
    }
}
