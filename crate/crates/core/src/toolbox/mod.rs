//! The agent's two tools: `get_relations` and `get_triples`.

mod bm25;
mod rerank;

use std::collections::HashSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::gateway::Gateway;
use crate::kg::{
    flatten_cvt, resolve_entity, Direction, EntityId, FlattenCache, KgError, KnowledgeGraph, Resolution,
    ResolutionCache, ResolveOptions,
};

pub use bm25::{tokenize, Bm25Index, DEFAULT_B, DEFAULT_K1};
pub use rerank::{parse_rerank_reply, rerank_relations, RerankOutcome};

pub const DEFAULT_TOP_K: usize = 20;
pub const DEFAULT_PER_RELATION_CAP: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

impl From<KgError> for ToolError {
    fn from(e: KgError) -> Self {
        match e {
            KgError::NotFound(what) => ToolError::NotFound(what),
            KgError::InvalidId(id) => ToolError::Argument(format!("invalid entity id {id:?}")),
            other => ToolError::Backend(other.to_string()),
        }
    }
}

/// Prefix-based relation filter. An empty allow list admits everything not denied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Whitelist {
    pub allow: Vec<String>,
    pub deny: Vec<String>,
}

impl Default for Whitelist {
    fn default() -> Self {
        Self {
            allow: Vec::new(),
            deny: ["type.", "common.", "kg.", "freebase.", "user."]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl Whitelist {
    pub fn admits(&self, relation: &str) -> bool {
        let allowed = self.allow.is_empty() || self.allow.iter().any(|p| relation.starts_with(p.as_str()));
        allowed && !self.deny.iter().any(|p| relation.starts_with(p.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolboxConfig {
    pub top_k: usize,
    pub per_relation_cap: usize,
    pub whitelist: Whitelist,
    /// Send BM25-ordered candidates through the LLM reranker when a gateway is attached.
    pub rerank: bool,
    pub flatten_cvt: bool,
    pub case_insensitive_fallback: bool,
}

impl Default for ToolboxConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            per_relation_cap: DEFAULT_PER_RELATION_CAP,
            whitelist: Whitelist::default(),
            rerank: false,
            flatten_cvt: true,
            case_insensitive_fallback: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ranking {
    Bm25,
    Reranked,
    Unranked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationQueryResult {
    pub entity: EntityId,
    pub relations: Vec<String>,
    pub truncated: bool,
    pub ranking: Ranking,
    #[serde(default)]
    pub rerank_fallback: bool,
}

/// One triple as shown to the agent, with the ids kept alongside the display names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleView {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub head_id: EntityId,
    pub tail_id: EntityId,
}

impl TripleView {
    pub fn render(&self) -> String {
        format!("[{}, {}, {}]", self.head, self.relation, self.tail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleQueryResult {
    pub entity: EntityId,
    pub triples: Vec<TripleView>,
    pub per_relation_cap: usize,
    pub truncated: bool,
}

pub struct Toolbox {
    store: Arc<dyn KnowledgeGraph>,
    config: ToolboxConfig,
    gateway: Option<Arc<Gateway>>,
    flatten_cache: FlattenCache,
    resolution_cache: ResolutionCache,
}

impl Toolbox {
    pub fn new(store: Arc<dyn KnowledgeGraph>, config: ToolboxConfig) -> Self {
        Self {
            store,
            config,
            gateway: None,
            flatten_cache: FlattenCache::new(),
            resolution_cache: ResolutionCache::new(),
        }
    }

    pub fn with_gateway(mut self, gateway: Arc<Gateway>) -> Self {
        self.gateway = Some(gateway);
        self
    }

    pub fn store(&self) -> &dyn KnowledgeGraph {
        self.store.as_ref()
    }

    pub fn config(&self) -> &ToolboxConfig {
        &self.config
    }

    pub fn flatten_cache(&self) -> &FlattenCache {
        &self.flatten_cache
    }

    pub fn resolve(&self, name: &str) -> Result<Resolution, ToolError> {
        let opts = ResolveOptions {
            case_insensitive_fallback: self.config.case_insensitive_fallback,
        };
        Ok(resolve_entity(self.store.as_ref(), name, &self.resolution_cache, opts)?)
    }

    /// Accepts an entity id or an English name, as agents use both.
    pub fn resolve_argument(&self, arg: &str) -> Result<EntityId, ToolError> {
        let arg = arg.trim();
        if arg.is_empty() {
            return Err(ToolError::Argument("empty entity argument".into()));
        }
        if let Ok(id) = EntityId::new(arg) {
            match self.store.entity(&id) {
                Ok(_) => return Ok(id),
                Err(KgError::NotFound(_)) => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.resolve(arg).map(|r| r.id)
    }

    /// Relations incident to `entity`, filtered, optionally ranked against
    /// `context_query`, capped at `k`, then topped up with cached CVT
    /// flattenings while room remains.
    pub fn get_relations(
        &self,
        entity: &EntityId,
        context_query: Option<&str>,
        k: usize,
    ) -> Result<RelationQueryResult, ToolError> {
        if k == 0 {
            return Err(ToolError::Argument("k must be at least 1".into()));
        }
        let head = self.store.entity(entity)?;
        let outgoing = self.store.relations(entity, Direction::Outgoing)?;
        let incoming = self.store.relations(entity, Direction::Incoming)?;
        let mut backend_truncated = outgoing.truncated || incoming.truncated;

        let mut merged: Vec<String> = outgoing
            .items
            .iter()
            .chain(&incoming.items)
            .filter(|r| self.config.whitelist.admits(r))
            .cloned()
            .collect();
        merged.sort();
        merged.dedup();

        let query = context_query.map(str::trim).filter(|q| !q.is_empty());
        let (mut relations, ranking, rerank_fallback) = match query {
            None => (merged, Ranking::Unranked, false),
            Some(q) => {
                let ordered: Vec<String> = Bm25Index::new(&merged).rank(q).into_iter().map(|(r, _)| r).collect();
                match (&self.gateway, self.config.rerank && !ordered.is_empty()) {
                    (Some(g), true) => {
                        let out = rerank_relations(g, q, &ordered, k);
                        backend_truncated |= ordered.len() > k;
                        let ranking = if out.fallback {
                            Ranking::Bm25
                        } else {
                            Ranking::Reranked
                        };
                        (out.relations, ranking, out.fallback)
                    }
                    _ => (ordered, Ranking::Bm25, false),
                }
            }
        };
        let truncated = backend_truncated || relations.len() > k;
        relations.truncate(k);

        if self.config.flatten_cvt && relations.len() < k {
            let present: HashSet<String> = relations.iter().cloned().collect();
            let cached = self
                .flatten_cache
                .lookup(&head, outgoing.items.iter().map(String::as_str));
            for r in cached {
                if relations.len() >= k {
                    break;
                }
                if !present.contains(&r) && self.config.whitelist.admits(&r) {
                    relations.push(r);
                }
            }
        }

        Ok(RelationQueryResult {
            entity: entity.clone(),
            relations,
            truncated,
            ranking,
            rerank_fallback,
        })
    }

    pub fn get_triples(
        &self,
        entity: &EntityId,
        relations: &[String],
        per_relation_cap: usize,
    ) -> Result<TripleQueryResult, ToolError> {
        self.get_triples_preferring(entity, relations, per_relation_cap, &[])
    }

    /// Like [`get_triples`](Self::get_triples), but triples reaching an entity
    /// in `prefer` are listed first so the cap never hides them.
    pub fn get_triples_preferring(
        &self,
        entity: &EntityId,
        relations: &[String],
        per_relation_cap: usize,
        prefer: &[EntityId],
    ) -> Result<TripleQueryResult, ToolError> {
        if relations.is_empty() {
            return Err(ToolError::Argument("relation list is empty".into()));
        }
        if per_relation_cap == 0 {
            return Err(ToolError::Argument("per-relation cap must be at least 1".into()));
        }
        let head = self.store.entity(entity)?;
        let mut seen = HashSet::new();
        let mut triples = Vec::new();
        let mut truncated = false;
        for relation in relations {
            if !seen.insert(relation.as_str()) {
                continue;
            }
            let mut rows = self.rows_for(entity, relation)?;
            if !prefer.is_empty() {
                // stable: preferred rows first, original order otherwise
                rows.sort_by_key(|(h, _, t)| {
                    let other = if h == entity { t } else { h };
                    !prefer.contains(other)
                });
            }
            if rows.len() > per_relation_cap {
                truncated = true;
                rows.truncate(per_relation_cap);
            }
            for (h, r, t) in rows {
                triples.push(TripleView {
                    head: self.display(&h, &head.id, head.display_name())?,
                    relation: r,
                    tail: self.display(&t, &head.id, head.display_name())?,
                    head_id: h,
                    tail_id: t,
                });
            }
        }
        Ok(TripleQueryResult {
            entity: entity.clone(),
            triples,
            per_relation_cap,
            truncated,
        })
    }

    fn display(&self, id: &EntityId, known: &EntityId, known_name: &str) -> Result<String, ToolError> {
        if id == known {
            return Ok(known_name.to_string());
        }
        Ok(self.store.entity(id)?.display_name().to_string())
    }

    /// Every triple of `entity` under `relation`, outgoing first, with CVT
    /// tails replaced by their flattened two-hop rows.
    fn rows_for(&self, entity: &EntityId, relation: &str) -> Result<Vec<(EntityId, String, EntityId)>, ToolError> {
        let mut rows = Vec::new();
        let mut cvt_seen = false;
        for tail in self.store.neighbors(entity, relation, Direction::Outgoing)?.items {
            if self.config.flatten_cvt && self.store.entity(&tail)?.is_cvt {
                cvt_seen = true;
                continue;
            }
            rows.push((entity.clone(), relation.to_string(), tail));
        }
        if cvt_seen {
            for f in flatten_cvt(self.store.as_ref(), entity, relation, Some(&self.flatten_cache))? {
                rows.push((entity.clone(), f.relation, f.terminal));
            }
        }
        for head in self.store.neighbors(entity, relation, Direction::Incoming)?.items {
            rows.push((head, relation.to_string(), entity.clone()));
        }
        if rows.is_empty() && self.config.flatten_cvt {
            rows = self.flattened_rows(entity, relation)?;
        }
        Ok(rows)
    }

    /// Rows for a previously reported `r1.r2` name.
    fn flattened_rows(&self, entity: &EntityId, relation: &str) -> Result<Vec<(EntityId, String, EntityId)>, ToolError> {
        let mut rows = Vec::new();
        for first in self.store.relations(entity, Direction::Outgoing)?.items {
            let Some(rest) = relation.strip_prefix(first.as_str()) else {
                continue;
            };
            if !rest.starts_with('.') {
                continue;
            }
            for f in flatten_cvt(self.store.as_ref(), entity, &first, Some(&self.flatten_cache))? {
                if f.relation == relation {
                    rows.push((entity.clone(), f.relation, f.terminal));
                }
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Exhaust, Purpose, StubScript};
    use crate::kg::{GraphStore, TripleRecord};

    fn rec(h: &str, r: &str, t: &str) -> TripleRecord {
        let name = |s: &str| (!s.starts_with("cvt")).then(|| s.to_uppercase());
        TripleRecord::new(h, r, t).names(name(h).as_deref(), name(t).as_deref())
    }

    fn toolbox(records: Vec<TripleRecord>) -> Toolbox {
        Toolbox::new(Arc::new(GraphStore::from_records(records).unwrap()), ToolboxConfig::default())
    }

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    #[test]
    fn bm25_puts_stadium_relation_first() {
        let tb = toolbox(vec![
            rec("team", "sports.sports_team.arena_stadium", "park"),
            rec("team", "people.person.place_of_birth", "city"),
        ]);
        let out = tb.get_relations(&id("team"), Some("home stadium"), 1).unwrap();
        assert_eq!(out.relations, ["sports.sports_team.arena_stadium"]);
        assert_eq!(out.ranking, Ranking::Bm25);
        assert!(out.truncated);
    }

    #[test]
    fn isolated_entity_has_no_relations() {
        let tb = toolbox(vec![rec("a", "r.x", "b"), TripleRecord::new("lone", "type.object.type", "t")]);
        let out = tb.get_relations(&id("lone"), None, 20).unwrap();
        // the only incident relation is denied by the default whitelist
        assert!(out.relations.is_empty());
        assert!(!out.truncated);
    }

    #[test]
    fn cap_truncates_seven_tails_to_five() {
        let recs: Vec<_> = (0..7).map(|i| rec("e", "r.many", &format!("t{i}"))).collect();
        let tb = toolbox(recs);
        let out = tb.get_triples(&id("e"), &["r.many".into()], 5).unwrap();
        assert_eq!(out.triples.len(), 5);
        assert!(out.truncated);
    }

    #[test]
    fn absent_relation_yields_nothing() {
        let tb = toolbox(vec![rec("a", "r.x", "b")]);
        let out = tb.get_triples(&id("a"), &["r.absent".into()], 5).unwrap();
        assert!(out.triples.is_empty());
        assert!(matches!(
            tb.get_triples(&id("a"), &[], 5),
            Err(ToolError::Argument(_))
        ));
    }

    #[test]
    fn both_directions_are_returned() {
        let tb = toolbox(vec![rec("a", "r.x", "b"), rec("c", "r.x", "a")]);
        let out = tb.get_triples(&id("a"), &["r.x".into()], 5).unwrap();
        let shown: Vec<_> = out.triples.iter().map(TripleView::render).collect();
        assert_eq!(shown, ["[A, r.x, B]", "[C, r.x, A]"]);
    }

    #[test]
    fn cvt_tails_flatten_inline_and_feed_relation_cache() {
        let tb = toolbox(vec![rec("e", "r.one", "cvt1"), rec("cvt1", "r.two", "t"), rec("e", "r.z", "w")]);
        let out = tb.get_triples(&id("e"), &["r.one".into()], 5).unwrap();
        assert_eq!(out.triples[0].render(), "[E, r.one.r.two, T]");
        let rels = tb.get_relations(&id("e"), None, 20).unwrap();
        assert_eq!(rels.relations, ["r.one", "r.z", "r.one.r.two"]);
        // a flattened name can be queried directly
        let again = tb.get_triples(&id("e"), &["r.one.r.two".into()], 5).unwrap();
        assert_eq!(again.triples.len(), 1);
    }

    #[test]
    fn preferred_neighbor_survives_cap() {
        let recs: Vec<_> = (0..7).map(|i| rec("e", "r.many", &format!("t{i}"))).collect();
        let tb = toolbox(recs);
        let out = tb
            .get_triples_preferring(&id("e"), &["r.many".into()], 1, &[id("t6")])
            .unwrap();
        assert_eq!(out.triples[0].tail_id, id("t6"));
    }

    #[test]
    fn names_resolve_as_arguments() {
        let tb = toolbox(vec![rec("a", "r.x", "b")]);
        assert_eq!(tb.resolve_argument("B").unwrap(), id("b"));
        assert_eq!(tb.resolve_argument("a").unwrap(), id("a"));
        assert!(matches!(tb.resolve_argument("nope"), Err(ToolError::NotFound(_))));
    }

    #[test]
    fn reranker_output_is_used_when_enabled() {
        let store = Arc::new(
            GraphStore::from_records(vec![rec("a", "r.x", "b"), rec("a", "r.y", "c"), rec("a", "r.z", "d")]).unwrap(),
        );
        let g = Arc::new(Gateway::stub(StubScript::sequence(Purpose::Rerank, ["r.z\nr.y"], Exhaust::Cycle)));
        let tb = Toolbox::new(
            store,
            ToolboxConfig {
                rerank: true,
                ..Default::default()
            },
        )
        .with_gateway(g);
        let out = tb.get_relations(&id("a"), Some("anything"), 2).unwrap();
        assert_eq!(out.relations, ["r.z", "r.y"]);
        assert_eq!(out.ranking, Ranking::Reranked);
    }
}
