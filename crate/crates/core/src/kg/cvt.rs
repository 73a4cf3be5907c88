use std::collections::{BTreeSet, HashMap};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{Direction, Entity, EntityId, KgError, KnowledgeGraph};

/// One two-hop edge `e --r1--> cvt --r2--> terminal`, reported as `r1.r2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlattenedEdge {
    pub relation: String,
    pub cvt: EntityId,
    pub terminal: EntityId,
    /// The terminal is itself a CVT node; flattening stops at two hops.
    pub unresolved: bool,
}

/// Flattened relation names discovered so far, keyed by (entity type, first hop).
///
/// Entities without types share the empty type key.
#[derive(Debug, Default)]
pub struct FlattenCache {
    inner: RwLock<HashMap<(String, String), BTreeSet<String>>>,
}

fn type_keys(entity: &Entity) -> Vec<String> {
    if entity.types.is_empty() {
        vec![String::new()]
    } else {
        entity.types.iter().cloned().collect()
    }
}

impl FlattenCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, entity: &Entity, first_hop: &str, flattened: impl IntoIterator<Item = String>) {
        let flattened: Vec<String> = flattened.into_iter().collect();
        if flattened.is_empty() {
            return;
        }
        let mut map = self.inner.write().expect("flatten cache lock");
        for key in type_keys(entity) {
            map.entry((key, first_hop.to_string()))
                .or_default()
                .extend(flattened.iter().cloned());
        }
    }

    /// Cached flattened names applicable to `entity` given its direct relations.
    pub fn lookup<'a>(&self, entity: &Entity, relations: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        let map = self.inner.read().expect("flatten cache lock");
        let keys = type_keys(entity);
        let mut out = BTreeSet::new();
        for rel in relations {
            for key in &keys {
                if let Some(names) = map.get(&(key.clone(), rel.to_string())) {
                    out.extend(names.iter().cloned());
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.read().expect("flatten cache lock").is_empty()
    }
}

/// Expands every CVT neighbor reached from `entity` over `first_hop`.
///
/// Non-CVT neighbors contribute nothing. Results are sorted and the
/// discovered `r1.r2` names are written to `cache` when one is given.
pub fn flatten_cvt(
    store: &dyn KnowledgeGraph,
    entity: &EntityId,
    first_hop: &str,
    cache: Option<&FlattenCache>,
) -> Result<Vec<FlattenedEdge>, KgError> {
    let head = store.entity(entity)?;
    let mut out = Vec::new();
    for mid in store.neighbors(entity, first_hop, Direction::Outgoing)?.items {
        if !store.entity(&mid)?.is_cvt {
            continue;
        }
        for second_hop in store.relations(&mid, Direction::Outgoing)?.items {
            for terminal in store.neighbors(&mid, &second_hop, Direction::Outgoing)?.items {
                if terminal == *entity {
                    continue;
                }
                let unresolved = store.entity(&terminal)?.is_cvt;
                out.push(FlattenedEdge {
                    relation: format!("{first_hop}.{second_hop}"),
                    cvt: mid.clone(),
                    terminal,
                    unresolved,
                });
            }
        }
    }
    out.sort();
    out.dedup();
    if let Some(cache) = cache {
        cache.record(&head, first_hop, out.iter().map(|f| f.relation.clone()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphStore, TripleRecord};

    fn named(h: &str, r: &str, t: &str) -> TripleRecord {
        let name = |s: &str| (!s.starts_with("cvt")).then(|| s.to_uppercase());
        TripleRecord::new(h, r, t).names(name(h).as_deref(), name(t).as_deref())
    }

    fn id(s: &str) -> EntityId {
        EntityId::new(s).unwrap()
    }

    fn pairs(v: &[FlattenedEdge]) -> Vec<(String, String)> {
        v.iter()
            .map(|f| (f.relation.clone(), f.terminal.to_string()))
            .collect()
    }

    #[test]
    fn single_cvt_path() {
        let s = GraphStore::from_records(vec![named("e", "r1", "cvt1"), named("cvt1", "r2", "t")]).unwrap();
        let got = flatten_cvt(&s, &id("e"), "r1", None).unwrap();
        assert_eq!(pairs(&got), vec![("r1.r2".into(), "t".into())]);
        assert!(!got[0].unresolved);
    }

    #[test]
    fn named_neighbor_is_not_flattened() {
        let s = GraphStore::from_records(vec![named("e", "r1", "n"), named("n", "r2", "t")]).unwrap();
        assert!(flatten_cvt(&s, &id("e"), "r1", None).unwrap().is_empty());
    }

    #[test]
    fn cvt_with_two_outgoing_relations() {
        let s = GraphStore::from_records(vec![
            named("e", "r1", "cvt1"),
            named("cvt1", "r2", "t2"),
            named("cvt1", "r3", "t3"),
        ])
        .unwrap();
        // scan oracle: cvt1's outgoing edges
        let oracle: Vec<(String, String)> = s
            .triples()
            .filter(|t| t.head.as_str() == "cvt1")
            .map(|t| (format!("r1.{}", t.relation), t.tail.to_string()))
            .collect();
        let got = flatten_cvt(&s, &id("e"), "r1", None).unwrap();
        assert_eq!(pairs(&got), oracle);
        assert_eq!(oracle.len(), 2);
    }

    #[test]
    fn nested_cvt_is_flagged_unresolved() {
        let s = GraphStore::from_records(vec![
            named("e", "r1", "cvt1"),
            named("cvt1", "r2", "cvt2"),
            named("cvt2", "r3", "t"),
        ])
        .unwrap();
        let got = flatten_cvt(&s, &id("e"), "r1", None).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].terminal.as_str(), "cvt2");
        assert!(got[0].unresolved);
    }

    #[test]
    fn flattened_names_are_cached_by_type_and_first_hop() {
        let mut rec = named("e", "r1", "cvt1");
        rec.head_types = vec!["sports.team".into()];
        let s = GraphStore::from_records(vec![rec, named("cvt1", "r2", "t")]).unwrap();
        let cache = FlattenCache::new();
        flatten_cvt(&s, &id("e"), "r1", Some(&cache)).unwrap();
        let e = s.entity(&id("e")).unwrap();
        assert_eq!(cache.lookup(&e, ["r1"]), vec!["r1.r2"]);
        assert!(cache.lookup(&e, ["other"]).is_empty());
    }
}
