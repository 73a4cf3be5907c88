use std::collections::{HashMap, HashSet};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use super::{Entity, EntityId, KgError, KnowledgeGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveOptions {
    pub case_insensitive_fallback: bool,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        Self {
            case_insensitive_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub id: EntityId,
    /// Set when the exact-name lookup failed and the lowercase fallback matched.
    pub via_fallback: bool,
    /// Set when several candidates shared the top type count; the
    /// lexicographically smallest id was chosen.
    pub tie: bool,
}

/// Name → id memo shared by concurrent callers.
#[derive(Debug, Default)]
pub struct ResolutionCache {
    hits: RwLock<HashMap<String, Resolution>>,
    misses: RwLock<HashSet<String>>,
}

impl ResolutionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<Resolution> {
        self.hits.read().expect("cache lock").get(name).cloned()
    }

    pub fn is_known_miss(&self, name: &str) -> bool {
        self.misses.read().expect("cache lock").contains(name)
    }

    pub fn len(&self) -> usize {
        self.hits.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn put(&self, name: &str, res: Resolution) {
        self.hits
            .write()
            .expect("cache lock")
            .insert(name.to_string(), res);
    }

    fn miss(&self, name: &str) {
        self.misses
            .write()
            .expect("cache lock")
            .insert(name.to_string());
    }
}

fn pick(mut candidates: Vec<Entity>, via_fallback: bool) -> Option<Resolution> {
    // most types first, then smallest id
    candidates.sort_by(|a, b| b.types.len().cmp(&a.types.len()).then(a.id.cmp(&b.id)));
    let best = candidates.first()?;
    let tie = candidates
        .get(1)
        .is_some_and(|second| second.types.len() == best.types.len());
    Some(Resolution {
        id: best.id.clone(),
        via_fallback,
        tie,
    })
}

/// Resolves an English name to an entity id: exact match first, then a
/// case-insensitive pass. Among several candidates the one with the most
/// types wins.
pub fn resolve_entity(
    store: &dyn KnowledgeGraph,
    name: &str,
    cache: &ResolutionCache,
    options: ResolveOptions,
) -> Result<Resolution, KgError> {
    if name.trim().is_empty() {
        return Err(KgError::NotFound(String::new()));
    }
    if let Some(hit) = cache.get(name) {
        return Ok(hit);
    }
    if cache.is_known_miss(name) {
        return Err(KgError::NotFound(name.to_string()));
    }

    let mut found = pick(store.find_by_name(name, false)?, false);
    if found.is_none() && options.case_insensitive_fallback {
        found = pick(store.find_by_name(name, true)?, true);
    }
    match found {
        Some(res) => {
            if res.tie {
                tracing::warn!(name, id = %res.id, "entity resolution tie on type count");
            }
            cache.put(name, res.clone());
            Ok(res)
        }
        None => {
            cache.miss(name);
            Err(KgError::NotFound(name.to_string()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphStore, TripleRecord};

    fn rec(h: &str, hn: &str, types: &[&str]) -> TripleRecord {
        TripleRecord {
            head: h.into(),
            relation: "r".into(),
            tail: "sink".into(),
            head_name: Some(hn.into()),
            tail_name: Some("Sink".into()),
            head_types: types.iter().map(|s| s.to_string()).collect(),
            tail_types: vec![],
        }
    }

    #[test]
    fn most_types_wins() {
        let s = GraphStore::from_records(vec![
            rec("m.x1", "X", &["t1"]),
            rec("m.x3", "X", &["t1", "t2", "t3"]),
        ])
        .unwrap();
        let res = resolve_entity(&s, "X", &ResolutionCache::new(), ResolveOptions::default()).unwrap();
        assert_eq!(res.id.as_str(), "m.x3");
        assert!(!res.tie);
    }

    #[test]
    fn tie_breaks_on_smallest_id() {
        let s = GraphStore::from_records(vec![rec("m.b", "X", &["t"]), rec("m.a", "X", &["u"])])
            .unwrap();
        let res = resolve_entity(&s, "X", &ResolutionCache::new(), ResolveOptions::default()).unwrap();
        assert_eq!(res.id.as_str(), "m.a");
        assert!(res.tie);
    }

    #[test]
    fn case_fallback_is_what_finds_lowercase_names() {
        let s = GraphStore::from_records(vec![rec("m.02mjmr", "Barack Obama", &["people.person"])])
            .unwrap();
        let strict = ResolveOptions {
            case_insensitive_fallback: false,
        };
        assert!(matches!(
            resolve_entity(&s, "barack obama", &ResolutionCache::new(), strict),
            Err(KgError::NotFound(_))
        ));
        let res = resolve_entity(&s, "barack obama", &ResolutionCache::new(), ResolveOptions::default())
            .unwrap();
        assert_eq!(res.id.as_str(), "m.02mjmr");
        assert!(res.via_fallback);
    }

    #[test]
    fn cached_and_fresh_agree() {
        let s = GraphStore::from_records(vec![rec("m.1", "One", &[]), rec("m.2", "Two", &[])]).unwrap();
        let cache = ResolutionCache::new();
        for name in ["One", "Two", "one", "Missing"] {
            let first = resolve_entity(&s, name, &cache, ResolveOptions::default()).ok();
            let second = resolve_entity(&s, name, &cache, ResolveOptions::default()).ok();
            let fresh = resolve_entity(&s, name, &ResolutionCache::new(), ResolveOptions::default()).ok();
            assert_eq!(first, second);
            assert_eq!(first, fresh);
        }
        assert_eq!(cache.len(), 3);
        assert!(cache.is_known_miss("Missing"));
    }
}
