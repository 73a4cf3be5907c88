use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Direction, Entity, EntityId, KgError, KnowledgeGraph, Limited, Triple, TripleRecord};

/// Dense index of an entity inside a [`GraphStore`]. Index order equals id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

/// Dense index of a relation inside a [`GraphStore`]. Index order equals name order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
}

/// Immutable in-memory triple store.
///
/// Edges are kept twice, once per direction, each list sorted by
/// `(relation, neighbor)` so `(entity, relation, direction)` lookups are a
/// binary search.
#[derive(Debug, Clone)]
pub struct GraphStore {
    entities: Vec<Entity>,
    entity_index: HashMap<EntityId, NodeId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelId>,
    out_edges: Vec<Vec<(RelId, NodeId)>>,
    in_edges: Vec<Vec<(RelId, NodeId)>>,
    by_name: HashMap<String, Vec<NodeId>>,
    by_lower_name: HashMap<String, Vec<NodeId>>,
    triple_count: usize,
}

impl Default for GraphStore {
    fn default() -> Self {
        Self::from_records(Vec::new()).expect("empty input is valid")
    }
}

impl GraphStore {
    /// Builds and finalizes a store. Duplicate triples collapse; the first
    /// non-empty name seen for an entity wins and types accumulate.
    pub fn from_records(records: impl IntoIterator<Item = TripleRecord>) -> Result<Self, KgError> {
        #[derive(Default)]
        struct Pending {
            name: Option<String>,
            types: BTreeSet<String>,
        }

        let mut pending: BTreeMap<String, Pending> = BTreeMap::new();
        let mut triples: BTreeSet<(String, String, String)> = BTreeSet::new();

        for (index, rec) in records.into_iter().enumerate() {
            for (what, value) in [
                ("head", &rec.head),
                ("relation", &rec.relation),
                ("tail", &rec.tail),
            ] {
                if value.trim().is_empty() {
                    return Err(KgError::Ingest {
                        index,
                        reason: format!("empty {what}"),
                    });
                }
            }
            for (id, name, types) in [
                (&rec.head, &rec.head_name, &rec.head_types),
                (&rec.tail, &rec.tail_name, &rec.tail_types),
            ] {
                let slot = pending.entry(id.clone()).or_default();
                if slot.name.is_none() {
                    slot.name = name.clone().filter(|n| !n.trim().is_empty());
                }
                slot.types.extend(types.iter().cloned());
            }
            triples.insert((rec.head, rec.relation, rec.tail));
        }

        let mut entities = Vec::with_capacity(pending.len());
        let mut entity_index = HashMap::with_capacity(pending.len());
        for (i, (id, p)) in pending.into_iter().enumerate() {
            let id = EntityId::new(id).map_err(|e| KgError::Ingest {
                index: i,
                reason: e.to_string(),
            })?;
            entity_index.insert(id.clone(), NodeId(i as u32));
            entities.push(Entity::new(id, p.name, p.types));
        }

        let relation_names: BTreeSet<&str> = triples.iter().map(|(_, r, _)| r.as_str()).collect();
        let relations: Vec<String> = relation_names.into_iter().map(str::to_string).collect();
        let relation_index: HashMap<String, RelId> = relations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), RelId(i as u32)))
            .collect();

        let mut out_edges = vec![Vec::new(); entities.len()];
        let mut in_edges = vec![Vec::new(); entities.len()];
        for (h, r, t) in &triples {
            let h = entity_index[h.as_str()];
            let t = entity_index[t.as_str()];
            let r = relation_index[r.as_str()];
            out_edges[h.0 as usize].push((r, t));
            in_edges[t.0 as usize].push((r, h));
        }
        for list in out_edges.iter_mut().chain(in_edges.iter_mut()) {
            list.sort_unstable();
        }

        let mut by_name: HashMap<String, Vec<NodeId>> = HashMap::new();
        let mut by_lower_name: HashMap<String, Vec<NodeId>> = HashMap::new();
        for (i, e) in entities.iter().enumerate() {
            if let Some(name) = &e.name {
                by_name.entry(name.clone()).or_default().push(NodeId(i as u32));
                by_lower_name
                    .entry(name.to_lowercase())
                    .or_default()
                    .push(NodeId(i as u32));
            }
        }

        Ok(Self {
            entities,
            entity_index,
            relations,
            relation_index,
            out_edges,
            in_edges,
            by_name,
            by_lower_name,
            triple_count: triples.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.triple_count
    }

    pub fn is_empty(&self) -> bool {
        self.triple_count == 0
    }

    pub fn node(&self, id: &EntityId) -> Option<NodeId> {
        self.entity_index.get(id).copied()
    }

    pub fn node_by_str(&self, id: &str) -> Option<NodeId> {
        self.entity_index.get(id).copied()
    }

    pub fn entity_at(&self, node: NodeId) -> &Entity {
        &self.entities[node.0 as usize]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relation_id(&self, relation: &str) -> Option<RelId> {
        self.relation_index.get(relation).copied()
    }

    pub fn relation_name(&self, rel: RelId) -> &str {
        &self.relations[rel.0 as usize]
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations
    }

    /// All edges of `node` in the given direction, sorted by (relation, neighbor).
    pub fn edges(&self, node: NodeId, direction: Direction) -> &[(RelId, NodeId)] {
        match direction {
            Direction::Outgoing => &self.out_edges[node.0 as usize],
            Direction::Incoming => &self.in_edges[node.0 as usize],
        }
    }

    /// Neighbors of `node` via `rel`, as a contiguous sorted slice.
    pub fn edge_run(&self, node: NodeId, rel: RelId, direction: Direction) -> &[(RelId, NodeId)] {
        let edges = self.edges(node, direction);
        let start = edges.partition_point(|(r, _)| *r < rel);
        let end = edges.partition_point(|(r, _)| *r <= rel);
        &edges[start..end]
    }

    /// Groups the edges of `node` by relation: `(relation, run of edges)`.
    pub fn relation_runs(
        &self,
        node: NodeId,
        direction: Direction,
    ) -> impl Iterator<Item = (RelId, &[(RelId, NodeId)])> {
        let edges = self.edges(node, direction);
        let mut start = 0;
        std::iter::from_fn(move || {
            if start >= edges.len() {
                return None;
            }
            let rel = edges[start].0;
            let len = edges[start..].partition_point(|(r, _)| *r == rel);
            let run = &edges[start..start + len];
            start += len;
            Some((rel, run))
        })
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.out_edges.iter().enumerate().flat_map(move |(h, list)| {
            list.iter().map(move |(r, t)| Triple {
                head: self.entities[h].id.clone(),
                relation: self.relations[r.0 as usize].clone(),
                tail: self.entity_at(*t).id.clone(),
            })
        })
    }

    fn require(&self, id: &EntityId) -> Result<NodeId, KgError> {
        self.node(id)
            .ok_or_else(|| KgError::NotFound(id.to_string()))
    }
}

impl KnowledgeGraph for GraphStore {
    fn entity(&self, id: &EntityId) -> Result<Entity, KgError> {
        let node = self.require(id)?;
        Ok(self.entity_at(node).clone())
    }

    fn find_by_name(&self, name: &str, ignore_case: bool) -> Result<Vec<Entity>, KgError> {
        let hits = if ignore_case {
            self.by_lower_name.get(&name.to_lowercase())
        } else {
            self.by_name.get(name)
        };
        Ok(hits
            .map(|nodes| nodes.iter().map(|n| self.entity_at(*n).clone()).collect())
            .unwrap_or_default())
    }

    fn relations(&self, id: &EntityId, direction: Direction) -> Result<Limited<String>, KgError> {
        let node = self.require(id)?;
        Ok(Limited::complete(
            self.relation_runs(node, direction)
                .map(|(r, _)| self.relation_name(r).to_string())
                .collect(),
        ))
    }

    fn neighbors(
        &self,
        id: &EntityId,
        relation: &str,
        direction: Direction,
    ) -> Result<Limited<EntityId>, KgError> {
        let node = self.require(id)?;
        let Some(rel) = self.relation_id(relation) else {
            return Ok(Limited::default());
        };
        Ok(Limited::complete(
            self.edge_run(node, rel, direction)
                .iter()
                .map(|(_, n)| self.entity_at(*n).id.clone())
                .collect(),
        ))
    }

    fn stats(&self) -> StoreStats {
        StoreStats {
            triples: self.triple_count,
            entities: self.entities.len(),
            relations: self.relations.len(),
        }
    }
}
