use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WalkConfig;
use crate::kg::{Direction, EntityId, GraphStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "2hop")]
    Hop2,
    #[serde(rename = "3hop")]
    Hop3,
    #[serde(rename = "4hop")]
    Hop4,
    #[serde(rename = "5hop")]
    Hop5,
    #[serde(rename = "2I")]
    Conj2I,
}

impl Structure {
    pub const ALL: [Structure; 5] = [
        Structure::Hop2,
        Structure::Hop3,
        Structure::Hop4,
        Structure::Hop5,
        Structure::Conj2I,
    ];

    pub fn composition(hops: usize) -> Option<Self> {
        match hops {
            2 => Some(Structure::Hop2),
            3 => Some(Structure::Hop3),
            4 => Some(Structure::Hop4),
            5 => Some(Structure::Hop5),
            _ => None,
        }
    }

    /// Chain length for compositions, `None` for 2I.
    pub fn hops(self) -> Option<usize> {
        match self {
            Structure::Hop2 => Some(2),
            Structure::Hop3 => Some(3),
            Structure::Hop4 => Some(4),
            Structure::Hop5 => Some(5),
            Structure::Conj2I => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Hop2 => "2hop",
            Structure::Hop3 => "3hop",
            Structure::Hop4 => "4hop",
            Structure::Hop5 => "5hop",
            Structure::Conj2I => "2I",
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Structure::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown structure {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub head: EntityId,
    pub relation: String,
    pub tail: EntityId,
}

/// One sampled reasoning structure.
///
/// Compositions have a single branch. 2I paths have two one-hop branches
/// ending at the answer, stored in canonical (sorted) order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub structure: Structure,
    pub branches: Vec<Vec<Step>>,
    pub topic_entities: Vec<EntityId>,
    pub answer: EntityId,
    pub signature: String,
}

fn branch_key(steps: &[Step]) -> String {
    let mut s = String::new();
    for (i, step) in steps.iter().enumerate() {
        if i == 0 {
            s.push_str(step.head.as_str());
        }
        s.push('>');
        s.push_str(&step.relation);
        s.push('>');
        s.push_str(step.tail.as_str());
    }
    s
}

impl ReasoningPath {
    pub fn composition(steps: Vec<Step>) -> Self {
        let structure = Structure::composition(steps.len()).expect("composition of 2..=5 hops");
        let mut path = Self {
            structure,
            topic_entities: vec![steps[0].head.clone()],
            answer: steps[steps.len() - 1].tail.clone(),
            branches: vec![steps],
            signature: String::new(),
        };
        path.signature = path_signature(&path);
        path
    }

    pub fn conjunction(first: Vec<Step>, second: Vec<Step>) -> Self {
        let answer = first.last().expect("non-empty branch").tail.clone();
        let mut branches = vec![first, second];
        branches.sort_by_key(|b| branch_key(b));
        let mut topic_entities: Vec<EntityId> = branches.iter().map(|b| b[0].head.clone()).collect();
        topic_entities.sort();
        let mut path = Self {
            structure: Structure::Conj2I,
            branches,
            topic_entities,
            answer,
            signature: String::new(),
        };
        path.signature = path_signature(&path);
        path
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> {
        self.branches.iter().flatten()
    }

    /// Every entity on the path, in branch order, without repeats.
    pub fn entities(&self) -> Vec<EntityId> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for branch in &self.branches {
            for e in std::iter::once(&branch[0].head).chain(branch.iter().map(|s| &s.tail)) {
                if seen.insert(e.clone()) {
                    out.push(e.clone());
                }
            }
        }
        out
    }

    /// Entities strictly between a branch's start and the answer, branch by branch.
    pub fn intermediates(&self) -> Vec<EntityId> {
        self.branches
            .iter()
            .flat_map(|b| b[..b.len() - 1].iter().map(|s| s.tail.clone()))
            .collect()
    }
}

/// Canonical dedup key: structure tag, then each branch as `head>rel>tail>rel>...`.
/// 2I branches are sorted, so their order does not matter.
pub fn path_signature(path: &ReasoningPath) -> String {
    let mut keys: Vec<String> = path.branches.iter().map(|b| branch_key(b)).collect();
    if path.structure == Structure::Conj2I {
        keys.sort();
    }
    format!("{}|{}", path.structure, keys.join("&"))
}

/// Re-checks a path against the store and config, independently of how it was sampled.
pub fn verify_path(store: &GraphStore, config: &WalkConfig, path: &ReasoningPath) -> Result<(), String> {
    let preds: HashSet<&str> = config.predicates.iter().map(String::as_str).collect();
    let window = config.d_min..=config.d_max;
    let degree = |e: &EntityId, r: &str, dir: Direction| -> Result<usize, String> {
        let node = store.node(e).ok_or_else(|| format!("{e} not in store"))?;
        let rel = store.relation_id(r).ok_or_else(|| format!("relation {r} not in store"))?;
        Ok(store.edge_run(node, rel, dir).len())
    };
    let has_edge = |s: &Step| -> bool {
        match (store.node(&s.head), store.relation_id(&s.relation), store.node(&s.tail)) {
            (Some(h), Some(r), Some(t)) => store.edge_run(h, r, Direction::Outgoing).iter().any(|(_, n)| *n == t),
            _ => false,
        }
    };
    for step in path.steps() {
        if !preds.contains(step.relation.as_str()) {
            return Err(format!("relation {} is outside the predicate set", step.relation));
        }
        if !has_edge(step) {
            return Err(format!("edge {} {} {} is not in the store", step.head, step.relation, step.tail));
        }
        let tail = store.node(&step.tail).ok_or("tail missing")?;
        if store.entity_at(tail).is_cvt {
            return Err(format!("walk steps onto CVT node {}", step.tail));
        }
    }
    match path.structure.hops() {
        Some(h) => {
            let steps = &path.branches[0];
            if path.branches.len() != 1 || steps.len() != h {
                return Err("composition shape mismatch".into());
            }
            for pair in steps.windows(2) {
                if pair[0].tail != pair[1].head {
                    return Err("steps do not chain".into());
                }
            }
            let mut seen = HashSet::new();
            for e in std::iter::once(&steps[0].head).chain(steps.iter().map(|s| &s.tail)) {
                if !seen.insert(e) {
                    return Err(format!("entity {e} repeats"));
                }
            }
            for s in steps {
                let d = degree(&s.head, &s.relation, Direction::Outgoing)?;
                if !window.contains(&d) {
                    return Err(format!("|N({}, {})| = {d} outside window", s.head, s.relation));
                }
            }
            if path.answer != steps[h - 1].tail || path.topic_entities != [steps[0].head.clone()] {
                return Err("endpoints disagree with steps".into());
            }
        }
        None => {
            if path.branches.len() != 2 || path.branches.iter().any(|b| b.len() != 1) {
                return Err("2I shape mismatch".into());
            }
            let (x, y) = (&path.branches[0][0], &path.branches[1][0]);
            if x.tail != path.answer || y.tail != path.answer {
                return Err("branches do not converge on the answer".into());
            }
            if x.head == y.head || x.head == path.answer || y.head == path.answer {
                return Err("2I topic entities must be distinct".into());
            }
            let forward = |s: &Step| degree(&s.head, &s.relation, Direction::Outgoing).map(|d| window.contains(&d));
            let backward = |s: &Step| degree(&s.tail, &s.relation, Direction::Incoming).map(|d| window.contains(&d));
            let ok = (forward(x)? && backward(y)?) || (forward(y)? && backward(x)?);
            if !ok {
                return Err("2I branches violate the cardinality window".into());
            }
        }
    }
    if path.signature != path_signature(path) {
        return Err("stale signature".into());
    }
    Ok(())
}
