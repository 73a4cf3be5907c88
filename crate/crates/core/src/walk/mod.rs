//! Constrained random walks over an in-memory graph.
//!
//! A transition from `e` takes a relation `r` from the predicate set whose
//! outgoing neighbor set `N(e, r)` has between `d_min` and `d_max` members,
//! then moves to one of those neighbors. Walks never revisit an entity and
//! never step onto CVT nodes.

mod corpus;
mod path;

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kg::{Direction, EntityId, GraphStore, KgError, NodeId, RelId};

pub use corpus::{sample_corpus, PathCorpus};
pub use path::{path_signature, verify_path, ReasoningPath, Step, Structure};

#[derive(Debug, thiserror::Error)]
pub enum WalkError {
    #[error("invalid walk config: {0}")]
    Config(String),
    #[error("no admissible {structure} walk after {attempts} attempts")]
    Exhausted { structure: Structure, attempts: u32 },
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Structure counts of a 14,855-path reference corpus, used as the default mix.
pub const REFERENCE_STRUCTURE_COUNTS: [(Structure, u32); 5] = [
    (Structure::Hop2, 1982),
    (Structure::Hop3, 4920),
    (Structure::Hop4, 1778),
    (Structure::Hop5, 576),
    (Structure::Conj2I, 5599),
];

pub fn reference_structure_mix() -> BTreeMap<Structure, f64> {
    let total: u32 = REFERENCE_STRUCTURE_COUNTS.iter().map(|(_, c)| c).sum();
    REFERENCE_STRUCTURE_COUNTS
        .iter()
        .map(|(s, c)| (*s, f64::from(*c) / f64::from(total)))
        .collect()
}

fn default_mix() -> BTreeMap<Structure, f64> {
    reference_structure_mix()
}

fn default_attempts() -> u32 {
    100
}

/// `d_min` and `d_max` have no defaults when read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    #[serde(default)]
    pub predicates: Vec<String>,
    #[serde(default)]
    pub seeds: Vec<EntityId>,
    pub d_min: usize,
    pub d_max: usize,
    #[serde(default = "default_mix")]
    pub structure_mix: BTreeMap<Structure, f64>,
    #[serde(default = "default_attempts")]
    pub max_attempts_per_path: u32,
    #[serde(default)]
    pub rng_seed: u64,
}

impl WalkConfig {
    /// Bounds suited to small hand-built graphs: `d_min = 2`, `d_max = 40`.
    pub fn fixture_defaults(predicates: Vec<String>, seeds: Vec<EntityId>) -> Self {
        Self {
            predicates,
            seeds,
            d_min: 2,
            d_max: 40,
            structure_mix: reference_structure_mix(),
            max_attempts_per_path: default_attempts(),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), WalkError> {
        let bad = |m: String| Err(WalkError::Config(m));
        if self.d_min < 1 || self.d_min > self.d_max {
            return bad(format!("need 1 <= d_min <= d_max, got {}..{}", self.d_min, self.d_max));
        }
        if self.predicates.is_empty() {
            return bad("predicate set is empty".into());
        }
        if self.seeds.is_empty() {
            return bad("seed entity set is empty".into());
        }
        if self.max_attempts_per_path == 0 {
            return bad("max_attempts_per_path must be positive".into());
        }
        if self.structure_mix.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("structure_mix weights must be finite and non-negative".into());
        }
        let sum: f64 = self.structure_mix.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("structure_mix must sum to 1, got {sum}"));
        }
        Ok(())
    }
}

/// Prepared sampling state: predicate membership and seed nodes resolved once.
pub struct Sampler<'a> {
    store: &'a GraphStore,
    config: WalkConfig,
    allowed: Vec<bool>,
    seeds: Vec<NodeId>,
}

impl<'a> Sampler<'a> {
    pub fn new(store: &'a GraphStore, config: WalkConfig) -> Result<Self, WalkError> {
        config.validate()?;
        let mut allowed = vec![false; store.relation_names().len()];
        for p in &config.predicates {
            if let Some(r) = store.relation_id(p) {
                allowed[r.0 as usize] = true;
            }
        }
        let mut seeds = Vec::with_capacity(config.seeds.len());
        for s in &config.seeds {
            seeds.push(
                store
                    .node(s)
                    .ok_or_else(|| WalkError::Config(format!("seed {s} is not in the graph")))?,
            );
        }
        Ok(Self {
            store,
            config,
            allowed,
            seeds,
        })
    }

    pub fn config(&self) -> &WalkConfig {
        &self.config
    }

    pub fn store(&self) -> &GraphStore {
        self.store
    }

    fn in_window(&self, n: usize) -> bool {
        (self.config.d_min..=self.config.d_max).contains(&n)
    }

    /// Admissible relations at `node` in `direction`, each with its usable
    /// neighbors (not in `visited`, not CVT). Relations without usable
    /// neighbors are left out.
    fn options(&self, node: NodeId, direction: Direction, visited: &[NodeId]) -> Vec<(RelId, Vec<NodeId>)> {
        self.store
            .relation_runs(node, direction)
            .filter(|(rel, run)| self.allowed[rel.0 as usize] && self.in_window(run.len()))
            .filter_map(|(rel, run)| {
                let usable: Vec<NodeId> = run
                    .iter()
                    .map(|(_, n)| *n)
                    .filter(|n| !visited.contains(n) && !self.store.entity_at(*n).is_cvt)
                    .collect();
                (!usable.is_empty()).then_some((rel, usable))
            })
            .collect()
    }

    fn pick<T: Copy, R: Rng>(rng: &mut R, items: &[T]) -> T {
        items[rng.random_range(0..items.len())]
    }

    fn step(&self, head: NodeId, rel: RelId, tail: NodeId) -> Step {
        Step {
            head: self.store.entity_at(head).id.clone(),
            relation: self.store.relation_name(rel).to_string(),
            tail: self.store.entity_at(tail).id.clone(),
        }
    }

    fn try_composition<R: Rng>(&self, hops: usize, rng: &mut R) -> Option<Vec<Step>> {
        let mut current = Self::pick(rng, &self.seeds);
        let mut visited = vec![current];
        let mut steps = Vec::with_capacity(hops);
        for _ in 0..hops {
            let options = self.options(current, Direction::Outgoing, &visited);
            if options.is_empty() {
                return None;
            }
            let (rel, usable) = &options[rng.random_range(0..options.len())];
            let next = Self::pick(rng, usable);
            steps.push(self.step(current, *rel, next));
            visited.push(next);
            current = next;
        }
        Some(steps)
    }

    pub fn sample_composition<R: Rng>(&self, hops: usize, rng: &mut R) -> Result<ReasoningPath, WalkError> {
        let structure = Structure::composition(hops)
            .ok_or_else(|| WalkError::Config(format!("composition hops must be 2..=5, got {hops}")))?;
        for _ in 0..self.config.max_attempts_per_path {
            if let Some(steps) = self.try_composition(hops, rng) {
                return Ok(ReasoningPath::composition(steps));
            }
        }
        Err(WalkError::Exhausted {
            structure,
            attempts: self.config.max_attempts_per_path,
        })
    }

    fn try_conjunction<R: Rng>(&self, rng: &mut R) -> Option<(Step, Step)> {
        let a = Self::pick(rng, &self.seeds);
        let first = self.options(a, Direction::Outgoing, &[a]);
        if first.is_empty() {
            return None;
        }
        let (r1, usable) = &first[rng.random_range(0..first.len())];
        let target = Self::pick(rng, usable);
        let second = self.options(target, Direction::Incoming, &[a, target]);
        if second.is_empty() {
            return None;
        }
        let (r2, sources) = &second[rng.random_range(0..second.len())];
        let b = Self::pick(rng, sources);
        Some((self.step(a, *r1, target), self.step(b, *r2, target)))
    }

    pub fn sample_conjunction<R: Rng>(&self, rng: &mut R) -> Result<ReasoningPath, WalkError> {
        for _ in 0..self.config.max_attempts_per_path {
            if let Some((x, y)) = self.try_conjunction(rng) {
                return Ok(ReasoningPath::conjunction(vec![x], vec![y]));
            }
        }
        Err(WalkError::Exhausted {
            structure: Structure::Conj2I,
            attempts: self.config.max_attempts_per_path,
        })
    }

    pub fn sample<R: Rng>(&self, structure: Structure, rng: &mut R) -> Result<ReasoningPath, WalkError> {
        match structure.hops() {
            Some(h) => self.sample_composition(h, rng),
            None => self.sample_conjunction(rng),
        }
    }
}

/// Convenience wrapper over [`Sampler::sample_composition`].
pub fn sample_composition<R: Rng>(
    store: &GraphStore,
    config: &WalkConfig,
    hops: usize,
    rng: &mut R,
) -> Result<ReasoningPath, WalkError> {
    Sampler::new(store, config.clone())?.sample_composition(hops, rng)
}

pub fn sample_conjunction<R: Rng>(store: &GraphStore, config: &WalkConfig, rng: &mut R) -> Result<ReasoningPath, WalkError> {
    Sampler::new(store, config.clone())?.sample_conjunction(rng)
}

/// Reads a list file: one item per line, blank lines and `#` comments skipped.
pub fn read_list(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| seen.insert(l.to_string()))
        .map(String::from)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TripleRecord;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn named(h: &str, r: &str, t: &str) -> TripleRecord {
        TripleRecord::new(h, r, t).names(Some(&h.to_uppercase()), Some(&t.to_uppercase()))
    }

    fn cfg(preds: &[&str], seeds: &[&str], d_min: usize, d_max: usize) -> WalkConfig {
        WalkConfig {
            d_min,
            d_max,
            max_attempts_per_path: 20,
            ..WalkConfig::fixture_defaults(
                preds.iter().map(|s| s.to_string()).collect(),
                seeds.iter().map(|s| EntityId::new(*s).unwrap()).collect(),
            )
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn line_graph_has_one_walk() {
        let s = GraphStore::from_records(vec![named("a", "r", "b"), named("b", "r", "c")]).unwrap();
        let c = cfg(&["r"], &["a"], 1, 1);
        let p = sample_composition(&s, &c, 2, &mut rng()).unwrap();
        let ids: Vec<_> = p.entities().iter().map(|e| e.to_string()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(p.answer.as_str(), "c");
    }

    #[test]
    fn wide_fanout_exhausts() {
        let recs: Vec<_> = (0..10).map(|i| named("a", "r", &format!("t{i}"))).collect();
        let s = GraphStore::from_records(recs).unwrap();
        let c = cfg(&["r"], &["a"], 1, 3);
        assert!(matches!(
            sample_composition(&s, &c, 2, &mut rng()),
            Err(WalkError::Exhausted { attempts: 20, .. })
        ));
    }

    #[test]
    fn conjunction_on_two_sources() {
        let s = GraphStore::from_records(vec![named("a", "r1", "t"), named("b", "r2", "t")]).unwrap();
        let c = cfg(&["r1", "r2"], &["a"], 1, 5);
        let p = sample_conjunction(&s, &c, &mut rng()).unwrap();
        let topics: BTreeSet<_> = p.topic_entities.iter().map(|e| e.to_string()).collect();
        assert_eq!(topics, BTreeSet::from(["a".to_string(), "b".to_string()]));
        assert_eq!(p.answer.as_str(), "t");
    }

    #[test]
    fn single_branch_cannot_conjoin() {
        let s = GraphStore::from_records(vec![named("a", "r1", "t")]).unwrap();
        let c = cfg(&["r1"], &["a"], 1, 5);
        assert!(matches!(
            sample_conjunction(&s, &c, &mut rng()),
            Err(WalkError::Exhausted { .. })
        ));
    }

    #[test]
    fn star_covers_all_topic_pairs() {
        let srcs = ["a", "b", "c", "d"];
        let s = GraphStore::from_records(srcs.iter().map(|x| named(x, "r", "t"))).unwrap();
        let c = cfg(&["r"], &srcs, 1, 4);
        let sampler = Sampler::new(&s, c).unwrap();
        // every unordered pair of distinct sources, by scan
        let mut expected = BTreeSet::new();
        for (i, x) in srcs.iter().enumerate() {
            for y in &srcs[i + 1..] {
                expected.insert((x.to_string(), y.to_string()));
            }
        }
        let mut r = rng();
        let mut seen = BTreeSet::new();
        for _ in 0..2000 {
            let p = sampler.sample_conjunction(&mut r).unwrap();
            let mut t: Vec<String> = p.topic_entities.iter().map(|e| e.to_string()).collect();
            t.sort();
            seen.insert((t[0].clone(), t[1].clone()));
        }
        assert_eq!(expected.len(), 6);
        assert_eq!(seen, expected);
    }

    #[test]
    fn mix_must_sum_to_one() {
        let mut c = cfg(&["r"], &["a"], 1, 2);
        c.structure_mix.insert(Structure::Hop2, 0.5);
        assert!(matches!(c.validate(), Err(WalkError::Config(_))));
    }

    #[test]
    fn d_bounds_are_required_in_files() {
        let err = serde_json::from_str::<WalkConfig>(r#"{"predicates": ["r"], "seeds": ["a"]}"#).unwrap_err();
        assert!(err.to_string().contains("d_min"));
    }

    #[test]
    fn list_files_skip_comments_and_duplicates() {
        assert_eq!(read_list("# preds\nr1\n\n r2 \nr1\n"), ["r1", "r2"]);
    }
}
