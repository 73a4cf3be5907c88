//! Deterministic inputs shared by the benchmarks.

use graphwalk_core::kg::TripleRecord;
use graphwalk_core::walk::{Structure, WalkConfig};
use graphwalk_core::{EntityId, GraphStore};

/// Freebase-style relation names, `domain.type.property`.
pub fn relation_names(n: usize) -> Vec<String> {
    const DOMAINS: [&str; 6] = ["sports", "people", "location", "film", "music", "business"];
    const TYPES: [&str; 5] = ["team", "person", "event", "place", "organization"];
    (0..n)
        .map(|i| {
            format!(
                "{}.{}.property_{i}",
                DOMAINS[i % DOMAINS.len()],
                TYPES[(i / DOMAINS.len()) % TYPES.len()]
            )
        })
        .collect()
}

/// Layered graph with `layers` levels of `width` nodes, each node linked to
/// two nodes of the next level over two relations.
pub fn layered_store(layers: usize, width: usize) -> GraphStore {
    let mut recs = Vec::new();
    for l in 0..layers - 1 {
        for i in 0..width {
            for (r, rel) in ["bench.next", "bench.alt"].iter().enumerate() {
                for j in 0..2 {
                    let t = (i * 7 + j * 13 + r * 3 + l) % width;
                    let (h, tl) = (format!("n{l}_{i}"), format!("n{}_{t}", l + 1));
                    let (hn, tn) = (format!("Node {h}"), format!("Node {tl}"));
                    recs.push(TripleRecord::new(&h, rel, &tl).names(Some(&hn), Some(&tn)));
                }
            }
        }
    }
    GraphStore::from_records(recs).expect("bench graph is valid")
}

pub fn walk_config(width: usize, structure: Structure) -> WalkConfig {
    WalkConfig {
        predicates: vec!["bench.next".into(), "bench.alt".into()],
        seeds: (0..width).map(|i| EntityId::new(format!("n0_{i}")).expect("id")).collect(),
        d_min: 1,
        d_max: 4,
        structure_mix: [(structure, 1.0)].into_iter().collect(),
        max_attempts_per_path: 100,
        rng_seed: 1,
    }
}
