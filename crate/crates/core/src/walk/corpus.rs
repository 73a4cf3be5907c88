use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ReasoningPath, Sampler, Structure, WalkConfig, WalkError};
use crate::kg::GraphStore;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathCorpus {
    pub paths: Vec<ReasoningPath>,
    pub structure_histogram: BTreeMap<Structure, usize>,
    /// Rejected attempts by reason (`duplicate`, `exhausted`).
    pub rejected: BTreeMap<String, usize>,
    /// The attempt budget ran out before `n` unique paths were found.
    pub exhausted: bool,
}

impl PathCorpus {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.paths {
            out.push_str(&serde_json::to_string(p).expect("path serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<ReasoningPath>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }

    pub fn fraction(&self, s: Structure) -> f64 {
        if self.paths.is_empty() {
            return 0.0;
        }
        self.structure_histogram.get(&s).copied().unwrap_or(0) as f64 / self.paths.len() as f64
    }
}

fn draw_structure<R: Rng>(mix: &BTreeMap<Structure, f64>, rng: &mut R) -> Structure {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = Structure::Hop2;
    for (s, w) in mix {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = *s;
        if u < acc {
            return *s;
        }
    }
    last
}

/// Samples up to `n` unique paths.
///
/// Path slot `i` uses its own ChaCha8 stream (`rng_seed`, stream `i`): the
/// structure is drawn from the mix, then up to `max_attempts_per_path` walks
/// of that structure are tried until one has an unseen signature. The whole
/// run is bounded by `n * max_attempts_per_path` walk attempts.
pub fn sample_corpus(store: &GraphStore, config: &WalkConfig, n: usize) -> Result<PathCorpus, WalkError> {
    if n == 0 {
        return Err(WalkError::Config("corpus size must be at least 1".into()));
    }
    config.validate()?;
    let per_slot = config.max_attempts_per_path;
    let mut budget = (n as u64).saturating_mul(u64::from(per_slot));
    let mut seen = HashSet::new();
    let mut corpus = PathCorpus::default();
    let mut slot: u64 = 0;
    // walks inside sample_* retry dead ends themselves; one attempt here is one walk
    let single = Sampler::new(
        store,
        WalkConfig {
            max_attempts_per_path: 1,
            ..config.clone()
        },
    )?;
    while corpus.paths.len() < n && budget > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        rng.set_stream(slot);
        slot += 1;
        let structure = draw_structure(&config.structure_mix, &mut rng);
        for _ in 0..per_slot {
            if budget == 0 {
                break;
            }
            budget -= 1;
            match single.sample(structure, &mut rng) {
                Ok(path) => {
                    if seen.insert(path.signature.clone()) {
                        *corpus.structure_histogram.entry(structure).or_default() += 1;
                        corpus.paths.push(path);
                        break;
                    }
                    *corpus.rejected.entry("duplicate".into()).or_default() += 1;
                }
                Err(WalkError::Exhausted { .. }) => {
                    *corpus.rejected.entry("exhausted".into()).or_default() += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    corpus.exhausted = corpus.paths.len() < n;
    Ok(corpus)
}
