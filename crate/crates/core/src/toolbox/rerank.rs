use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::gateway::{Gateway, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankOutcome {
    pub relations: Vec<String>,
    /// Ids in the reply that were not among the candidates.
    pub dropped: Vec<String>,
    /// The gateway failed and the BM25 order was used as-is.
    pub fallback: bool,
}

/// Pulls relation ids out of a reranker reply: one per line, with list
/// markers, numbering and quoting stripped.
pub fn parse_rerank_reply(reply: &str) -> Vec<String> {
    reply
        .lines()
        .flat_map(|line| line.split(','))
        .map(|item| {
            let item = item.trim();
            let item = item.trim_start_matches(|c: char| c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*'));
            item.trim()
                .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '[' | ']'))
                .trim()
                .to_string()
        })
        .filter(|s| !s.is_empty())
        .collect()
}

/// Asks the reranker for the top `k` of `candidates` (given in BM25 order).
///
/// The reply is validated: unknown ids are dropped, repeats ignored, and any
/// shortfall is back-filled from the BM25 order.
pub fn rerank_relations(gateway: &Gateway, question: &str, candidates: &[String], k: usize) -> RerankOutcome {
    let k = k.min(candidates.len());
    let slots = BTreeMap::from([
        ("question".to_string(), question.to_string()),
        ("candidates".to_string(), candidates.join("\n")),
        ("k".to_string(), k.to_string()),
    ]);
    let reply = match gateway.ask(Purpose::Rerank, &slots) {
        Ok(r) => r,
        Err(e) => {
            tracing::warn!(error = %e, "reranker unavailable, keeping BM25 order");
            return RerankOutcome {
                relations: candidates[..k].to_vec(),
                dropped: Vec::new(),
                fallback: true,
            };
        }
    };
    let known: HashSet<&str> = candidates.iter().map(String::as_str).collect();
    let mut seen: HashSet<String> = HashSet::new();
    let mut relations = Vec::with_capacity(k);
    let mut dropped = Vec::new();
    for id in parse_rerank_reply(&reply) {
        if !known.contains(id.as_str()) {
            dropped.push(id);
            continue;
        }
        if relations.len() < k && seen.insert(id.clone()) {
            relations.push(id);
        }
    }
    for c in candidates {
        if relations.len() >= k {
            break;
        }
        if seen.insert(c.clone()) {
            relations.push(c.clone());
        }
    }
    RerankOutcome {
        relations,
        dropped,
        fallback: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Exhaust, StubScript};

    fn cands(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r.c{i:02}")).collect()
    }

    fn gateway(reply: &str) -> Gateway {
        Gateway::stub(StubScript::sequence(Purpose::Rerank, [reply], Exhaust::Cycle))
    }

    #[test]
    fn scripted_permutation_is_kept() {
        let c = cands(3);
        let out = rerank_relations(&gateway("1. r.c02\n2. r.c00\n3. r.c01"), "q", &c, 3);
        assert_eq!(out.relations, ["r.c02", "r.c00", "r.c01"]);
        assert!(!out.fallback);
    }

    #[test]
    fn invalid_id_dropped_and_backfilled() {
        let c = cands(4);
        let out = rerank_relations(&gateway("r.c03\nmade.up\nr.c01"), "q", &c, 3);
        assert_eq!(out.relations, ["r.c03", "r.c01", "r.c00"]);
        assert_eq!(out.dropped, ["made.up"]);
    }

    #[test]
    fn default_k_on_larger_pool() {
        let c = cands(30);
        let out = rerank_relations(&gateway(""), "q", &c, 20);
        assert_eq!(out.relations.len(), 20);
    }

    #[test]
    fn gateway_failure_falls_back_to_bm25_order() {
        let g = Gateway::stub(StubScript::default());
        let c = cands(5);
        let out = rerank_relations(&g, "q", &c, 2);
        assert!(out.fallback);
        assert_eq!(out.relations, ["r.c00", "r.c01"]);
    }
}
