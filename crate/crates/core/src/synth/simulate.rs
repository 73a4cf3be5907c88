use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::agent::{format_observation, Action, ToolCall, ToolResult, DEFAULT_OBSERVATION_BUDGET};
use crate::kg::EntityId;
use crate::toolbox::{Ranking, ToolError, Toolbox, DEFAULT_PER_RELATION_CAP, DEFAULT_TOP_K};
use crate::walk::{ReasoningPath, Step};

pub const DEFAULT_DISTRACTORS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub top_k: usize,
    pub per_relation_cap: usize,
    /// Non-oracle relations added to each simulated `get_triples`.
    pub distractors: usize,
    pub observation_budget: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            per_relation_cap: DEFAULT_PER_RELATION_CAP,
            distractors: DEFAULT_DISTRACTORS,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedStep {
    pub index: usize,
    pub entity: EntityId,
    pub oracle_relation: String,
    pub next_entity: EntityId,
    pub action: Action,
    pub observation: String,
    /// Ranked `get_relations` output the distractors were drawn from.
    pub candidates: Vec<String>,
    pub ranking: Ranking,
    pub rerank_fallback: bool,
    /// Position of the oracle relation among the candidates.
    pub oracle_rank: Option<usize>,
}

/// The string agents pass for `id`: its name when that resolves back to it.
pub fn entity_argument(toolbox: &Toolbox, id: &EntityId) -> Result<String, SynthError> {
    let name = toolbox.store().entity(id)?.display_name().to_string();
    match toolbox.resolve_argument(&name) {
        Ok(resolved) if resolved == *id => Ok(name),
        _ => Ok(id.to_string()),
    }
}

fn simulate_step(
    toolbox: &Toolbox,
    index: usize,
    step: &Step,
    question: &str,
    cfg: &SimulationConfig,
) -> Result<SimulatedStep, SynthError> {
    let unfaithful = |reason: String| SynthError::Unfaithful { step: index, reason };
    let listed = toolbox.get_relations(&step.head, Some(question), cfg.top_k)?;
    let oracle_rank = listed.relations.iter().position(|r| *r == step.relation);
    let room = cfg.distractors.min(cfg.top_k.saturating_sub(1));
    let mut relations = vec![step.relation.clone()];
    relations.extend(listed.relations.iter().filter(|r| **r != step.relation).take(room).cloned());

    let result = match toolbox.get_triples_preferring(
        &step.head,
        &relations,
        cfg.per_relation_cap,
        std::slice::from_ref(&step.tail),
    ) {
        Ok(r) => r,
        Err(ToolError::Backend(e)) => return Err(ToolError::Backend(e).into()),
        Err(e) => return Err(unfaithful(e.to_string())),
    };
    let observation = format_observation(ToolResult::Triples(&result), cfg.observation_budget);
    let oracle = result
        .triples
        .iter()
        .find(|t| t.head_id == step.head && t.relation == step.relation && t.tail_id == step.tail)
        .ok_or_else(|| unfaithful(format!("no triple {} {} {}", step.head, step.relation, step.tail)))?;
    if !observation.contains(&oracle.render()) {
        return Err(unfaithful(format!("oracle triple cut from observation at hop {index}")));
    }
    Ok(SimulatedStep {
        index,
        entity: step.head.clone(),
        oracle_relation: step.relation.clone(),
        next_entity: step.tail.clone(),
        action: Action::KgQuery {
            call: ToolCall::GetTriples {
                entity: entity_argument(toolbox, &step.head)?,
                relations,
            },
        },
        observation,
        candidates: listed.relations,
        ranking: listed.ranking,
        rerank_fallback: listed.rerank_fallback,
        oracle_rank,
    })
}

/// Replays each hop of `path` against the toolbox: relation retrieval ranked
/// by `question`, then `get_triples` on the oracle relation plus distractors.
pub fn simulate_feedback(
    toolbox: &Toolbox,
    path: &ReasoningPath,
    question: &str,
    cfg: &SimulationConfig,
) -> Result<Vec<SimulatedStep>, SynthError> {
    path.steps()
        .enumerate()
        .map(|(i, step)| simulate_step(toolbox, i, step, question, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphStore, TripleRecord};
    use crate::toolbox::ToolboxConfig;
    use std::sync::Arc;

    fn step(h: &str, r: &str, t: &str) -> Step {
        Step {
            head: EntityId::new(h).unwrap(),
            relation: r.into(),
            tail: EntityId::new(t).unwrap(),
        }
    }

    fn toolbox(recs: Vec<TripleRecord>) -> Toolbox {
        Toolbox::new(Arc::new(GraphStore::from_records(recs).unwrap()), ToolboxConfig::default())
    }

    #[test]
    fn minimal_caps_give_one_triple() {
        let tb = toolbox(vec![
            TripleRecord::new("a", "line.r", "b").names(Some("A"), Some("B")),
            TripleRecord::new("b", "line.r", "c").names(Some("B"), Some("C")),
            TripleRecord::new("c", "line.r", "d").names(Some("C"), Some("D")),
        ]);
        let path = ReasoningPath::composition(vec![step("a", "line.r", "b"), step("b", "line.r", "c")]);
        let cfg = SimulationConfig {
            top_k: 1,
            per_relation_cap: 1,
            ..Default::default()
        };
        let steps = simulate_feedback(&tb, &path, "what follows a?", &cfg).unwrap();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[1].observation, "<information> [B, line.r, C] </information>");
    }

    #[test]
    fn distractors_follow_the_oracle() {
        let tb = toolbox(vec![
            TripleRecord::new("a", "x.team", "b").names(Some("A"), Some("B")),
            TripleRecord::new("a", "x.coach", "c").names(Some("A"), Some("C")),
            TripleRecord::new("b", "x.city", "d").names(Some("B"), Some("D")),
        ]);
        let path = ReasoningPath::composition(vec![step("a", "x.team", "b"), step("b", "x.city", "d")]);
        let steps = simulate_feedback(&tb, &path, "which city is the team of A in?", &SimulationConfig::default()).unwrap();
        match &steps[0].action {
            Action::KgQuery {
                call: ToolCall::GetTriples { entity, relations },
            } => {
                assert_eq!(entity, "A");
                assert_eq!(relations, &["x.team", "x.coach"]);
            }
            other => panic!("{other:?}"),
        }
        assert!(steps[0].observation.contains("[A, x.team, B]"));
    }

    #[test]
    fn missing_edge_is_unfaithful() {
        let tb = toolbox(vec![
            TripleRecord::new("a", "x.team", "b").names(Some("A"), Some("B")),
            TripleRecord::new("b", "x.city", "d").names(Some("B"), Some("D")),
        ]);
        let path = ReasoningPath::composition(vec![step("a", "x.team", "b"), step("b", "x.gone", "d")]);
        assert!(matches!(
            simulate_feedback(&tb, &path, "q", &SimulationConfig::default()),
            Err(SynthError::Unfaithful { step: 1, .. })
        ));
    }
}
