use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::grammar::{parse_turn, Action, ToolCall};
use super::observation::{
    error_observation, format_observation, parse_error_observation, ToolResult, DEFAULT_OBSERVATION_BUDGET,
};
use super::trajectory::{render_turns, Source, Trajectory, Turn};
use crate::gateway::{Gateway, Purpose};
use crate::kg::EntityId;
use crate::toolbox::{Toolbox, ToolError, DEFAULT_PER_RELATION_CAP, DEFAULT_TOP_K};

pub const DEFAULT_MAX_TURNS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeConfig {
    pub max_turns: usize,
    pub top_k: usize,
    pub per_relation_cap: usize,
    pub observation_budget: usize,
    /// Abort on the first malformed turn instead of injecting a parse error.
    pub strict: bool,
    /// Rank `get_relations` output against the question.
    pub rank_with_question: bool,
    /// Reject `get_triples` relations not previously listed for that entity.
    pub enforce_relation_subset: bool,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            top_k: DEFAULT_TOP_K,
            per_relation_cap: DEFAULT_PER_RELATION_CAP,
            observation_budget: DEFAULT_OBSERVATION_BUDGET,
            strict: false,
            rank_with_question: true,
            enforce_relation_subset: true,
        }
    }
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), String> {
        let checks = [
            ("max_turns", self.max_turns),
            ("top_k", self.top_k),
            ("per_relation_cap", self.per_relation_cap),
        ];
        for (name, v) in checks {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.observation_budget < 64 {
            return Err("observation_budget must be at least 64 bytes".into());
        }
        Ok(())
    }
}

/// `s_t = (q, tau_{t-1})` plus the bookkeeping the executor needs.
#[derive(Debug, Clone, Default)]
pub struct EpisodeState {
    pub question: String,
    pub topic_entities: Vec<String>,
    pub history: Vec<Turn>,
    pub max_turns: usize,
    pub seen_relations: HashMap<EntityId, HashSet<String>>,
}

impl EpisodeState {
    pub fn new(question: impl Into<String>, topic_entities: Vec<String>, max_turns: usize) -> Self {
        Self {
            question: question.into(),
            topic_entities,
            max_turns,
            ..Default::default()
        }
    }

    pub fn turn_index(&self) -> usize {
        self.history.len()
    }

    pub fn transcript(&self) -> String {
        render_turns(&self.history).0
    }

    pub fn policy_slots(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("question".to_string(), self.question.clone()),
            ("topic_entities".to_string(), self.topic_entities.join(", ")),
            ("transcript".to_string(), self.transcript()),
        ])
    }

    /// Runs a tool call against the toolbox and returns the observation text.
    pub fn execute(&mut self, toolbox: &Toolbox, call: &ToolCall, cfg: &RuntimeConfig) -> String {
        match self.try_execute(toolbox, call, cfg) {
            Ok(obs) => obs,
            Err(e) => error_observation(&e.to_string()),
        }
    }

    fn try_execute(&mut self, toolbox: &Toolbox, call: &ToolCall, cfg: &RuntimeConfig) -> Result<String, ToolError> {
        let entity = toolbox.resolve_argument(call.entity())?;
        match call {
            ToolCall::GetRelations { .. } => {
                let query = cfg.rank_with_question.then_some(self.question.as_str());
                let result = toolbox.get_relations(&entity, query, cfg.top_k)?;
                self.seen_relations
                    .entry(entity)
                    .or_default()
                    .extend(result.relations.iter().cloned());
                Ok(format_observation(ToolResult::Relations(&result), cfg.observation_budget))
            }
            ToolCall::GetTriples { relations, .. } => {
                if cfg.enforce_relation_subset {
                    let seen = self.seen_relations.get(&entity);
                    let unseen: Vec<&str> = relations
                        .iter()
                        .filter(|r| !seen.is_some_and(|s| s.contains(*r)))
                        .map(String::as_str)
                        .collect();
                    if !unseen.is_empty() {
                        return Err(ToolError::Argument(format!(
                            "relations not listed by get_relations for {}: {}",
                            call.entity(),
                            unseen.join(", ")
                        )));
                    }
                }
                let result = toolbox.get_triples(&entity, relations, cfg.per_relation_cap)?;
                Ok(format_observation(ToolResult::Triples(&result), cfg.observation_budget))
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error("invalid runtime config: {0}")]
    Config(String),
    #[error("topic entity {name:?} cannot be resolved: {source}")]
    Topic {
        name: String,
        #[source]
        source: ToolError,
    },
}

/// Runs the think / act / observe loop until an answer or `max_turns`.
///
/// Malformed turns consume a turn and get a parse-error observation (or
/// abort the episode in strict mode). A policy failure aborts with the
/// partial trajectory and `error` set.
pub fn run_episode(
    toolbox: &Toolbox,
    policy: &Gateway,
    id: &str,
    question: &str,
    topic_entities: &[String],
    cfg: &RuntimeConfig,
) -> Result<Trajectory, EpisodeError> {
    cfg.validate().map_err(EpisodeError::Config)?;
    for name in topic_entities {
        toolbox.resolve_argument(name).map_err(|source| EpisodeError::Topic {
            name: name.clone(),
            source,
        })?;
    }
    let mut state = EpisodeState::new(question, topic_entities.to_vec(), cfg.max_turns);
    let mut traj = Trajectory::new(id, question, topic_entities.to_vec(), Source::Rollout);
    let mut answered = false;

    while state.turn_index() < cfg.max_turns {
        let reply = match policy.ask(Purpose::Policy, &state.policy_slots()) {
            Ok(r) => r,
            Err(e) => {
                traj.error = Some(format!("policy: {e}"));
                break;
            }
        };
        match parse_turn(&reply) {
            Ok((think, Action::Answer { answers })) => {
                traj.answers = answers.clone();
                state.history.push(Turn {
                    think,
                    action: Action::Answer { answers },
                    observation: None,
                });
                answered = true;
                break;
            }
            Ok((think, Action::KgQuery { call })) => {
                let observation = state.execute(toolbox, &call, cfg);
                state.history.push(Turn {
                    think,
                    action: Action::KgQuery { call },
                    observation: Some(observation),
                });
            }
            Ok((_, Action::Malformed { .. })) => unreachable!("parse_turn never yields Malformed"),
            Err(e) => {
                state.history.push(Turn {
                    think: String::new(),
                    action: Action::Malformed { raw: reply },
                    observation: Some(parse_error_observation(&e.to_string())),
                });
                if cfg.strict {
                    traj.error = Some(format!("strict mode: {e}"));
                    break;
                }
            }
        }
    }

    traj.truncated = !answered && traj.error.is_none();
    traj.turns = state.history;
    traj.seal();
    Ok(traj)
}
