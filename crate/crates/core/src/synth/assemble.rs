use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MaskedPath, QualityScore, SimulatedStep, SynthError};
use crate::agent::{contains_reserved_tag, Action, EpisodeState, Source, Trajectory, Turn};
use crate::gateway::{Gateway, Purpose};
use crate::walk::ReasoningPath;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Model per gateway purpose.
    pub models: BTreeMap<String, String>,
    pub rng_seed: u64,
    pub input_index: usize,
    pub question_attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub id: String,
    pub question: String,
    pub path: ReasoningPath,
    pub masked: MaskedPath,
    pub score: QualityScore,
    pub steps: Vec<SimulatedStep>,
    /// One rationale per step plus one for the final answer.
    pub thoughts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Trajectory>,
    pub provenance: Provenance,
}

impl SynthRecord {
    pub fn answer_action(&self) -> Action {
        Action::Answer {
            answers: vec![self.masked.answer_name.clone()],
        }
    }
}

/// The `next_action` text shown to the rationale model, without tags.
pub fn describe_action(action: &Action) -> String {
    match action {
        Action::KgQuery { call } => call.to_string(),
        Action::Answer { answers } => format!("answer {}", serde_json::to_string(answers).expect("strings serialize")),
        Action::Malformed { raw } => raw.clone(),
    }
}

/// Asks for the rationale `c_t` behind `oracle_action` in `state`.
pub fn generate_thoughts(
    gateway: &Gateway,
    state: &EpisodeState,
    oracle_action: &Action,
    retries: u32,
) -> Result<String, SynthError> {
    if let Action::Malformed { raw } = oracle_action {
        return Err(SynthError::Assembly(format!("oracle action is malformed: {raw}")));
    }
    let slots = BTreeMap::from([
        ("question".to_string(), state.question.clone()),
        ("history".to_string(), state.transcript()),
        ("next_action".to_string(), describe_action(oracle_action)),
    ]);
    let mut last = String::new();
    for _ in 0..=retries {
        let thought = gateway.ask(Purpose::ThoughtGen, &slots)?.trim().to_string();
        if thought.is_empty() {
            last = "empty rationale".into();
        } else if contains_reserved_tag(&thought) {
            last = "rationale contains a reserved tag".into();
        } else {
            return Ok(thought);
        }
    }
    Err(SynthError::ThoughtFailed {
        attempts: retries + 1,
        reason: last,
    })
}

/// Builds the tagged trajectory from aligned thoughts, actions and observations.
pub fn assemble_trajectory(record: &SynthRecord) -> Result<Trajectory, SynthError> {
    if record.thoughts.len() != record.steps.len() + 1 {
        return Err(SynthError::Assembly(format!(
            "{} thoughts for {} steps plus the answer",
            record.thoughts.len(),
            record.steps.len()
        )));
    }
    if record.steps.len() != record.path.steps().count() {
        return Err(SynthError::Assembly("steps do not match the path".into()));
    }
    let mut traj = Trajectory::new(
        &record.id,
        &record.question,
        record.masked.topic_names.clone(),
        Source::Synth,
    );
    for (step, thought) in record.steps.iter().zip(&record.thoughts) {
        if !matches!(step.action, Action::KgQuery { .. }) {
            return Err(SynthError::Assembly(format!("step {} is not a query", step.index)));
        }
        traj.turns.push(Turn {
            think: thought.clone(),
            action: step.action.clone(),
            observation: Some(step.observation.clone()),
        });
    }
    traj.turns.push(Turn {
        think: record.thoughts.last().expect("checked length").clone(),
        action: record.answer_action(),
        observation: None,
    });
    let answers = vec![record.masked.answer_name.clone()];
    traj.answers = answers.clone();
    traj.gold = Some(answers);
    traj.metadata.structure = Some(record.path.structure);
    traj.metadata.signature = Some(record.path.signature.clone());
    traj.seal();
    Ok(traj)
}
