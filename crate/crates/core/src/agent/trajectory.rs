//! Trajectory records and their JSONL form.

use serde::{Deserialize, Serialize};

use super::grammar::{parse_turn, Action, TurnError, INFORMATION, THINK};
use super::observation::is_erroneous;
use crate::walk::Structure;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub think: String,
    pub action: Action,
    /// Present for tool calls and malformed turns, absent for answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl Turn {
    /// Agent-produced text: thought block plus action block.
    pub fn agent_text(&self) -> String {
        match &self.action {
            Action::Malformed { .. } => format!("{}\n", self.action.render()),
            action => format!("{} {} {}\n{}\n", THINK.0, self.think, THINK.1, action.render()),
        }
    }

    pub fn observation_text(&self) -> Option<String> {
        self.observation.as_ref().map(|o| format!("{o}\n"))
    }

    pub fn is_erroneous(&self) -> bool {
        matches!(self.action, Action::Malformed { .. })
            || self.observation.as_deref().is_some_and(is_erroneous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synth,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Structure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanRole {
    /// Agent output: a learning target.
    Target,
    /// Environment output: context only.
    Context,
}

/// Byte range `[start, end)` into [`Trajectory::text`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossSpan {
    pub role: SpanRole,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub id: String,
    pub question: String,
    pub topic_entities: Vec<String>,
    pub turns: Vec<Turn>,
    /// Final answers; empty when truncated or aborted.
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<String>>,
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metadata: TrajectoryMeta,
    pub loss_mask: Vec<LossSpan>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryError {
    #[error("record has no schema_version")]
    MissingVersion,
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u64 },
    #[error("invalid trajectory record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("loss mask does not match the turns")]
    MaskMismatch,
    #[error("transcript: {0}")]
    Transcript(#[from] TurnError),
}

/// Concatenated tagged text and its target/context segmentation.
pub fn render_turns(turns: &[Turn]) -> (String, Vec<LossSpan>) {
    let mut text = String::new();
    let mut spans = Vec::with_capacity(turns.len() * 2);
    let mut push = |text: &mut String, role, chunk: &str| {
        let start = text.len();
        text.push_str(chunk);
        spans.push(LossSpan {
            role,
            start,
            end: text.len(),
        });
    };
    for turn in turns {
        push(&mut text, SpanRole::Target, &turn.agent_text());
        if let Some(o) = turn.observation_text() {
            push(&mut text, SpanRole::Context, &o);
        }
    }
    (text, spans)
}

impl Trajectory {
    pub fn new(id: impl Into<String>, question: impl Into<String>, topic_entities: Vec<String>, source: Source) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            id: id.into(),
            question: question.into(),
            topic_entities,
            turns: Vec::new(),
            answers: Vec::new(),
            gold: None,
            truncated: false,
            error: None,
            metadata: TrajectoryMeta {
                source,
                structure: None,
                signature: None,
            },
            loss_mask: Vec::new(),
        }
    }

    /// Recomputes the loss mask; call after changing `turns`.
    pub fn seal(&mut self) {
        self.loss_mask = render_turns(&self.turns).1;
    }

    pub fn text(&self) -> String {
        render_turns(&self.turns).0
    }

    fn spans_text(&self, role: SpanRole) -> String {
        let text = self.text();
        self.loss_mask
            .iter()
            .filter(|s| s.role == role)
            .filter_map(|s| text.get(s.start..s.end))
            .collect()
    }

    pub fn target_text(&self) -> String {
        self.spans_text(SpanRole::Target)
    }

    pub fn context_text(&self) -> String {
        self.spans_text(SpanRole::Context)
    }

    /// All observation blocks joined by newlines.
    pub fn observations(&self) -> String {
        self.turns
            .iter()
            .filter_map(|t| t.observation.as_deref())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn agent_turns(&self) -> usize {
        self.turns.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }

    pub fn from_json(record: &str) -> Result<Self, TrajectoryError> {
        let value: serde_json::Value = serde_json::from_str(record)?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            None => return Err(TrajectoryError::MissingVersion),
            Some(v) if v != u64::from(SCHEMA_VERSION) => return Err(TrajectoryError::Version { found: v }),
            Some(_) => {}
        }
        let traj: Trajectory = serde_json::from_value(value)?;
        if traj.loss_mask != render_turns(&traj.turns).1 {
            return Err(TrajectoryError::MaskMismatch);
        }
        Ok(traj)
    }
}

pub fn serialize_trajectory(traj: &Trajectory) -> String {
    traj.to_json()
}

pub fn parse_trajectory(record: &str) -> Result<Trajectory, TrajectoryError> {
    Trajectory::from_json(record)
}

pub fn write_jsonl<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> String {
    let mut out = String::new();
    for t in trajs {
        out.push_str(&t.to_json());
        out.push('\n');
    }
    out
}

pub fn read_jsonl(text: &str) -> Result<Vec<Trajectory>, TrajectoryError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(Trajectory::from_json)
        .collect()
}

/// Recovers turns from tagged text: each agent block up to its action's
/// closing tag, then an optional information block.
pub fn parse_transcript(text: &str) -> Result<Vec<Turn>, TrajectoryError> {
    let mut turns = Vec::new();
    let mut rest = text;
    while !rest.trim().is_empty() {
        let end = ["</kg-query>", "</answer>"]
            .iter()
            .filter_map(|tag| {
                // skip tags quoted inside the thought
                let think_end = rest.find(THINK.1).map_or(0, |i| i + THINK.1.len());
                rest[think_end..].find(tag).map(|i| think_end + i + tag.len())
            })
            .min()
            .ok_or_else(|| TurnError::Malformed("no action block".into()))?;
        let (think, action) = parse_turn(&rest[..end])?;
        rest = rest[end..].trim_start_matches('\n');
        let mut observation = None;
        if rest.starts_with(INFORMATION.0) {
            if let Some(close) = rest.find(INFORMATION.1) {
                let stop = close + INFORMATION.1.len();
                observation = Some(rest[..stop].to_string());
                rest = rest[stop..].trim_start_matches('\n');
            }
        }
        turns.push(Turn {
            think,
            action,
            observation,
        });
    }
    Ok(turns)
}
