use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    assemble_trajectory, generate_question, generate_thoughts, mask_path, score_question, simulate_feedback,
    Provenance, QualityScore, ScoreFormat, SimulationConfig, SynthError, SynthRecord, DEFAULT_QUALITY_THRESHOLD,
};
use crate::agent::{Trajectory, Turn};
use crate::gateway::{Gateway, Purpose};
use crate::toolbox::Toolbox;
use crate::walk::ReasoningPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub quality_threshold: f64,
    pub score_format: ScoreFormat,
    pub question_retries: u32,
    pub thought_retries: u32,
    pub simulation: SimulationConfig,
    /// Records processed concurrently. Scripted stubs that answer by call
    /// order are only reproducible with one worker.
    pub workers: usize,
    /// Recorded in provenance; the pipeline itself draws no random numbers.
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            quality_threshold: DEFAULT_QUALITY_THRESHOLD,
            score_format: ScoreFormat::default(),
            question_retries: 3,
            thought_retries: 3,
            simulation: SimulationConfig::default(),
            workers: 1,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=10.0).contains(&self.quality_threshold) {
            return Err("quality_threshold must lie in [0, 10]".into());
        }
        if self.workers == 0 {
            return Err("workers must be positive".into());
        }
        if self.simulation.top_k == 0 || self.simulation.per_relation_cap == 0 {
            return Err("simulation top_k and per_relation_cap must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    /// Rejected by a quality or faithfulness rule.
    Dropped,
    /// Failed for an operational reason and worth inspecting.
    Quarantined,
}

impl SynthError {
    pub fn disposition(&self) -> (Disposition, &'static str) {
        match self {
            SynthError::GenerationFailed { .. } => (Disposition::Dropped, "generation_failed"),
            SynthError::LowQuality(_) => (Disposition::Dropped, "low_quality"),
            SynthError::Unfaithful { .. } => (Disposition::Dropped, "unfaithful"),
            SynthError::ThoughtFailed { .. } => (Disposition::Dropped, "thought_failed"),
            SynthError::ScoreParse(_) => (Disposition::Quarantined, "score_parse"),
            SynthError::Gateway(_) => (Disposition::Quarantined, "gateway"),
            SynthError::Kg(_) | SynthError::Tool(_) => (Disposition::Quarantined, "kg"),
            SynthError::Assembly(_) => (Disposition::Quarantined, "assembly"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub input_index: usize,
    pub signature: String,
    pub disposition: Disposition,
    pub reason: String,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<QualityScore>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCounters {
    pub input: usize,
    pub emitted: usize,
    pub dropped: BTreeMap<String, usize>,
    pub quarantined: BTreeMap<String, usize>,
}

impl SynthCounters {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn quarantined_total(&self) -> usize {
        self.quarantined.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        self.emitted + self.dropped_total() + self.quarantined_total() == self.input
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub records: Vec<SynthRecord>,
    pub quarantine: Vec<QuarantineEntry>,
    pub counters: SynthCounters,
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(&item).expect("record serializes"));
        out.push('\n');
    }
    out
}

impl SynthOutput {
    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.records.iter().filter_map(|r| r.trajectory.as_ref())
    }

    pub fn trajectories_jsonl(&self) -> String {
        crate::agent::write_jsonl(self.trajectories())
    }

    pub fn records_jsonl(&self) -> String {
        jsonl(&self.records)
    }

    pub fn quarantine_jsonl(&self) -> String {
        jsonl(&self.quarantine)
    }
}

/// Partial state carried into the quarantine entry when a record fails.
#[derive(Default)]
struct Partial {
    question: Option<String>,
    score: Option<QualityScore>,
}

fn models(gateway: &Gateway) -> BTreeMap<String, String> {
    [Purpose::QuestionGen, Purpose::QualityScore, Purpose::ThoughtGen, Purpose::Rerank]
        .into_iter()
        .map(|p| (p.to_string(), gateway.config().model_for(p).to_string()))
        .collect()
}

fn synthesize_inner(
    toolbox: &Toolbox,
    gateway: &Gateway,
    path: &ReasoningPath,
    index: usize,
    cfg: &SynthConfig,
    partial: &mut Partial,
) -> Result<SynthRecord, SynthError> {
    let masked = mask_path(toolbox.store(), path)?;
    let (question, attempts) = generate_question(gateway, &masked, cfg.question_retries)?;
    partial.question = Some(question.clone());
    let score = score_question(gateway, &question, &masked, cfg.quality_threshold, cfg.score_format)?;
    partial.score = Some(score.clone());
    if !score.pass {
        return Err(SynthError::LowQuality(score.average));
    }
    let steps = simulate_feedback(toolbox, path, &question, &cfg.simulation)?;

    let mut state = crate::agent::EpisodeState::new(&question, masked.topic_names.clone(), steps.len() + 1);
    let mut thoughts = Vec::with_capacity(steps.len() + 1);
    for step in &steps {
        let thought = generate_thoughts(gateway, &state, &step.action, cfg.thought_retries)?;
        state.history.push(Turn {
            think: thought.clone(),
            action: step.action.clone(),
            observation: Some(step.observation.clone()),
        });
        thoughts.push(thought);
    }
    if !steps.iter().any(|s| s.observation.contains(&masked.answer_name)) {
        return Err(SynthError::Unfaithful {
            step: steps.len(),
            reason: format!("answer {:?} never observed", masked.answer_name),
        });
    }
    let mut record = SynthRecord {
        id: format!("synth-{index:06}"),
        question,
        path: path.clone(),
        masked,
        score,
        steps,
        thoughts,
        trajectory: None,
        provenance: Provenance {
            models: models(gateway),
            rng_seed: cfg.rng_seed,
            input_index: index,
            question_attempts: attempts,
        },
    };
    let answer = record.answer_action();
    record
        .thoughts
        .push(generate_thoughts(gateway, &state, &answer, cfg.thought_retries)?);
    record.trajectory = Some(assemble_trajectory(&record)?);
    Ok(record)
}

/// Runs question synthesis, filtering, feedback simulation and assembly for one path.
pub fn synthesize_one(
    toolbox: &Toolbox,
    gateway: &Gateway,
    path: &ReasoningPath,
    index: usize,
    cfg: &SynthConfig,
) -> Result<SynthRecord, QuarantineEntry> {
    let mut partial = Partial::default();
    synthesize_inner(toolbox, gateway, path, index, cfg, &mut partial).map_err(|e| {
        let (disposition, reason) = e.disposition();
        tracing::debug!(index, reason, error = %e, "record not emitted");
        QuarantineEntry {
            input_index: index,
            signature: path.signature.clone(),
            disposition,
            reason: reason.to_string(),
            detail: e.to_string(),
            question: partial.question,
            score: partial.score,
        }
    })
}

/// Processes every path and returns records and quarantine entries in input order.
pub fn run_pipeline(
    toolbox: &Toolbox,
    gateway: &Gateway,
    paths: &[ReasoningPath],
    cfg: &SynthConfig,
) -> Result<SynthOutput, SynthError> {
    cfg.validate().map_err(SynthError::Assembly)?;
    let slots: Vec<Mutex<Option<Result<SynthRecord, QuarantineEntry>>>> =
        paths.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers.min(paths.len()).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = paths.get(i) else { break };
                let out = synthesize_one(toolbox, gateway, path, i, cfg);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });

    let mut output = SynthOutput::default();
    output.counters.input = paths.len();
    for slot in slots {
        match slot.into_inner().expect("slot lock").expect("every slot filled") {
            Ok(record) => {
                output.counters.emitted += 1;
                output.records.push(record);
            }
            Err(entry) => {
                let bucket = match entry.disposition {
                    Disposition::Dropped => &mut output.counters.dropped,
                    Disposition::Quarantined => &mut output.counters.quarantined,
                };
                *bucket.entry(entry.reason.clone()).or_default() += 1;
                output.quarantine.push(entry);
            }
        }
    }
    Ok(output)
}
