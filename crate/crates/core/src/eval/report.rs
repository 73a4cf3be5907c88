use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::curate::is_grounded;
use super::metrics::{contains_answer, exact_match, f1, pass_at_k, AnswerSet, EmConvention};
use super::EvalError;
use crate::agent::Trajectory;

/// Separates a question id from a run index in rollout ids (`q17#3`).
pub const RUN_SEPARATOR: char = '#';

pub fn question_id(trajectory_id: &str) -> &str {
    trajectory_id
        .rsplit_once(RUN_SEPARATOR)
        .map_or(trajectory_id, |(q, _)| q)
}

/// Sparse trajectory-level reward: EM of the final answers, 0 when truncated.
pub fn trajectory_reward(traj: &Trajectory, gold: &AnswerSet, convention: EmConvention) -> Result<u8, EvalError> {
    let em = exact_match(&AnswerSet::new(&traj.answers), gold, convention)?;
    Ok(if traj.truncated { 0 } else { em })
}

pub fn retrieved(traj: &Trajectory, gold: &AnswerSet) -> bool {
    let observations = traj.observations();
    gold.raw.iter().any(|g| contains_answer(&observations, g))
}

pub fn has_erroneous_turn(traj: &Trajectory) -> bool {
    traj.turns.iter().any(|t| t.is_erroneous())
}

pub fn retrieval_rate<'a>(batch: impl IntoIterator<Item = (&'a Trajectory, &'a AnswerSet)>) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for (t, g) in batch {
        total += 1;
        hits += usize::from(retrieved(t, g));
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Share of trajectories with an erroneous query turn that still end correct;
/// `None` when no trajectory has an erroneous turn.
pub fn recovery_rate<'a>(
    batch: impl IntoIterator<Item = (&'a Trajectory, &'a AnswerSet)>,
    convention: EmConvention,
) -> Result<Option<f64>, EvalError> {
    let (mut recovered, mut erroneous) = (0usize, 0usize);
    for (t, g) in batch {
        if has_erroneous_turn(t) {
            erroneous += 1;
            recovered += usize::from(trajectory_reward(t, g, convention)? == 1);
        }
    }
    Ok((erroneous > 0).then(|| recovered as f64 / erroneous as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub id: String,
    pub question_id: String,
    pub em_hit: u8,
    pub em_set: u8,
    pub f1: f64,
    pub reward: u8,
    pub retrieved: bool,
    pub grounded: bool,
    pub erroneous: bool,
    /// Set only for trajectories with an erroneous turn.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovered: Option<bool>,
    pub turns: usize,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalAggregates {
    pub trajectories: usize,
    pub questions: usize,
    pub em_hit: f64,
    pub em_set: f64,
    pub f1: f64,
    pub pass_at_k: BTreeMap<usize, f64>,
    pub retrieval_rate: f64,
    pub recovery_rate: Option<f64>,
    pub mean_turns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub convention: EmConvention,
    pub rows: Vec<EvalRow>,
    pub aggregates: EvalAggregates,
}

pub fn eval_row(traj: &Trajectory, gold: &AnswerSet, convention: EmConvention) -> Result<EvalRow, EvalError> {
    let pred = AnswerSet::new(&traj.answers);
    let erroneous = has_erroneous_turn(traj);
    let reward = trajectory_reward(traj, gold, convention)?;
    Ok(EvalRow {
        id: traj.id.clone(),
        question_id: question_id(&traj.id).to_string(),
        em_hit: exact_match(&pred, gold, EmConvention::Hit)?,
        em_set: exact_match(&pred, gold, EmConvention::Set)?,
        f1: f1(&pred, gold)?,
        reward,
        retrieved: retrieved(traj, gold),
        grounded: is_grounded(traj),
        erroneous,
        recovered: erroneous.then_some(reward == 1),
        turns: traj.turns.len(),
        truncated: traj.truncated,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Aggregates from rows alone; pass@k groups rows by question and uses `reward` as success.
pub fn aggregate(rows: &[EvalRow], ks: &[usize]) -> Result<EvalAggregates, EvalError> {
    let mut per_question: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = per_question.entry(r.question_id.as_str()).or_default();
        e.0 += usize::from(r.reward == 1);
        e.1 += 1;
    }
    let mut pass = BTreeMap::new();
    for &k in ks {
        let vals = per_question
            .values()
            .map(|&(c, n)| pass_at_k(c, n, k))
            .collect::<Result<Vec<_>, _>>()?;
        pass.insert(k, mean(vals.into_iter()));
    }
    let erroneous: Vec<&EvalRow> = rows.iter().filter(|r| r.erroneous).collect();
    Ok(EvalAggregates {
        trajectories: rows.len(),
        questions: per_question.len(),
        em_hit: mean(rows.iter().map(|r| f64::from(r.em_hit))),
        em_set: mean(rows.iter().map(|r| f64::from(r.em_set))),
        f1: mean(rows.iter().map(|r| r.f1)),
        pass_at_k: pass,
        retrieval_rate: mean(rows.iter().map(|r| f64::from(u8::from(r.retrieved)))),
        recovery_rate: (!erroneous.is_empty())
            .then(|| mean(erroneous.iter().map(|r| f64::from(u8::from(r.recovered == Some(true)))))),
        mean_turns: mean(rows.iter().map(|r| r.turns as f64)),
    })
}

impl EvalReport {
    /// Scores each trajectory against the gold set of its question id.
    pub fn build(
        trajectories: &[Trajectory],
        gold: &BTreeMap<String, AnswerSet>,
        convention: EmConvention,
        ks: &[usize],
    ) -> Result<Self, EvalError> {
        let rows = trajectories
            .iter()
            .map(|t| {
                let qid = question_id(&t.id);
                let g = gold.get(qid).ok_or_else(|| EvalError::MissingGold(qid.to_string()))?;
                eval_row(t, g, convention)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let aggregates = aggregate(&rows, ks)?;
        Ok(Self {
            convention,
            rows,
            aggregates,
        })
    }

    /// Stored aggregates agree with a recomputation from the rows.
    pub fn is_consistent(&self) -> bool {
        let ks: Vec<usize> = self.aggregates.pass_at_k.keys().copied().collect();
        let Ok(again) = aggregate(&self.rows, &ks) else {
            return false;
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let a = &self.aggregates;
        a.trajectories == again.trajectories
            && a.questions == again.questions
            && close(a.em_hit, again.em_hit)
            && close(a.em_set, again.em_set)
            && close(a.f1, again.f1)
            && close(a.retrieval_rate, again.retrieval_rate)
            && close(a.mean_turns, again.mean_turns)
            && match (a.recovery_rate, again.recovery_rate) {
                (None, None) => true,
                (Some(x), Some(y)) => close(x, y),
                _ => false,
            }
            && a.pass_at_k.len() == again.pass_at_k.len()
            && a.pass_at_k.iter().all(|(k, v)| again.pass_at_k.get(k).is_some_and(|w| close(*v, *w)))
    }
}

#[derive(Debug, Clone, Deserialize)]
struct GoldRecord {
    id: String,
    answers: Vec<String>,
    #[serde(default)]
    aliases: Vec<String>,
}

/// Reads `{"id", "answers", "aliases"?}` JSONL into gold sets; aliases join the answers.
pub fn parse_gold_jsonl(text: &str) -> Result<BTreeMap<String, AnswerSet>, EvalError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: GoldRecord =
            serde_json::from_str(line).map_err(|e| EvalError::Argument(format!("gold line {}: {e}", i + 1)))?;
        let set = AnswerSet::new(rec.answers.iter().chain(&rec.aliases));
        if set.is_empty() {
            return Err(EvalError::EmptyGold);
        }
        out.insert(rec.id, set);
    }
    Ok(out)
}
