use serde::{Deserialize, Serialize};

use super::metrics::{contains_answer, exact_match, AnswerSet, EmConvention};
use super::EvalError;
use crate::agent::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// No final answer: turn limit reached or episode aborted.
    Truncated,
    Incorrect,
    /// Some predicted answer never appears in the observations.
    Ungrounded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject { reasons: Vec<RejectReason> },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

pub fn is_grounded(traj: &Trajectory) -> bool {
    let observations = traj.observations();
    !traj.answers.is_empty() && traj.answers.iter().all(|a| contains_answer(&observations, a))
}

/// Accepts a trajectory only if its answer is correct and every answer was observed.
pub fn reject_sample(traj: &Trajectory, gold: &AnswerSet, convention: EmConvention) -> Result<Verdict, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    if traj.truncated || traj.error.is_some() || traj.answers.is_empty() {
        return Ok(Verdict::Reject {
            reasons: vec![RejectReason::Truncated],
        });
    }
    let mut reasons = Vec::new();
    if exact_match(&AnswerSet::new(&traj.answers), gold, convention)? == 0 {
        reasons.push(RejectReason::Incorrect);
    }
    if !is_grounded(traj) {
        reasons.push(RejectReason::Ungrounded);
    }
    Ok(if reasons.is_empty() {
        Verdict::Accept
    } else {
        Verdict::Reject { reasons }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedTrajectory {
    pub reasons: Vec<RejectReason>,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationSplit {
    pub accepted: Vec<Trajectory>,
    pub rejected: Vec<RejectedTrajectory>,
}

impl CurationSplit {
    pub fn reason_counts(&self) -> std::collections::BTreeMap<RejectReason, usize> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.rejected {
            for reason in &r.reasons {
                *counts.entry(*reason).or_default() += 1;
            }
        }
        counts
    }
}

/// Splits trajectories by [`reject_sample`]; `gold_for` maps a trajectory to its gold set.
pub fn curate<'a>(
    trajectories: impl IntoIterator<Item = Trajectory>,
    gold_for: impl Fn(&Trajectory) -> Option<&'a AnswerSet>,
    convention: EmConvention,
) -> Result<CurationSplit, EvalError> {
    let mut split = CurationSplit::default();
    for traj in trajectories {
        let gold = gold_for(&traj).ok_or_else(|| EvalError::MissingGold(traj.id.clone()))?;
        match reject_sample(&traj, gold, convention)? {
            Verdict::Accept => split.accepted.push(traj),
            Verdict::Reject { reasons } => split.rejected.push(RejectedTrajectory {
                reasons,
                trajectory: traj,
            }),
        }
    }
    Ok(split)
}
