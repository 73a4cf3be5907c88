//! Answer metrics, outcome-based rejection sampling and contamination analysis.

mod contamination;
mod curate;
mod metrics;
mod report;

pub use contamination::{
    contamination_check, cosine, max_similarities, report_from_vectors, ContaminationConfig, ContaminationReport,
    QuestionSimilarity, ThresholdRow, DEFAULT_EXCLUSION_THRESHOLD, DEFAULT_THRESHOLDS,
};
pub use curate::{curate, is_grounded, reject_sample, CurationSplit, RejectReason, RejectedTrajectory, Verdict};
pub use metrics::{contains_answer, exact_match, f1, normalize_answer, pass_at_k, AnswerSet, EmConvention};
pub use report::{
    aggregate, eval_row, has_erroneous_turn, parse_gold_jsonl, question_id, recovery_rate, retrieval_rate, retrieved,
    trajectory_reward, EvalAggregates, EvalReport, EvalRow, RUN_SEPARATOR,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold answer set is empty")]
    EmptyGold,
    #[error("no gold answers for {0:?}")]
    MissingGold(String),
    #[error("{0}")]
    Argument(String),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}
