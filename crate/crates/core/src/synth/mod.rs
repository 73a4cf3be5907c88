//! Trajectory synthesis from sampled reasoning paths: masked question
//! generation, quality filtering, environment feedback simulation,
//! rationale generation and assembly.

mod assemble;
mod mask;
mod pipeline;
mod quality;
mod simulate;

pub use assemble::{assemble_trajectory, describe_action, generate_thoughts, Provenance, SynthRecord};
pub use mask::{mask_path, MaskedPath, Placeholder};
pub use pipeline::{
    run_pipeline, synthesize_one, Disposition, QuarantineEntry, SynthConfig, SynthCounters, SynthOutput,
};
pub use quality::{
    generate_question, parse_scores, score_question, QualityScore, ScoreFormat, DEFAULT_QUALITY_THRESHOLD, MAX_SCORE,
};
pub use simulate::{entity_argument, simulate_feedback, SimulatedStep, SimulationConfig, DEFAULT_DISTRACTORS};

use crate::gateway::GatewayError;
use crate::kg::KgError;
use crate::toolbox::ToolError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("question generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: u32, reason: String },
    #[error("average quality score {0:.2} below threshold")]
    LowQuality(f64),
    #[error("unparseable quality score: {0}")]
    ScoreParse(String),
    #[error("unfaithful step {step}: {reason}")]
    Unfaithful { step: usize, reason: String },
    #[error("rationale generation failed after {attempts} attempts: {reason}")]
    ThoughtFailed { attempts: u32, reason: String },
    #[error("assembly: {0}")]
    Assembly(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}
