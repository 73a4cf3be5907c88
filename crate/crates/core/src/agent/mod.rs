//! Interactive agent: tag grammar, observation rendering, trajectories and
//! the think / act / observe episode loop.

mod episode;
pub mod grammar;
pub mod observation;
pub mod trajectory;

pub use episode::{run_episode, EpisodeError, EpisodeState, RuntimeConfig, DEFAULT_MAX_TURNS};
pub use grammar::{contains_reserved_tag, parse_answer, parse_call, parse_turn, Action, ToolCall, TurnError};
pub use observation::{
    error_observation, format_items, format_observation, is_erroneous, observation_body, parse_error_observation,
    ToolResult, DEFAULT_OBSERVATION_BUDGET, NO_RESULTS, TRUNCATION_MARKER,
};
pub use trajectory::{
    parse_trajectory, parse_transcript, read_jsonl, render_turns, serialize_trajectory, write_jsonl, LossSpan, Source,
    SpanRole, Trajectory, TrajectoryError, TrajectoryMeta, Turn, SCHEMA_VERSION,
};
