//! Rendering of tool results into `<information>` blocks.

use crate::toolbox::{RelationQueryResult, TripleQueryResult};

use super::grammar::INFORMATION;

pub const NO_RESULTS: &str = "(no results)";
pub const TRUNCATION_MARKER: &str = " ...";
pub const DEFAULT_OBSERVATION_BUDGET: usize = 4096;

pub enum ToolResult<'a> {
    Relations(&'a RelationQueryResult),
    Triples(&'a TripleQueryResult),
}

fn wrap(body: &str) -> String {
    format!("{} {body} {}", INFORMATION.0, INFORMATION.1)
}

/// Joins `items` with ", " inside an information block of at most
/// `budget` bytes plus the truncation marker.
pub fn format_items(items: &[String], budget: usize) -> String {
    if items.is_empty() {
        return wrap(NO_RESULTS);
    }
    let body = items.join(", ");
    let full = wrap(&body);
    if full.len() <= budget {
        return full;
    }
    let room = budget.saturating_sub(full.len() - body.len());
    // whole items while they fit, else a prefix of the first one
    let mut len = 0;
    for item in items {
        let next = if len == 0 { item.len() } else { len + 2 + item.len() };
        if next > room {
            break;
        }
        len = next;
    }
    if len == 0 {
        len = room.min(items[0].len());
        while !body.is_char_boundary(len) {
            len -= 1;
        }
    }
    format!("{} {}{TRUNCATION_MARKER} {}", INFORMATION.0, &body[..len], INFORMATION.1)
}

pub fn format_observation(result: ToolResult<'_>, budget: usize) -> String {
    match result {
        ToolResult::Relations(r) => format_items(&r.relations, budget),
        ToolResult::Triples(t) => {
            let items: Vec<String> = t.triples.iter().map(|x| x.render()).collect();
            format_items(&items, budget)
        }
    }
}

pub fn error_observation(message: &str) -> String {
    wrap(&format!("ERROR: {message}"))
}

pub fn parse_error_observation(reason: &str) -> String {
    wrap(&format!("PARSE ERROR: {reason}"))
}

/// Inner text of an information block, or the input unchanged.
pub fn observation_body(observation: &str) -> &str {
    observation
        .trim()
        .strip_prefix(INFORMATION.0)
        .and_then(|s| s.strip_suffix(INFORMATION.1))
        .map_or(observation, str::trim)
}

/// Error observations and the empty-result sentinel count as erroneous steps.
pub fn is_erroneous(observation: &str) -> bool {
    let body = observation_body(observation);
    body == NO_RESULTS || body.starts_with("ERROR:") || body.starts_with("PARSE ERROR:")
}
