//! Tag grammar for agent turns.
//!
//! A turn is `<think> ... </think>` followed by exactly one action block,
//! either `<kg-query> tool(args) </kg-query>` or `<answer> [...] </answer>`.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const THINK: (&str, &str) = ("<think>", "</think>");
pub const KG_QUERY: (&str, &str) = ("<kg-query>", "</kg-query>");
pub const ANSWER: (&str, &str) = ("<answer>", "</answer>");
pub const INFORMATION: (&str, &str) = ("<information>", "</information>");

/// Literals that must not appear inside generated free text.
pub const RESERVED_TAGS: [&str; 8] = [
    "<think>",
    "</think>",
    "<kg-query>",
    "</kg-query>",
    "<answer>",
    "</answer>",
    "<information>",
    "</information>",
];

pub fn contains_reserved_tag(text: &str) -> bool {
    RESERVED_TAGS.iter().any(|t| text.contains(t))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCall {
    GetRelations { entity: String },
    GetTriples { entity: String, relations: Vec<String> },
}

impl ToolCall {
    pub fn entity(&self) -> &str {
        match self {
            ToolCall::GetRelations { entity } | ToolCall::GetTriples { entity, .. } => entity,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::GetRelations { .. } => "get_relations",
            ToolCall::GetTriples { .. } => "get_triples",
        }
    }
}

fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ToolCall::GetRelations { entity } => write!(f, "get_relations({})", quote(entity)),
            ToolCall::GetTriples { entity, relations } => {
                let list: Vec<String> = relations.iter().map(|r| quote(r)).collect();
                write!(f, "get_triples({}, [{}])", quote(entity), list.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    KgQuery { call: ToolCall },
    Answer { answers: Vec<String> },
    /// Model output that did not parse; kept verbatim.
    Malformed { raw: String },
}

impl Action {
    /// The action block as it appears in the transcript.
    pub fn render(&self) -> String {
        match self {
            Action::KgQuery { call } => format!("{} {call} {}", KG_QUERY.0, KG_QUERY.1),
            Action::Answer { answers } => format!(
                "{} {} {}",
                ANSWER.0,
                serde_json::to_string(answers).expect("answers serialize"),
                ANSWER.1
            ),
            Action::Malformed { raw } => raw.trim().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TurnError {
    #[error("malformed turn: {0}")]
    Malformed(String),
    #[error("ambiguous turn: more than one action block")]
    Ambiguous,
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
}

/// Byte range of the first well-formed `open ... close` block at or after `from`.
fn find_block(text: &str, tags: (&str, &str), from: usize) -> Option<(usize, usize, usize, usize)> {
    let open = from + text.get(from..)?.find(tags.0)?;
    let inner = open + tags.0.len();
    let close = inner + text[inner..].find(tags.1)?;
    Some((open, inner, close, close + tags.1.len()))
}

fn all_blocks(text: &str, tags: (&str, &str)) -> Vec<(usize, usize, usize, usize)> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(b) = find_block(text, tags, from) {
        from = b.3;
        out.push(b);
    }
    out
}

/// Parses one model turn into its thought and action.
pub fn parse_turn(text: &str) -> Result<(String, Action), TurnError> {
    let think_block = find_block(text, THINK, 0);
    let think = think_block
        .map(|(_, a, b, _)| text[a..b].trim().to_string())
        .unwrap_or_default();
    // action tags quoted inside the thought do not count
    let outside = |b: &(usize, usize, usize, usize)| match think_block {
        Some((s, _, _, e)) => b.0 >= e || b.3 <= s,
        None => true,
    };
    let queries: Vec<_> = all_blocks(text, KG_QUERY).into_iter().filter(outside).collect();
    let answers: Vec<_> = all_blocks(text, ANSWER).into_iter().filter(outside).collect();
    match (queries.as_slice(), answers.as_slice()) {
        ([], []) => Err(TurnError::Malformed("no <kg-query> or <answer> block".into())),
        ([q], []) => Ok((think, Action::KgQuery { call: parse_call(&text[q.1..q.2])? })),
        ([], [a]) => Ok((think, Action::Answer { answers: parse_answer(&text[a.1..a.2])? })),
        _ => Err(TurnError::Ambiguous),
    }
}

/// JSON list of strings, a single JSON string, or a comma-separated list.
pub fn parse_answer(payload: &str) -> Result<Vec<String>, TurnError> {
    let payload = payload.trim();
    let items: Vec<String> = if let Ok(list) = serde_json::from_str::<Vec<String>>(payload) {
        list
    } else if let Ok(single) = serde_json::from_str::<String>(payload) {
        vec![single]
    } else {
        let inner = payload
            .strip_prefix('[')
            .and_then(|p| p.strip_suffix(']'))
            .unwrap_or(payload);
        inner
            .split(',')
            .map(|s| s.trim().trim_matches(|c| c == '"' || c == '\'').trim().to_string())
            .collect()
    };
    let items: Vec<String> = items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(TurnError::Malformed("empty answer".into()));
    }
    Ok(items)
}

struct Scanner<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            chars: src.char_indices().peekable(),
            src,
        }
    }

    fn skip_ws(&mut self) {
        while self.chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            self.chars.next();
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|(_, c)| *c)
    }

    fn eat(&mut self, want: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(want) {
            self.chars.next();
            true
        } else {
            false
        }
    }

    fn pos(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |(i, _)| *i)
    }

    /// A quoted string (`"..."` with JSON escapes, or `'...'`) or a bare
    /// token ending at `,`, `]` or `)`.
    fn value(&mut self) -> Result<String, TurnError> {
        self.skip_ws();
        match self.peek() {
            Some('"') => {
                let start = self.pos();
                self.chars.next();
                let mut escaped = false;
                loop {
                    match self.chars.next() {
                        None => return Err(TurnError::Malformed("unterminated string".into())),
                        Some((_, '\\')) if !escaped => escaped = true,
                        Some((i, '"')) if !escaped => {
                            let lit = &self.src[start..=i];
                            return Ok(serde_json::from_str(lit).unwrap_or_else(|_| lit[1..lit.len() - 1].to_string()));
                        }
                        Some(_) => escaped = false,
                    }
                }
            }
            Some('\'') => {
                self.chars.next();
                let start = self.pos();
                loop {
                    match self.chars.next() {
                        None => return Err(TurnError::Malformed("unterminated string".into())),
                        Some((i, '\'')) => return Ok(self.src[start..i].to_string()),
                        Some(_) => {}
                    }
                }
            }
            _ => {
                let start = self.pos();
                while self.peek().is_some_and(|c| !matches!(c, ',' | ']' | ')')) {
                    self.chars.next();
                }
                let end = self.pos();
                Ok(self.src[start..end].trim().to_string())
            }
        }
    }

    fn list(&mut self) -> Result<Vec<String>, TurnError> {
        if !self.eat('[') {
            return Err(TurnError::Malformed("expected a relation list".into()));
        }
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            if self.eat(']') {
                return Ok(items);
            }
            let v = self.value()?;
            if !v.is_empty() && v != "..." && v != "…" {
                items.push(v);
            }
            self.skip_ws();
            if self.eat(',') {
                continue;
            }
            if self.eat(']') {
                return Ok(items);
            }
            return Err(TurnError::Malformed("unterminated relation list".into()));
        }
    }
}

/// `get_relations("e")` or `get_triples("e", [r1, r2, ...])`.
pub fn parse_call(payload: &str) -> Result<ToolCall, TurnError> {
    let payload = payload.trim();
    let open = payload
        .find('(')
        .ok_or_else(|| TurnError::Malformed(format!("not a tool call: {payload:?}")))?;
    let name = payload[..open].trim();
    if name != "get_relations" && name != "get_triples" {
        if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
            return Err(TurnError::Malformed(format!("not a tool call: {payload:?}")));
        }
        return Err(TurnError::UnknownTool(name.to_string()));
    }
    let mut sc = Scanner::new(&payload[open + 1..]);
    let entity = sc.value()?;
    if entity.is_empty() {
        return Err(TurnError::Malformed(format!("{name}: missing entity argument")));
    }
    let call = if name == "get_relations" {
        ToolCall::GetRelations { entity }
    } else {
        if !sc.eat(',') {
            return Err(TurnError::Malformed("get_triples: missing relation list".into()));
        }
        let relations = sc.list()?;
        if relations.is_empty() {
            return Err(TurnError::Malformed("get_triples: empty relation list".into()));
        }
        ToolCall::GetTriples { entity, relations }
    };
    if !sc.eat(')') {
        return Err(TurnError::Malformed(format!("{name}: expected `)`")));
    }
    sc.skip_ws();
    if sc.peek().is_some() {
        return Err(TurnError::Malformed(format!("{name}: trailing text after call")));
    }
    Ok(call)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_study_first_turn() {
        let text = "<think> I will start with the event. </think>\n<kg-query> get_relations(\"1946 World Series\") </kg-query>";
        let (think, action) = parse_turn(text).unwrap();
        assert_eq!(think, "I will start with the event.");
        assert_eq!(
            action,
            Action::KgQuery {
                call: ToolCall::GetRelations {
                    entity: "1946 World Series".into()
                }
            }
        );
    }

    #[test]
    fn case_study_answer_turn() {
        let (_, action) = parse_turn("<think> done </think> <answer> [\"Busch Stadium\"] </answer>").unwrap();
        assert_eq!(
            action,
            Action::Answer {
                answers: vec!["Busch Stadium".into()]
            }
        );
    }

    #[test]
    fn prose_only_is_malformed() {
        assert!(matches!(parse_turn("I think it is Paris."), Err(TurnError::Malformed(_))));
    }

    #[test]
    fn both_actions_are_ambiguous() {
        let t = "<think>x</think><kg-query>get_relations(\"a\")</kg-query><answer>[\"b\"]</answer>";
        assert_eq!(parse_turn(t), Err(TurnError::Ambiguous));
    }

    #[test]
    fn unknown_tool_is_reported() {
        assert_eq!(
            parse_turn("<kg-query> run_sparql(\"x\") </kg-query>"),
            Err(TurnError::UnknownTool("run_sparql".into()))
        );
    }

    #[test]
    fn tolerant_triples_list() {
        let call = parse_call(
            "get_triples(\"1946 World Series\", [\"sports.sports_championship_event.champion\", time.event.locations, ...])",
        )
        .unwrap();
        assert_eq!(
            call,
            ToolCall::GetTriples {
                entity: "1946 World Series".into(),
                relations: vec![
                    "sports.sports_championship_event.champion".into(),
                    "time.event.locations".into()
                ],
            }
        );
    }

    #[test]
    fn rendered_calls_parse_back() {
        let call = ToolCall::GetTriples {
            entity: "Sportsman's \"Park\"".into(),
            relations: vec!["a.b".into(), "c, d".into()],
        };
        assert_eq!(parse_call(&call.to_string()).unwrap(), call);
    }

    #[test]
    fn answer_fallbacks() {
        assert_eq!(parse_answer("Paris, Lyon").unwrap(), ["Paris", "Lyon"]);
        assert_eq!(parse_answer("\"Paris\"").unwrap(), ["Paris"]);
        assert_eq!(parse_answer("['Paris']").unwrap(), ["Paris"]);
        assert!(parse_answer(" [] ").is_err());
    }

    #[test]
    fn action_tags_inside_think_are_ignored() {
        let t = "<think>maybe <answer>[\"x\"]</answer> later</think><kg-query>get_relations(\"a\")</kg-query>";
        assert!(matches!(parse_turn(t).unwrap().1, Action::KgQuery { .. }));
    }

    #[test]
    fn empty_triples_list_rejected() {
        assert!(parse_call("get_triples(\"a\", [])").is_err());
        assert!(parse_call("get_triples(\"a\")").is_err());
    }
}
