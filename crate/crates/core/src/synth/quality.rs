use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MaskedPath, SynthError};
use crate::gateway::{Gateway, Purpose};

pub const DEFAULT_QUALITY_THRESHOLD: f64 = 9.0;
pub const MAX_SCORE: u8 = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub completeness: u8,
    pub relevance: u8,
    pub coherence: u8,
    pub average: f64,
    pub pass: bool,
}

impl QualityScore {
    pub fn new(completeness: u8, relevance: u8, coherence: u8, threshold: f64) -> Self {
        let sum = f64::from(completeness) + f64::from(relevance) + f64::from(coherence);
        Self {
            completeness,
            relevance,
            coherence,
            average: sum / 3.0,
            // compare the sum so 27/3 is never rounded below 9
            pass: sum >= threshold * 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreFormat {
    /// First three integers in the reply, in prompt order.
    #[default]
    Integers,
    /// A JSON object with `completeness`, `relevance` and `coherence`.
    Json,
}

pub fn parse_scores(reply: &str, format: ScoreFormat) -> Result<[u8; 3], String> {
    let raw: Vec<u64> = match format {
        ScoreFormat::Integers => reply
            .split(|c: char| !c.is_ascii_digit())
            .filter(|s| !s.is_empty())
            .take(3)
            .map(|s| s.parse::<u64>().unwrap_or(u64::MAX))
            .collect(),
        ScoreFormat::Json => {
            let start = reply.find('{').ok_or("no JSON object in scorer reply")?;
            let end = reply.rfind('}').ok_or("no JSON object in scorer reply")?;
            let v: BTreeMap<String, serde_json::Value> =
                serde_json::from_str(&reply[start..=end]).map_err(|e| format!("scorer JSON: {e}"))?;
            ["completeness", "relevance", "coherence"]
                .iter()
                .map(|k| {
                    v.get(*k)
                        .and_then(serde_json::Value::as_u64)
                        .ok_or_else(|| format!("scorer JSON lacks integer `{k}`"))
                })
                .collect::<Result<_, _>>()?
        }
    };
    if raw.len() < 3 {
        return Err(format!("expected three scores, found {}", raw.len()));
    }
    let mut out = [0u8; 3];
    for (slot, v) in out.iter_mut().zip(&raw) {
        if *v > u64::from(MAX_SCORE) {
            return Err(format!("score {v} outside 0..={MAX_SCORE}"));
        }
        *slot = *v as u8;
    }
    Ok(out)
}

fn normalize_question(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Asks for a question until one is non-empty and leak-free.
///
/// Returns the question and the number of attempts used.
pub fn generate_question(gateway: &Gateway, masked: &MaskedPath, retries: u32) -> Result<(String, u32), SynthError> {
    let slots = BTreeMap::from([
        ("topic_entities".to_string(), masked.topic_names.join(", ")),
        ("answer".to_string(), masked.answer_name.clone()),
        ("masked_path".to_string(), masked.text.clone()),
    ]);
    let mut last = String::new();
    for attempt in 1..=retries + 1 {
        let question = normalize_question(&gateway.ask(Purpose::QuestionGen, &slots)?);
        if question.is_empty() {
            last = "empty question".into();
            continue;
        }
        if let Some(name) = masked.leaked_name(&question) {
            last = format!("question leaks masked entity {name:?}");
            continue;
        }
        return Ok((question, attempt));
    }
    Err(SynthError::GenerationFailed {
        attempts: retries + 1,
        reason: last,
    })
}

pub fn score_question(
    gateway: &Gateway,
    question: &str,
    masked: &MaskedPath,
    threshold: f64,
    format: ScoreFormat,
) -> Result<QualityScore, SynthError> {
    if question.trim().is_empty() {
        return Err(SynthError::ScoreParse("empty question".into()));
    }
    let slots = BTreeMap::from([
        ("question".to_string(), question.to_string()),
        ("path".to_string(), masked.text.clone()),
    ]);
    let reply = gateway.ask(Purpose::QualityScore, &slots)?;
    let [c, r, h] = parse_scores(&reply, format).map_err(SynthError::ScoreParse)?;
    Ok(QualityScore::new(c, r, h, threshold))
}
