use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::EvalError;

const ARTICLES: [&str; 3] = ["a ", "an ", "the "];

/// Lowercase, drop punctuation, collapse whitespace, strip leading articles.
pub fn normalize_answer(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    let mut s = cleaned.split_whitespace().collect::<Vec<_>>().join(" ");
    while let Some(rest) = ARTICLES.iter().find_map(|a| s.strip_prefix(a)) {
        s = rest.to_string();
    }
    s
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub raw: Vec<String>,
    pub normalized: BTreeSet<String>,
}

impl AnswerSet {
    pub fn new<S: AsRef<str>>(answers: impl IntoIterator<Item = S>) -> Self {
        let raw: Vec<String> = answers.into_iter().map(|s| s.as_ref().to_string()).collect();
        let normalized = raw.iter().map(|s| normalize_answer(s)).filter(|s| !s.is_empty()).collect();
        Self { raw, normalized }
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }

    fn overlap(&self, other: &AnswerSet) -> usize {
        self.normalized.intersection(&other.normalized).count()
    }
}

/// How a predicted answer set is compared with gold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmConvention {
    /// Any normalized overlap.
    #[default]
    #[serde(rename = "em-hit")]
    Hit,
    /// Equal normalized sets.
    #[serde(rename = "em-set")]
    Set,
}

impl EmConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            EmConvention::Hit => "em-hit",
            EmConvention::Set => "em-set",
        }
    }
}

impl std::str::FromStr for EmConvention {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "em-hit" => Ok(EmConvention::Hit),
            "em-set" => Ok(EmConvention::Set),
            other => Err(EvalError::Argument(format!("unknown EM convention {other:?}"))),
        }
    }
}

fn require_gold(gold: &AnswerSet) -> Result<(), EvalError> {
    if gold.is_empty() {
        Err(EvalError::EmptyGold)
    } else {
        Ok(())
    }
}

pub fn exact_match(pred: &AnswerSet, gold: &AnswerSet, convention: EmConvention) -> Result<u8, EvalError> {
    require_gold(gold)?;
    let hit = match convention {
        EmConvention::Hit => pred.overlap(gold) > 0,
        EmConvention::Set => pred.normalized == gold.normalized,
    };
    Ok(u8::from(hit))
}

pub fn f1(pred: &AnswerSet, gold: &AnswerSet) -> Result<f64, EvalError> {
    require_gold(gold)?;
    let common = pred.overlap(gold) as f64;
    if common == 0.0 {
        return Ok(0.0);
    }
    let p = common / pred.normalized.len() as f64;
    let r = common / gold.normalized.len() as f64;
    Ok(2.0 * p * r / (p + r))
}

/// Unbiased pass@k: `1 - C(n-c, k) / C(n, k)`, as a running product.
pub fn pass_at_k(c: usize, n: usize, k: usize) -> Result<f64, EvalError> {
    if n == 0 || k == 0 || k > n || c > n {
        return Err(EvalError::Argument(format!(
            "pass@k needs 0 <= c <= n and 1 <= k <= n, got c={c}, n={n}, k={k}"
        )));
    }
    if k == 1 {
        return Ok(c as f64 / n as f64);
    }
    if n - c < k {
        return Ok(1.0);
    }
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

/// Substring test after normalizing both sides.
pub fn contains_answer(text: &str, answer: &str) -> bool {
    let needle = normalize_answer(answer);
    if needle.is_empty() {
        return false;
    }
    normalize_answer(text).contains(&needle)
}
