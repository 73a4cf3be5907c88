use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, EmbeddingRequest, GatewayError, Purpose, TransportError};

/// Canned replies for one purpose.
///
/// Rules are tried first, in order, against the concatenated message text;
/// otherwise the next entry of `responses` is served.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurposeScript {
    pub rules: Vec<StubRule>,
    pub responses: Vec<String>,
    pub on_exhaust: Exhaust,
    /// HTTP-like statuses returned (as transient failures) before any reply.
    pub fail_first: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRule {
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exhaust {
    #[default]
    Cycle,
    RepeatLast,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingScript {
    /// Bag-of-words feature hashing, L2-normalized.
    Hashed { dim: usize },
    /// Exact text lookup; unknown texts are an error.
    Table { vectors: BTreeMap<String, Vec<f64>> },
    /// Served in order across calls, cycling.
    Sequence { vectors: Vec<Vec<f64>> },
}

impl Default for EmbeddingScript {
    fn default() -> Self {
        EmbeddingScript::Hashed { dim: 64 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StubScript {
    pub purposes: BTreeMap<Purpose, PurposeScript>,
    pub embedding: EmbeddingScript,
    /// Artificial latency per call.
    pub delay_ms: u64,
}

impl StubScript {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Precondition(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| GatewayError::Precondition(format!("{}: bad stub script: {e}", path.display())))
    }

    /// Script serving `responses` in order for `purpose`.
    pub fn sequence(purpose: Purpose, responses: impl IntoIterator<Item = impl Into<String>>, on_exhaust: Exhaust) -> Self {
        let mut script = Self::default();
        script.set(
            purpose,
            PurposeScript {
                responses: responses.into_iter().map(Into::into).collect(),
                on_exhaust,
                ..Default::default()
            },
        );
        script
    }

    pub fn set(&mut self, purpose: Purpose, script: PurposeScript) -> &mut Self {
        self.purposes.insert(purpose, script);
        self
    }
}

#[derive(Default)]
struct Cursor {
    served: usize,
    failed: usize,
}

/// Deterministic scripted backend.
pub struct StubBackend {
    script: StubScript,
    cursors: Mutex<HashMap<Purpose, Cursor>>,
    embed_cursor: Mutex<usize>,
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl StubBackend {
    pub fn new(script: StubScript) -> Self {
        Self {
            script,
            cursors: Mutex::new(HashMap::new()),
            embed_cursor: Mutex::new(0),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Highest number of calls observed executing at once.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn enter(&self) -> InFlight<'_> {
        let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        if self.script.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(self.script.delay_ms));
        }
        InFlight(&self.live)
    }

    fn reply(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let script = self.script.purposes.get(&req.purpose).ok_or_else(|| TransportError::Fatal {
            status: None,
            message: format!("stub has no script for purpose {}", req.purpose),
        })?;
        let mut cursors = self.cursors.lock().expect("stub lock");
        let cursor = cursors.entry(req.purpose).or_default();
        if cursor.failed < script.fail_first.len() {
            let status = script.fail_first[cursor.failed];
            cursor.failed += 1;
            return Err(TransportError::Transient {
                status: Some(status),
                message: "scripted failure".into(),
            });
        }

        let text: String = req
            .messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        if let Some(rule) = script.rules.iter().find(|r| text.contains(&r.contains)) {
            return Ok(rule.response.clone());
        }

        let n = script.responses.len();
        if n == 0 {
            return Err(TransportError::Fatal {
                status: None,
                message: format!("no stub rule matched for purpose {}", req.purpose),
            });
        }
        let i = cursor.served;
        cursor.served += 1;
        let picked = if i < n {
            i
        } else {
            match script.on_exhaust {
                Exhaust::Cycle => i % n,
                Exhaust::RepeatLast => n - 1,
                Exhaust::Error => {
                    return Err(TransportError::Fatal {
                        status: None,
                        message: format!("stub script for {} exhausted after {n} replies", req.purpose),
                    })
                }
            }
        };
        Ok(script.responses[picked].clone())
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

fn interpolate(template: &str, slots: &BTreeMap<String, String>) -> String {
    let mut out = template.to_string();
    for (k, v) in slots {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Feature-hashed bag of lowercase alphanumeric tokens.
pub(crate) fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let dim = dim.max(1);
    let mut v = vec![0.0; dim];
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let h = fnv1a(token.to_lowercase().as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v[0] = 1.0;
    }
    v
}

impl ChatBackend for StubBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let _guard = self.enter();
        self.reply(req).map(|r| interpolate(&r, &req.slots))
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, TransportError> {
        let _guard = self.enter();
        match &self.script.embedding {
            EmbeddingScript::Hashed { dim } => Ok(req.texts.iter().map(|t| hashed_embedding(t, *dim)).collect()),
            EmbeddingScript::Table { vectors } => req
                .texts
                .iter()
                .map(|t| {
                    vectors.get(t).cloned().ok_or_else(|| TransportError::Fatal {
                        status: None,
                        message: format!("stub embedding table has no entry for {t:?}"),
                    })
                })
                .collect(),
            EmbeddingScript::Sequence { vectors } => {
                if vectors.is_empty() {
                    return Err(TransportError::Fatal {
                        status: None,
                        message: "empty embedding sequence".into(),
                    });
                }
                let mut cursor = self.embed_cursor.lock().expect("stub lock");
                let out = req
                    .texts
                    .iter()
                    .enumerate()
                    .map(|(i, _)| vectors[(*cursor + i) % vectors.len()].clone())
                    .collect();
                *cursor += req.texts.len();
                Ok(out)
            }
        }
    }
}
