//! Chat-completion and embedding client.
//!
//! All pipeline stages talk to language models through [`Gateway`], which
//! adds retries with exponential backoff, an in-flight cap and a structured
//! request log on top of a [`ChatBackend`]. Two backends exist: an
//! OpenAI-compatible HTTP client and [`StubBackend`], a scripted responder
//! that keeps every stage runnable offline.

mod http;
mod prompt;
mod stub;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::limit::Semaphore;

pub use http::{HttpBackend, HttpBackendConfig};
pub use prompt::{render_prompt, PromptLibrary, PromptTemplate};
pub use stub::{EmbeddingScript, Exhaust, PurposeScript, StubBackend, StubRule, StubScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    QuestionGen,
    QualityScore,
    ThoughtGen,
    Rerank,
    Policy,
}

impl Purpose {
    pub const ALL: [Purpose; 5] = [
        Purpose::QuestionGen,
        Purpose::QualityScore,
        Purpose::ThoughtGen,
        Purpose::Rerank,
        Purpose::Policy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::QuestionGen => "question_gen",
            Purpose::QualityScore => "quality_score",
            Purpose::ThoughtGen => "thought_gen",
            Purpose::Rerank => "rerank",
            Purpose::Policy => "policy",
        }
    }

    /// Scoring and reranking decode greedily; generation samples.
    pub fn default_temperature(self) -> f64 {
        match self {
            Purpose::QualityScore | Purpose::Rerank => 0.0,
            Purpose::QuestionGen | Purpose::ThoughtGen => 0.7,
            Purpose::Policy => 1.0,
        }
    }
}

impl fmt::Display for Purpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Purpose {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Purpose::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| GatewayError::Precondition(format!("unknown purpose {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub purpose: Purpose,
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// The slot values the prompt was rendered from. Not sent over the
    /// wire; the stub backend may interpolate them into canned replies.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slots: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
    pub model: String,
}

/// Failure reported by a backend for a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Worth retrying: HTTP 429, 5xx, timeouts, connection resets.
    #[error("transient failure (status {status:?}): {message}")]
    Transient { status: Option<u16>, message: String },
    #[error("request rejected (status {status:?}): {message}")]
    Fatal { status: Option<u16>, message: String },
    #[error("malformed provider payload: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("template error: {0}")]
    Template(String),
    #[error("gave up after {attempts} attempts (last status {last_status:?}): {message}")]
    Exhausted {
        attempts: u32,
        last_status: Option<u16>,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError>;
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay_ms: 500,
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `n + 1`, given `n` failed attempts so far.
    pub fn delay(&self, failed: u32) -> Duration {
        let ms = self.base_delay_ms as f64 * self.factor.powi(failed.saturating_sub(1) as i32);
        Duration::from_millis(ms.min(60_000.0) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewayConfig {
    /// Model name per purpose; `default_model` when absent.
    pub models: BTreeMap<Purpose, String>,
    pub default_model: String,
    pub embedding_model: String,
    pub temperatures: BTreeMap<Purpose, f64>,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub retry: RetryPolicy,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            models: BTreeMap::new(),
            default_model: "gpt-4o-mini".into(),
            embedding_model: "bge-m3".into(),
            temperatures: BTreeMap::new(),
            max_output_tokens: 1024,
            max_in_flight: 8,
            retry: RetryPolicy::default(),
        }
    }
}

impl GatewayConfig {
    pub fn model_for(&self, purpose: Purpose) -> &str {
        self.models
            .get(&purpose)
            .map(String::as_str)
            .unwrap_or(&self.default_model)
    }

    pub fn temperature_for(&self, purpose: Purpose) -> f64 {
        self.temperatures
            .get(&purpose)
            .copied()
            .unwrap_or_else(|| purpose.default_temperature())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    /// Purpose tag, or `"embedding"`.
    pub purpose: String,
    pub model: String,
    pub attempts: u32,
    pub request: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One entry per gateway call, kept in memory and optionally appended to a JSONL file.
#[derive(Default)]
pub struct RequestLog {
    entries: Mutex<Vec<LogEntry>>,
    sink: Option<Mutex<std::fs::File>>,
}

impl RequestLog {
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        Ok(Self {
            entries: Mutex::new(Vec::new()),
            sink: Some(Mutex::new(file)),
        })
    }

    fn push(&self, mut entry: LogEntry) {
        let mut entries = self.entries.lock().expect("log lock");
        entry.seq = entries.len() as u64;
        if let Some(sink) = &self.sink {
            if let Ok(line) = serde_json::to_string(&entry) {
                let mut f = sink.lock().expect("log sink lock");
                if let Err(e) = writeln!(f, "{line}") {
                    tracing::warn!(error = %e, "could not append to request log");
                }
            }
        }
        entries.push(entry);
    }

    pub fn entries(&self) -> Vec<LogEntry> {
        self.entries.lock().expect("log lock").clone()
    }
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: GatewayConfig,
    admission: Semaphore,
    log: RequestLog,
    prompts: PromptLibrary,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: GatewayConfig) -> Self {
        Self {
            admission: Semaphore::new(config.max_in_flight),
            backend,
            config,
            log: RequestLog::default(),
            prompts: PromptLibrary::builtin(),
        }
    }

    pub fn stub(script: StubScript) -> Self {
        Self::new(Arc::new(StubBackend::new(script)), GatewayConfig::default())
    }

    pub fn with_log(mut self, log: RequestLog) -> Self {
        self.log = log;
        self
    }

    pub fn with_prompts(mut self, prompts: PromptLibrary) -> Self {
        self.prompts = prompts;
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn log(&self) -> &RequestLog {
        &self.log
    }

    pub fn prompts(&self) -> &PromptLibrary {
        &self.prompts
    }

    /// Renders the purpose's template and fills in model and decoding defaults.
    pub fn request(&self, purpose: Purpose, slots: &BTreeMap<String, String>) -> Result<ChatRequest, GatewayError> {
        let messages = self.prompts.render(purpose, slots)?;
        Ok(self.request_with_messages(purpose, messages, slots.clone()))
    }

    pub fn request_with_messages(
        &self,
        purpose: Purpose,
        messages: Vec<Message>,
        slots: BTreeMap<String, String>,
    ) -> ChatRequest {
        ChatRequest {
            purpose,
            messages,
            model: self.config.model_for(purpose).to_string(),
            temperature: self.config.temperature_for(purpose),
            max_output_tokens: self.config.max_output_tokens,
            slots,
        }
    }

    fn with_retries<T>(
        &self,
        mut call: impl FnMut() -> Result<T, TransportError>,
    ) -> (Result<T, GatewayError>, u32) {
        let policy = &self.config.retry;
        let max = policy.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match call() {
                Ok(v) => return (Ok(v), attempts),
                Err(TransportError::Transient { status, message }) => {
                    if attempts >= max {
                        return (
                            Err(GatewayError::Exhausted {
                                attempts,
                                last_status: status,
                                message,
                            }),
                            attempts,
                        );
                    }
                    tracing::debug!(attempts, ?status, "transient gateway failure, backing off");
                    std::thread::sleep(policy.delay(attempts));
                }
                Err(TransportError::Fatal { status, message }) => {
                    return (
                        Err(GatewayError::Exhausted {
                            attempts,
                            last_status: status,
                            message,
                        }),
                        attempts,
                    )
                }
                Err(TransportError::Protocol(m)) => return (Err(GatewayError::Protocol(m)), attempts),
            }
        }
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        if req.messages.is_empty() {
            return Err(GatewayError::Precondition("empty message list".into()));
        }
        if !(req.temperature >= 0.0) {
            return Err(GatewayError::Precondition(format!(
                "temperature must be >= 0, got {}",
                req.temperature
            )));
        }
        let (result, attempts) = {
            let _permit = self.admission.acquire();
            self.with_retries(|| self.backend.complete(req))
        };
        self.log.push(LogEntry {
            seq: 0,
            purpose: req.purpose.to_string(),
            model: req.model.clone(),
            attempts,
            request: serde_json::to_value(&req.messages).unwrap_or_default(),
            response: result.as_ref().ok().map(|s| serde_json::Value::String(s.clone())),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }

    /// Renders, sends and returns the reply for `purpose`.
    pub fn ask(&self, purpose: Purpose, slots: &BTreeMap<String, String>) -> Result<String, GatewayError> {
        let req = self.request(purpose, slots)?;
        self.chat(&req)
    }

    pub fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
        if req.texts.is_empty() {
            return Err(GatewayError::Precondition("empty text list".into()));
        }
        let (result, attempts) = {
            let _permit = self.admission.acquire();
            self.with_retries(|| self.backend.embed(req))
        };
        let result = result.and_then(|vectors| {
            if vectors.len() != req.texts.len() {
                return Err(GatewayError::Protocol(format!(
                    "expected {} vectors, got {}",
                    req.texts.len(),
                    vectors.len()
                )));
            }
            let dim = vectors.first().map_or(0, Vec::len);
            if dim == 0 || vectors.iter().any(|v| v.len() != dim) {
                return Err(GatewayError::Protocol("embedding dimension mismatch in batch".into()));
            }
            Ok(vectors)
        });
        self.log.push(LogEntry {
            seq: 0,
            purpose: "embedding".into(),
            model: req.model.clone(),
            attempts,
            request: serde_json::to_value(&req.texts).unwrap_or_default(),
            response: result
                .as_ref()
                .ok()
                .map(|v| serde_json::json!({"count": v.len(), "dim": v.first().map_or(0, Vec::len)})),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }

    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        self.embed(&EmbeddingRequest {
            texts: texts.to_vec(),
            model: self.config.embedding_model.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: AtomicU32,
        status: u16,
    }

    impl ChatBackend for Flaky {
        fn complete(&self, _req: &ChatRequest) -> Result<String, TransportError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(TransportError::Transient {
                    status: Some(self.status),
                    message: "busy".into(),
                });
            }
            Ok("ok".into())
        }

        fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, TransportError> {
            Ok(req.texts.iter().enumerate().map(|(i, _)| vec![1.0; 2 + i]).collect())
        }
    }

    fn gateway(failures: u32) -> Gateway {
        let cfg = GatewayConfig {
            retry: RetryPolicy {
                base_delay_ms: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        Gateway::new(
            Arc::new(Flaky {
                failures: AtomicU32::new(failures),
                status: 503,
            }),
            cfg,
        )
    }

    fn req(g: &Gateway) -> ChatRequest {
        g.request_with_messages(Purpose::Rerank, vec![Message::new(Role::User, "hi")], BTreeMap::new())
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let g = gateway(2);
        assert_eq!(g.chat(&req(&g)).unwrap(), "ok");
        let log = g.log().entries();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].attempts, 3);
        assert_eq!(log[0].purpose, "rerank");
    }

    #[test]
    fn exhausts_after_max_attempts() {
        let g = gateway(10);
        match g.chat(&req(&g)) {
            Err(GatewayError::Exhausted {
                attempts, last_status, ..
            }) => {
                assert_eq!(attempts, 5);
                assert_eq!(last_status, Some(503));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_messages_rejected_before_any_io() {
        let g = gateway(0);
        let mut r = req(&g);
        r.messages.clear();
        assert!(matches!(g.chat(&r), Err(GatewayError::Precondition(_))));
        assert!(g.log().entries().is_empty());
    }

    #[test]
    fn mixed_dimensions_are_a_protocol_error() {
        let g = gateway(0);
        let err = g.embed_texts(&["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, GatewayError::Protocol(_)));
    }

    #[test]
    fn backoff_grows_geometrically() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(1), Duration::from_millis(500));
        assert_eq!(p.delay(2), Duration::from_millis(1000));
        assert_eq!(p.delay(3), Duration::from_millis(2000));
    }
}
