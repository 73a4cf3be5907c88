use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, EmbeddingRequest, TransportError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HttpBackendConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            api_key_env: "GRAPHWALK_API_KEY".into(),
            timeout_secs: 60,
        }
    }
}

pub struct HttpBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(config: &HttpBackendConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| TransportError::Fatal {
                status: None,
                message: e.to_string(),
            })?;
        Ok(Self {
            client,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            api_key: std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty()),
        })
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, TransportError> {
        let mut req = self
            .client
            .post(format!("{}/{path}", self.base_url))
            .header("Content-Type", "application/json")
            .body(body.to_string());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                TransportError::Transient {
                    status: None,
                    message: e.to_string(),
                }
            } else {
                TransportError::Fatal {
                    status: None,
                    message: e.to_string(),
                }
            }
        })?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| TransportError::Transient {
            status: Some(status),
            message: e.to_string(),
        })?;
        if status == 429 || status >= 500 {
            return Err(TransportError::Transient {
                status: Some(status),
                message: snippet(&text),
            });
        }
        if !(200..300).contains(&status) {
            return Err(TransportError::Fatal {
                status: Some(status),
                message: snippet(&text),
            });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Protocol(format!("response is not JSON: {e}")))
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(300).collect()
}

/// Extracts `choices[0].message.content`.
pub(crate) fn parse_chat_response(body: &Value) -> Result<String, TransportError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TransportError::Protocol("missing choices[0].message.content".into()))
}

/// Extracts `data[*].embedding`, ordered by each item's `index` when present.
pub(crate) fn parse_embedding_response(body: &Value) -> Result<Vec<Vec<f64>>, TransportError> {
    let data = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| TransportError::Protocol("missing data array".into()))?;
    let mut rows = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let vector = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| TransportError::Protocol(format!("data[{pos}] has no embedding")))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| TransportError::Protocol("non-numeric embedding".into())))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((index, vector));
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

impl ChatBackend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let body = json!({
            "model": req.model,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        });
        parse_chat_response(&self.post("chat/completions", &body)?)
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>, TransportError> {
        let body = json!({ "model": req.model, "input": req.texts });
        parse_embedding_response(&self.post("embeddings", &body)?)
    }
}
