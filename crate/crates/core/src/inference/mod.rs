//! Model predictions over a chat-completions endpoint.

mod extract;
mod store;
pub mod stub;

use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::prompt::PromptEnvelope;

pub use extract::extract_sql;
pub use store::{finalize_predictions, read_predictions, PredictionWriter, StoreError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelEndpoint {
    /// Base URL up to and including the API version, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model_name: String,
    /// Read from the environment at run time, never from config files.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_response_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub concurrency_limit: usize,
    /// First retry delay; doubles on each further retry.
    pub backoff_ms: u64,
    /// When false, `latency_ms` is written as 0 so prediction files are
    /// reproducible byte for byte.
    pub record_latency: bool,
}

impl Default for ModelEndpoint {
    fn default() -> Self {
        ModelEndpoint {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "default".into(),
            api_key: None,
            temperature: 0.0,
            max_response_tokens: 512,
            timeout_ms: 60_000,
            max_retries: 3,
            concurrency_limit: 4,
            backoff_ms: 500,
            record_latency: true,
        }
    }
}

impl ModelEndpoint {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.concurrency_limit == 0 {
            return Err("concurrency_limit must be at least 1".into());
        }
        if self.base_url.trim().is_empty() {
            return Err("base_url is empty".into());
        }
        Ok(())
    }

    fn completions_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Transient,
    Permanent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionFailure {
    pub kind: FailureKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_index: usize,
    pub raw_text: String,
    pub extracted_sql: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<PredictionFailure>,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

pub struct ChatClient {
    http: reqwest::Client,
    endpoint: ModelEndpoint,
}

impl ChatClient {
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, reqwest::Error> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(endpoint.timeout_ms))
            .build()?;
        Ok(ChatClient { http, endpoint })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    /// Sends one prompt, retrying transient failures with exponential backoff.
    pub async fn predict(&self, env: &PromptEnvelope) -> Prediction {
        let ep = &self.endpoint;
        let started = Instant::now();
        let mut attempts = 0;
        let outcome = loop {
            attempts += 1;
            match self.send_once(&env.text).await {
                Ok(text) => break Ok(text),
                Err(f) if f.kind == FailureKind::Transient && attempts <= ep.max_retries => {
                    let delay = ep.backoff_ms.saturating_mul(1 << (attempts - 1).min(16)).min(30_000);
                    tracing::debug!(
                        example = env.example_index,
                        attempt = attempts,
                        delay_ms = delay,
                        "transient failure: {}",
                        f.message
                    );
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                }
                Err(f) => break Err(f),
            }
        };
        let latency_ms = if ep.record_latency {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        match outcome {
            Ok(raw) => {
                let extracted_sql = extract_sql(&raw);
                let error = extracted_sql.is_empty().then(|| PredictionFailure {
                    kind: FailureKind::Permanent,
                    status: None,
                    message: "empty generation".into(),
                });
                Prediction {
                    example_index: env.example_index,
                    raw_text: raw,
                    extracted_sql,
                    latency_ms,
                    attempt_count: attempts,
                    error,
                }
            }
            Err(f) => Prediction {
                example_index: env.example_index,
                raw_text: String::new(),
                extracted_sql: String::new(),
                latency_ms,
                attempt_count: attempts,
                error: Some(f),
            },
        }
    }

    async fn send_once(&self, prompt: &str) -> Result<String, PredictionFailure> {
        let ep = &self.endpoint;
        let body = ChatRequest {
            model: &ep.model_name,
            messages: [ChatMessage {
                role: "user",
                content: prompt,
            }],
            temperature: ep.temperature,
            max_tokens: ep.max_response_tokens,
        };
        let mut req = self.http.post(ep.completions_url()).json(&body);
        if let Some(key) = &ep.api_key {
            req = req.bearer_auth(key);
        }
        let transient = |message: String| PredictionFailure {
            kind: FailureKind::Transient,
            status: None,
            message,
        };
        let resp = req.send().await.map_err(|e| transient(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let kind = if status.as_u16() == 429 || status.is_server_error() {
                FailureKind::Transient
            } else {
                FailureKind::Permanent
            };
            let text = resp.text().await.unwrap_or_default();
            return Err(PredictionFailure {
                kind,
                status: Some(status.as_u16()),
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            });
        }
        let parsed: ChatResponse = resp.json().await.map_err(|e| PredictionFailure {
            kind: FailureKind::Permanent,
            status: Some(status.as_u16()),
            message: format!("malformed response: {e}"),
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content.unwrap_or_default())
            .ok_or_else(|| PredictionFailure {
                kind: FailureKind::Permanent,
                status: Some(status.as_u16()),
                message: "response has no choices".into(),
            })
    }
}

/// Predicts every envelope with at most `concurrency_limit` requests in
/// flight. `on_done` sees each prediction as it completes (completion order);
/// the returned list follows envelope order.
pub async fn predict_batch_with<F>(envelopes: &[PromptEnvelope], client: &ChatClient, mut on_done: F) -> Vec<Prediction>
where
    F: FnMut(&Prediction),
{
    let limit = client.endpoint.concurrency_limit.max(1);
    let mut slots: Vec<Option<Prediction>> = vec![None; envelopes.len()];
    let mut done = stream::iter(envelopes.iter().enumerate())
        .map(|(i, env)| async move { (i, client.predict(env).await) })
        .buffer_unordered(limit);
    while let Some((i, p)) = done.next().await {
        on_done(&p);
        slots[i] = Some(p);
    }
    slots.into_iter().map(|p| p.expect("every envelope completes")).collect()
}

pub async fn predict_batch(envelopes: &[PromptEnvelope], endpoint: &ModelEndpoint) -> Result<Vec<Prediction>, reqwest::Error> {
    let client = ChatClient::new(endpoint.clone())?;
    Ok(predict_batch_with(envelopes, &client, |_| {}).await)
}
