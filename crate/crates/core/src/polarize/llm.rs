//! Chat-completion backend for the rewrite operator.

use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::{PolarizeError, PolarizerBackend};
use crate::cogspace::{DimensionSpec, Pole};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "COGFLOW_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmConfig {
    /// Full URL of the chat-completion endpoint.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://localhost:8080/v1/chat/completions".into(),
            model: "default".into(),
            timeout_secs: 30,
            retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: String,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

pub fn instruction(dimension: &DimensionSpec, pole: Pole) -> String {
    let verb = match pole {
        Pole::High => "enhance",
        Pole::Low => "attenuate",
    };
    let desc = dimension.pole_text(pole);
    let desc = if desc.is_empty() { dimension.name.as_str() } else { desc };
    format!(
        "Rewrite the prompt to {verb} the {} ({desc}) while preserving the core subject. \
         Reply with the rewritten prompt only.",
        dimension.name
    )
}

pub struct LlmBackend {
    config: LlmConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
    id: String,
}

impl LlmBackend {
    pub fn new(config: LlmConfig, api_key: Option<String>) -> Result<Self, PolarizeError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| PolarizeError::Backend {
                retriable: false,
                message: format!("building HTTP client: {e}"),
            })?;
        let id = format!("llm:{}@{}", config.model, config.endpoint);
        Ok(Self {
            config,
            api_key,
            client,
            id,
        })
    }

    /// Reads the bearer token from `COGFLOW_LLM_KEY` if set.
    pub fn from_env(config: LlmConfig) -> Result<Self, PolarizeError> {
        Self::new(config, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()))
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Result<String, (bool, String)> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, format!("request failed: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (true, format!("reading response body: {e}")))?;
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((retry, format!("HTTP {status}: {}", truncate(&text, 300))));
        }
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| (false, format!("malformed response ({e}): {}", truncate(&text, 300))))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .map(|c| c.trim().to_owned())
            .filter(|c| !c.is_empty())
            .ok_or_else(|| (false, format!("response has no content: {}", truncate(&text, 300))))?;
        Ok(content)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl PolarizerBackend for LlmBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn polarize(
        &self,
        prompt: &str,
        dimension: &DimensionSpec,
        pole: Pole,
    ) -> Result<String, PolarizeError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: instruction(dimension, pole),
                },
                ChatMessage {
                    role: "user",
                    content: prompt.to_owned(),
                },
            ],
            temperature: 0.0,
        };
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(out) => {
                    debug!("polarized {:?} along {} {:?}", prompt, dimension.name, pole);
                    return Ok(out);
                }
                Err((retry, message)) if retry && attempt < self.config.retries => {
                    warn!("LLM attempt {} failed: {message}; retrying", attempt + 1);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err((_, message)) => {
                    return Err(PolarizeError::Backend {
                        retriable: true,
                        message: format!("{} after {} attempt(s): {message}", self.id, attempt + 1),
                    })
                }
            }
        }
    }
}
