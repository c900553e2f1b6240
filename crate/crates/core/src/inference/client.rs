//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "FC_FORGE_API_KEY";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    #[default]
    User,
    System,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// First retry delay; doubles per attempt.
    pub backoff_base_ms: u64,
    pub role: PromptRole,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 4,
            temperature: 0.0,
            backoff_base_ms: 500,
            role: PromptRole::User,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_in_flight == 0 {
            return Err(Error::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let ms = self.backoff_base_ms.saturating_mul(1u64 << (attempt - 1).min(16));
        Duration::from_millis(ms.min(30_000))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
}

pub fn request_body(prompt: &str, cfg: &EndpointConfig) -> Value {
    let role = match cfg.role {
        PromptRole::User => "user",
        PromptRole::System => "system",
    };
    json!({
        "model": cfg.model_name,
        "messages": [{"role": role, "content": prompt}],
        "temperature": cfg.temperature,
    })
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

pub struct EndpointClient {
    cfg: EndpointConfig,
    http: Client,
}

impl EndpointClient {
    pub fn new(cfg: EndpointConfig) -> Result<Self> {
        cfg.validate()?;
        let http = Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Transport {
                attempts: 0,
                message: format!("building HTTP client: {e}"),
            })?;
        Ok(EndpointClient { cfg, http })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// Sends one prompt, retrying timeouts, connection failures, 5xx and 429
    /// with exponential backoff. Authentication failures are not retried.
    pub fn complete(&self, prompt: &str) -> Result<Completion> {
        let body = request_body(prompt, &self.cfg);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let message = match self.attempt(&body) {
                Ok(text) => return Ok(Completion { text, attempts }),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) => message,
            };
            if attempts > self.cfg.max_retries {
                return Err(Error::Transport { attempts, message });
            }
            log::warn!("attempt {attempts} failed ({message}); retrying");
            thread::sleep(self.cfg.backoff(attempts));
        }
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Failure> {
        let mut req = self.http.post(self.cfg.url()).json(body);
        if let Some(key) = &self.cfg.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(Failure::Fatal(Error::Auth { status: status.as_u16() }));
        }
        if status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS {
            return Err(Failure::Retryable(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Failure::Fatal(Error::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            }));
        }
        let payload: Value = resp.json().map_err(|e| Failure::Retryable(format!("decoding response: {e}")))?;
        payload["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                Failure::Fatal(Error::Transport {
                    attempts: 1,
                    message: "response has no choices[0].message.content".into(),
                })
            })
    }
}

/// One-shot convenience wrapper around [`EndpointClient::complete`].
pub fn complete(prompt: &str, cfg: &EndpointConfig) -> Result<Completion> {
    EndpointClient::new(cfg.clone())?.complete(prompt)
}
