//! Chat-completion adapter for remote vision-language models.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{render, ObservationPart};
use super::Policy;
use crate::episode::{parse_decision, Decision, DecisionView};
use crate::error::PolicyError;

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub temperature: f64,
}

impl RemoteConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if !(self.endpoint.starts_with("http://") || self.endpoint.starts_with("https://")) {
            return Err(PolicyError::Config(format!("endpoint `{}` is not an http(s) URL", self.endpoint)));
        }
        if self.model.trim().is_empty() {
            return Err(PolicyError::Config("model name is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(PolicyError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

pub struct RemotePolicy {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl RemotePolicy {
    /// Reads the token once, here.
    pub fn new(cfg: RemoteConfig) -> Result<Self, PolicyError> {
        cfg.validate()?;
        let token = match &cfg.token_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| PolicyError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| PolicyError::Config(e.to_string()))?;
        Ok(Self { cfg, client, token })
    }

    pub fn request_body(&self, view: &DecisionView<'_>) -> Value {
        let prompt = render(view);
        let mut content = vec![json!({"type": "text", "text": prompt.text})];
        content.extend(prompt.observations.into_iter().map(|o| match o {
            ObservationPart::Image(url) => json!({"type": "image_url", "image_url": {"url": url}}),
            ObservationPart::Text(t) => json!({"type": "text", "text": t}),
        }));
        json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": content}],
        })
    }
}

/// Assistant text from a chat-completion body; anything else is passed on
/// verbatim so the parser can fall back.
fn reply_text(body: String) -> String {
    match serde_json::from_str::<Value>(&body) {
        Ok(v) => match v.pointer("/choices/0/message/content") {
            Some(Value::String(s)) => s.clone(),
            _ => body,
        },
        Err(_) => body,
    }
}

impl Policy for RemotePolicy {
    fn name(&self) -> &str {
        "remote"
    }

    fn decide(&self, view: &DecisionView<'_>) -> Result<Decision, PolicyError> {
        let mut req = self.client.post(&self.cfg.endpoint).json(&self.request_body(view));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                PolicyError::Timeout(self.cfg.timeout_ms)
            } else {
                PolicyError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(PolicyError::Transport(format!("HTTP {status}")));
        }
        let body = resp.text().map_err(|e| PolicyError::Transport(e.to_string()))?;
        tracing::debug!(phase = ?view.phase, reply = %body, "remote reply");
        Ok(parse_decision(&reply_text(body), view.phase, view.perspectives.len()))
    }
}
