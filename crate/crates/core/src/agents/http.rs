use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AgentRequest, Backend, BackendError, RoleKind};

/// Settings for an OpenAI-compatible chat completion endpoint.
///
/// The API token itself never appears here; only the name of the
/// environment variable that holds it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatBackendConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout() -> u64 {
    60
}

fn default_retries() -> u32 {
    2
}

impl ChatBackendConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token_env: None,
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let url = url::Url::parse(&self.base_url).map_err(|e| format!("base_url: {e}"))?;
        if !matches!(url.scheme(), "http" | "https") {
            return Err(format!("base_url: unsupported scheme `{}`", url.scheme()));
        }
        if self.timeout_secs == 0 {
            return Err("timeout_secs must be positive".into());
        }
        if self.model_name.trim().is_empty() {
            return Err("model_name must not be empty".into());
        }
        Ok(())
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

fn system_prompt(role: RoleKind) -> &'static str {
    match role {
        RoleKind::Planner => "You decompose questions into ordered sub-problems.",
        RoleKind::Reasoner => {
            "You reason carefully about one sub-problem at a time and state checkable facts explicitly."
        }
        RoleKind::Verifier => "You check claims against evidence.",
        RoleKind::Retriever => "You retrieve reference facts.",
        RoleKind::UserProxy => "You relay questions to a human reviewer.",
    }
}

/// Blocking client for `POST <base_url>/chat/completions`.
///
/// Transport failures, timeouts, 429 and 5xx responses are retried up to
/// `max_retries` times with exponential backoff.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    config: ChatBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(config: ChatBackendConfig) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Unavailable)?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &ChatBackendConfig {
        &self.config
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.config.auth_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| BackendError::MissingToken(var.clone())),
        }
    }

    fn attempt(&self, body: &serde_json::Value, token: Option<&str>) -> Result<String, (bool, BackendError)> {
        let mut req = self.client.post(self.config.endpoint()).json(body);
        if let Some(token) = token {
            req = req.bearer_auth(token);
        }
        let response = req.send().map_err(|e| {
            let err = if e.is_timeout() {
                BackendError::Timeout(self.config.timeout_secs)
            } else {
                BackendError::Transport(scrub(&e.to_string(), token))
            };
            (true, err)
        })?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((
                retry,
                BackendError::Status {
                    status: status.as_u16(),
                    body: scrub(&truncate(&body, 512), token),
                },
            ));
        }
        let parsed: CompletionResponse = response
            .json()
            .map_err(|e| (false, BackendError::Malformed(scrub(&e.to_string(), token))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| (false, BackendError::Malformed("no choices in response".into())))
    }
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

fn scrub(text: &str, token: Option<&str>) -> String {
    match token {
        Some(t) if !t.is_empty() => text.replace(t, "[redacted]"),
        _ => text.to_string(),
    }
}

impl Backend for HttpChatBackend {
    fn complete(&self, request: &AgentRequest) -> Result<String, BackendError> {
        let token = self.token()?;
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": system_prompt(request.role)},
                {"role": "user", "content": request.prompt},
            ],
        });
        let mut tries = 0;
        loop {
            match self.attempt(&body, token.as_deref()) {
                Ok(text) => return Ok(text),
                Err((retryable, err)) if retryable && tries < self.config.max_retries => {
                    tries += 1;
                    tracing::warn!(
                        model = %self.config.model_name,
                        step = %request.step,
                        tries,
                        error = %err,
                        "chat completion failed, retrying"
                    );
                    std::thread::sleep(Duration::from_millis(50 << tries.min(6)));
                }
                Err((_, err)) => return Err(err),
            }
        }
    }

    fn describe(&self) -> String {
        format!("http({} @ {})", self.config.model_name, self.config.base_url)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(ChatBackendConfig::new("http://localhost:8080/v1", "m").validate().is_ok());
        assert!(ChatBackendConfig::new("not a url", "m").validate().is_err());
        assert!(ChatBackendConfig::new("ftp://host", "m").validate().is_err());
        let mut c = ChatBackendConfig::new("https://api.example.com/v1", "m");
        c.timeout_secs = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn endpoint_joins_cleanly() {
        assert_eq!(
            ChatBackendConfig::new("https://h/v1/", "m").endpoint(),
            "https://h/v1/chat/completions"
        );
    }

    #[test]
    fn scrub_removes_token() {
        assert_eq!(scrub("bad sk-123 here", Some("sk-123")), "bad [redacted] here");
    }
}
