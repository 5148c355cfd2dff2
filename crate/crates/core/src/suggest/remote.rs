//! Chat-completion provider over HTTP(S).

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{build_prompt, parse_response, PromptMessages};
use super::{Provenance, ProviderError, SuggestionProvider, SuggestionSet};

pub const DEFAULT_API_KEY_ENV: &str = "SPELLER_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    /// Key from the configuration file; the environment variable wins when both are set.
    pub api_key: Option<String>,
    pub temperature: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            api_key: None,
            temperature: 0.0,
        }
    }
}

impl RemoteConfig {
    pub fn resolve_key(&self) -> Option<String> {
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty()).or_else(|| self.api_key.clone())
    }
}

#[derive(Debug)]
pub struct RemoteProvider {
    config: RemoteConfig,
    api_key: Option<String>,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Self {
        let api_key = config.resolve_key();
        Self { config, api_key }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    pub fn request_body(&self, prompt: &PromptMessages) -> Value {
        json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": prompt.messages(),
        })
    }

    /// What gets written to the session log: endpoint and body, never the key.
    pub fn redacted_request(&self, prompt: &PromptMessages) -> Value {
        json!({
            "endpoint": self.endpoint(),
            "authorization": if self.api_key.is_some() { "Bearer <redacted>" } else { "<none>" },
            "body": self.request_body(prompt),
        })
    }

    fn send(&self, prompt: &PromptMessages, timeout: Duration) -> Result<String, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .connect_timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let mut req = client.post(self.endpoint()).json(&self.request_body(prompt));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(ProviderError::Auth(status.as_u16()));
        }
        if !status.is_success() {
            return Err(ProviderError::Status(status.as_u16()));
        }
        let body: Value = resp.json().map_err(|e| ProviderError::Malformed(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }
}

impl SuggestionProvider for RemoteProvider {
    fn query(&self, partial: &str, timeout: Duration) -> Result<SuggestionSet, ProviderError> {
        let prompt = build_prompt(partial);
        let raw = self.send(&prompt, timeout)?;
        let mut set = parse_response(&raw);
        if !set.candidates.is_empty() {
            set.provenance = Provenance::Remote;
        }
        Ok(set)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Remote
    }

    fn describe_request(&self, partial: &str) -> Option<Value> {
        Some(self.redacted_request(&build_prompt(partial)))
    }
}
