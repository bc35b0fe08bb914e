use std::time::Duration;

use serde_json::json;

use super::DecodingConfig;

/// Environment variable holding the backend API key.
pub const API_KEY_ENV: &str = "TASQL_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub config: &'a DecodingConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("backend returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

/// Sends one completion request and returns the response text.
pub trait Transport: Send + Sync {
    fn send(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError>;
}

/// Chat-completions style HTTP adapter. The assembled prompt travels as a
/// single user message.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        Ok(Self { client, url: url.into(), api_key })
    }

    /// Reads the API key from [`API_KEY_ENV`].
    pub fn from_env(url: impl Into<String>, timeout: Duration) -> Result<Self, TransportError> {
        Self::new(url, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()), timeout)
    }
}

pub(crate) fn request_body(request: &CompletionRequest<'_>) -> serde_json::Value {
    json!({
        "model": request.model,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.config.temperature,
        "top_p": request.config.top_p,
        "max_tokens": request.config.max_tokens,
    })
}

pub(crate) fn parse_response(body: &serde_json::Value) -> Result<String, TransportError> {
    body.pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .or_else(|| body.pointer("/choices/0/text").and_then(|v| v.as_str()))
        .map(str::to_string)
        .ok_or_else(|| TransportError::Malformed("missing choices[0].message.content".into()))
}

impl Transport for HttpTransport {
    fn send(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError> {
        let mut builder = self.client.post(&self.url).json(&request_body(request));
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().map_err(|e| TransportError::Request(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| TransportError::Request(e.to_string()))?;
        if !status.is_success() {
            return Err(TransportError::Status { status: status.as_u16(), body: text });
        }
        let body: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        parse_response(&body)
    }
}
