//! Prompt assembly and the completion gateway.
//!
//! The gateway fronts a chat-completions style HTTP backend with a
//! content-addressed response cache persisted as JSONL. In replay mode the
//! cache is the only source of responses and no transport is ever touched.

mod cache;
mod gateway;
mod prompt;
mod transport;

pub use cache::{cache_key, CacheRecord, ResponseCache};
pub use gateway::{GatewayError, GatewayMode, LlmGateway, RetryPolicy};
pub use prompt::{assemble_prompt, AlignedTask, Demonstration, PromptBundle, PromptStrategy, Stage};
pub use transport::{CompletionRequest, HttpTransport, Transport, TransportError, API_KEY_ENV};

use serde::{Deserialize, Serialize};

/// Decoding constants sent with every completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self { temperature: 0.0, top_p: 1.0, max_tokens: 800 }
    }
}
