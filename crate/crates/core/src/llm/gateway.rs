use std::collections::HashMap;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cache::{cache_key, CacheRecord, ResponseCache};
use super::transport::{CompletionRequest, Transport};
use super::DecodingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    /// Always call the backend; every response is appended to the cache.
    Live,
    /// Serve cache hits, call the backend on misses and append.
    Record,
    /// Serve only from the cache. Never touches the transport.
    Replay,
}

impl FromStr for GatewayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(format!("unknown gateway mode `{other}` (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GatewayError {
    #[error("replay miss: no cached response for prompt hash {hash}")]
    ReplayMiss { hash: String },
    #[error("backend failed after {attempts} attempts: {message}")]
    Backend { attempts: u32, message: String },
    #[error("no transport configured for {0} mode")]
    NoTransport(&'static str),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Exponential backoff: attempt `i` (0-based) waits `base_delay * 2^(i-1)`
/// before retrying.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

type Slot = Arc<(Mutex<Option<Result<String, GatewayError>>>, Condvar)>;

/// Completion front-end shared by all pipeline stages. Safe for concurrent
/// callers; identical in-flight prompts are coalesced.
pub struct LlmGateway {
    model_id: String,
    mode: GatewayMode,
    decoding: DecodingConfig,
    transport: Option<Box<dyn Transport>>,
    cache: ResponseCache,
    retry: RetryPolicy,
    inflight: Mutex<HashMap<String, Slot>>,
}

impl LlmGateway {
    pub fn new(
        model_id: impl Into<String>,
        mode: GatewayMode,
        cache: ResponseCache,
        transport: Option<Box<dyn Transport>>,
    ) -> Self {
        Self {
            model_id: model_id.into(),
            mode,
            decoding: DecodingConfig::default(),
            transport,
            cache,
            retry: RetryPolicy::default(),
            inflight: Mutex::new(HashMap::new()),
        }
    }

    /// Replay-only gateway over an existing cache.
    pub fn replay(model_id: impl Into<String>, cache: ResponseCache) -> Self {
        Self::new(model_id, GatewayMode::Replay, cache, None)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_decoding(mut self, decoding: DecodingConfig) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn decoding(&self) -> &DecodingConfig {
        &self.decoding
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn key_for(&self, prompt: &str) -> String {
        cache_key(prompt, &self.decoding, &self.model_id)
    }

    /// Completes `prompt` with the gateway's decoding config.
    pub fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        self.complete_with(prompt, &self.decoding.clone())
    }

    pub fn complete_with(&self, prompt: &str, config: &DecodingConfig) -> Result<String, GatewayError> {
        let key = cache_key(prompt, config, &self.model_id);
        match self.mode {
            GatewayMode::Replay => self.cache.get(&key).ok_or(GatewayError::ReplayMiss { hash: key }),
            GatewayMode::Record => {
                if let Some(hit) = self.cache.get(&key) {
                    return Ok(hit);
                }
                self.coalesced(&key, prompt, config)
            }
            GatewayMode::Live => self.coalesced(&key, prompt, config),
        }
    }

    fn coalesced(&self, key: &str, prompt: &str, config: &DecodingConfig) -> Result<String, GatewayError> {
        let (slot, leader) = {
            let mut inflight = self.inflight.lock().expect("inflight lock");
            match inflight.get(key) {
                Some(slot) => (Arc::clone(slot), false),
                None => {
                    let slot: Slot = Arc::new((Mutex::new(None), Condvar::new()));
                    inflight.insert(key.to_string(), Arc::clone(&slot));
                    (slot, true)
                }
            }
        };
        let (lock, cvar) = &*slot;
        if !leader {
            let mut guard = lock.lock().expect("slot lock");
            while guard.is_none() {
                guard = cvar.wait(guard).expect("slot wait");
            }
            return guard.clone().expect("result present");
        }
        let result = self.call_backend(key, prompt, config);
        *lock.lock().expect("slot lock") = Some(result.clone());
        cvar.notify_all();
        self.inflight.lock().expect("inflight lock").remove(key);
        result
    }

    fn call_backend(&self, key: &str, prompt: &str, config: &DecodingConfig) -> Result<String, GatewayError> {
        let transport = self.transport.as_ref().ok_or(GatewayError::NoTransport(match self.mode {
            GatewayMode::Live => "live",
            GatewayMode::Record => "record",
            GatewayMode::Replay => "replay",
        }))?;
        let request = CompletionRequest { model: &self.model_id, prompt, config };
        let attempts = self.retry.attempts.max(1);
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.retry.base_delay * 2u32.saturating_pow(attempt - 1);
                std::thread::sleep(delay);
            }
            match transport.send(&request) {
                Ok(response) => {
                    let record = CacheRecord {
                        key: key.to_string(),
                        model: self.model_id.clone(),
                        config: *config,
                        prompt: prompt.to_string(),
                        response: response.clone(),
                        timestamp: chrono::Utc::now().to_rfc3339(),
                    };
                    self.cache.insert(record).map_err(GatewayError::Cache)?;
                    return Ok(response);
                }
                Err(e) => {
                    log::warn!("completion attempt {} of {attempts} failed: {e}", attempt + 1);
                    last_error = e.to_string();
                }
            }
        }
        Err(GatewayError::Backend { attempts, message: last_error })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::TransportError;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Counting {
        calls: Arc<AtomicUsize>,
        fail_first: usize,
        delay: Duration,
    }

    impl Transport for Counting {
        fn send(&self, request: &CompletionRequest<'_>) -> Result<String, TransportError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            std::thread::sleep(self.delay);
            if n < self.fail_first {
                return Err(TransportError::Status { status: 503, body: "busy".into() });
            }
            Ok(format!("echo:{}", request.prompt))
        }
    }

    struct Exploding;

    impl Transport for Exploding {
        fn send(&self, _: &CompletionRequest<'_>) -> Result<String, TransportError> {
            panic!("replay mode must not touch the network");
        }
    }

    fn fast() -> RetryPolicy {
        RetryPolicy { attempts: 3, base_delay: Duration::ZERO }
    }

    #[test]
    fn replay_hit_and_miss() {
        let cache = ResponseCache::in_memory();
        let gw = LlmGateway::new("m", GatewayMode::Replay, cache, Some(Box::new(Exploding)));
        let key = gw.key_for("p");
        gw.cache()
            .insert(CacheRecord {
                key: key.clone(),
                model: "m".into(),
                config: DecodingConfig::default(),
                prompt: "p".into(),
                response: "stored".into(),
                timestamp: String::new(),
            })
            .unwrap();
        assert_eq!(gw.complete("p").unwrap(), "stored");
        match gw.complete("other") {
            Err(GatewayError::ReplayMiss { hash }) => assert_eq!(hash, gw.key_for("other")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn live_then_replay_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let calls = Arc::new(AtomicUsize::new(0));
        let live = LlmGateway::new(
            "m",
            GatewayMode::Live,
            ResponseCache::load(&path).unwrap(),
            Some(Box::new(Counting { calls: calls.clone(), fail_first: 0, delay: Duration::ZERO })),
        );
        let first = live.complete("hello").unwrap();
        drop(live);
        let replay = LlmGateway::new("m", GatewayMode::Replay, ResponseCache::load(&path).unwrap(), Some(Box::new(Exploding)));
        assert_eq!(replay.complete("hello").unwrap(), first);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn retries_then_succeeds() {
        let calls = Arc::new(AtomicUsize::new(0));
        let gw = LlmGateway::new(
            "m",
            GatewayMode::Live,
            ResponseCache::in_memory(),
            Some(Box::new(Counting { calls: calls.clone(), fail_first: 2, delay: Duration::ZERO })),
        )
        .with_retry(fast());
        assert_eq!(gw.complete("x").unwrap(), "echo:x");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_three_attempts() {
        let calls = Arc::new(AtomicUsize::new(0));
        let gw = LlmGateway::new(
            "m",
            GatewayMode::Live,
            ResponseCache::in_memory(),
            Some(Box::new(Counting { calls: calls.clone(), fail_first: 10, delay: Duration::ZERO })),
        )
        .with_retry(fast());
        assert!(matches!(gw.complete("x"), Err(GatewayError::Backend { attempts: 3, .. })));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn record_mode_serves_cache_hits() {
        let calls = Arc::new(AtomicUsize::new(0));
        let gw = LlmGateway::new(
            "m",
            GatewayMode::Record,
            ResponseCache::in_memory(),
            Some(Box::new(Counting { calls: calls.clone(), fail_first: 0, delay: Duration::ZERO })),
        );
        gw.complete("a").unwrap();
        gw.complete("a").unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn concurrent_duplicates_are_coalesced() {
        let calls = Arc::new(AtomicUsize::new(0));
        let gw = LlmGateway::new(
            "m",
            GatewayMode::Live,
            ResponseCache::in_memory(),
            Some(Box::new(Counting { calls: calls.clone(), fail_first: 0, delay: Duration::from_millis(100) })),
        );
        let results: Vec<String> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8).map(|_| s.spawn(|| gw.complete("same").unwrap())).collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        assert!(results.iter().all(|r| r == "echo:same"));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn mode_parses_case_insensitively() {
        assert_eq!("Replay".parse::<GatewayMode>().unwrap(), GatewayMode::Replay);
        assert!("stream".parse::<GatewayMode>().is_err());
    }
}
