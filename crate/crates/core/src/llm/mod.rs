//! Completion contract over remote APIs, a scripted mock, and a
//! fingerprint-keyed replay cache.

mod cache;
mod http;
mod scripted;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, ReplayCache};
pub use http::{HttpBackend, API_KEY_ENV, ENDPOINT_ENV};
pub use scripted::{ScriptFile, ScriptRule, ScriptedBackend};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("strict replay: no cached completion for fingerprint {fingerprint}")]
    CacheMiss { fingerprint: String },
    #[error("cache mode {0} needs a cache directory")]
    NoCache(CacheMode),
    #[error("scripted backend has no response for fingerprint {fingerprint}")]
    NoScriptedResponse { fingerprint: String },
    #[error("remote backend failed ({}): {message}", if *retryable { "retryable" } else { "fatal" })]
    Remote { retryable: bool, message: String },
    #[error("completion hit the {max_tokens}-token limit")]
    TokenLimitExceeded { max_tokens: u32 },
    #[error("backend not configured: {0}")]
    NotConfigured(String),
    #[error("replay cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    pub model: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            model: "scripted".into(),
            seed: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::InvalidConfig(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidConfig("max_tokens must be positive".into()));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::InvalidConfig("model name is empty".into()));
        }
        Ok(())
    }
}

/// Content hash of a prompt and the config fields that shape its output.
///
/// Line endings are canonicalized to `\n`; nothing else is normalized. The
/// seed is excluded so that replay keys survive backends that ignore it.
pub fn fingerprint(prompt: &str, config: &GenerationConfig) -> String {
    let canonical = prompt.replace("\r\n", "\n").replace('\r', "\n");
    let mut h = Sha256::new();
    for part in [
        "dallm-fp-v1",
        config.model.as_str(),
        &format!("{:?}", config.temperature),
        &config.max_tokens.to_string(),
        &canonical,
    ] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Live,
    Replayed,
    Mocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub backend: String,
    pub fingerprint: String,
    pub status: CacheStatus,
}

pub trait CompletionBackend: Send + Sync {
    /// Stable description, e.g. `scripted:golden` or `http:gpt-4`.
    fn descriptor(&self) -> String;

    /// `Mocked` for scripted backends, `Live` for real ones.
    fn status(&self) -> CacheStatus;

    fn generate(&self, prompt: &str, config: &GenerationConfig, fingerprint: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// Always call the backend; the cache is neither read nor written.
    Live,
    /// Replay hits; call the backend on a miss and persist the result.
    Record,
    /// Replay hits; a miss is an error.
    StrictReplay,
}

impl fmt::Display for CacheMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheMode::Live => "live",
            CacheMode::Record => "record",
            CacheMode::StrictReplay => "strict-replay",
        })
    }
}

impl FromStr for CacheMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "live" => Ok(CacheMode::Live),
            "record" => Ok(CacheMode::Record),
            "strict-replay" | "replay" => Ok(CacheMode::StrictReplay),
            other => Err(format!("unknown cache mode `{other}`")),
        }
    }
}

/// Counting semaphore bounding in-flight backend calls.
#[derive(Debug)]
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

/// Backend plus cache policy; safe to share across worker threads.
pub struct LlmClient {
    backend: Arc<dyn CompletionBackend>,
    cache: Option<ReplayCache>,
    mode: CacheMode,
    limiter: Limiter,
}

impl LlmClient {
    pub fn new(
        backend: Arc<dyn CompletionBackend>,
        cache: Option<ReplayCache>,
        mode: CacheMode,
        max_concurrent: usize,
    ) -> Result<Self, LlmError> {
        if mode != CacheMode::Live && cache.is_none() {
            return Err(LlmError::NoCache(mode));
        }
        Ok(LlmClient {
            backend,
            cache,
            mode,
            limiter: Limiter::new(max_concurrent),
        })
    }

    /// Uncached client, mostly for tests and the scripted mock.
    pub fn direct(backend: Arc<dyn CompletionBackend>) -> Self {
        LlmClient {
            backend,
            cache: None,
            mode: CacheMode::Live,
            limiter: Limiter::new(usize::MAX),
        }
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn backend_descriptor(&self) -> String {
        self.backend.descriptor()
    }

    pub fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<Completion, LlmError> {
        if prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        config.validate()?;
        let fp = fingerprint(prompt, config);
        if self.mode != CacheMode::Live {
            let cache = self.cache.as_ref().expect("checked in constructor");
            if let Some(entry) = cache.get(&fp)? {
                return Ok(Completion {
                    text: entry.text,
                    backend: entry.backend,
                    fingerprint: fp,
                    status: CacheStatus::Replayed,
                });
            }
            if self.mode == CacheMode::StrictReplay {
                return Err(LlmError::CacheMiss { fingerprint: fp });
            }
        }
        let text = {
            let _permit = self.limiter.acquire();
            self.backend.generate(prompt, config, &fp)?
        };
        let backend = self.backend.descriptor();
        if self.mode == CacheMode::Record {
            let cache = self.cache.as_ref().expect("checked in constructor");
            cache.put(&CacheEntry {
                fingerprint: fp.clone(),
                backend: backend.clone(),
                model: config.model.clone(),
                temperature: config.temperature,
                max_tokens: config.max_tokens,
                prompt: prompt.to_owned(),
                text: text.clone(),
            })?;
        }
        Ok(Completion {
            text,
            backend,
            fingerprint: fp,
            status: self.backend.status(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn fingerprint_rules() {
        let c = GenerationConfig::default();
        assert_eq!(fingerprint("abc", &c), fingerprint("abc", &c));
        let hotter = GenerationConfig {
            temperature: 0.2,
            ..c.clone()
        };
        assert_ne!(fingerprint("abc", &c), fingerprint("abc", &hotter));
        assert_eq!(fingerprint("a\r\nb\rc", &c), fingerprint("a\nb\nc", &c));
        assert_ne!(fingerprint("a b", &c), fingerprint("a  b", &c));
        assert_ne!(fingerprint("a\n", &c), fingerprint("a", &c));
        let other_model = GenerationConfig {
            model: "gpt-4".into(),
            ..c.clone()
        };
        assert_ne!(fingerprint("abc", &c), fingerprint("abc", &other_model));
        let seeded = GenerationConfig {
            seed: Some(9),
            ..c.clone()
        };
        assert_eq!(fingerprint("abc", &c), fingerprint("abc", &seeded));
        assert_eq!(fingerprint("x", &c).len(), 64);
    }

    #[test]
    fn default_temperature() {
        assert_eq!(GenerationConfig::default().temperature, 0.1);
        let bad = GenerationConfig {
            temperature: -0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scripted_by_fingerprint_is_mocked() {
        let c = GenerationConfig::default();
        let fp = fingerprint("describe the patient", &c);
        let backend = ScriptedBackend::new("t").with_fingerprint(&fp, "dyspnea: yes");
        let client = LlmClient::direct(Arc::new(backend));
        let out = client.complete("describe the patient", &c).unwrap();
        assert_eq!(out.text, "dyspnea: yes");
        assert_eq!(out.status, CacheStatus::Mocked);
        assert!(matches!(
            client.complete("something else", &c),
            Err(LlmError::NoScriptedResponse { .. })
        ));
        assert!(matches!(client.complete("  ", &c), Err(LlmError::EmptyPrompt)));
    }

    #[test]
    fn record_then_strict_replay() {
        let dir = tempfile::tempdir().unwrap();
        let c = GenerationConfig::default();
        let backend: Arc<dyn CompletionBackend> = Arc::new(ScriptedBackend::new("t").with_default("answer"));
        let recorder = LlmClient::new(
            backend.clone(),
            Some(ReplayCache::open(dir.path()).unwrap()),
            CacheMode::Record,
            2,
        )
        .unwrap();
        let first = recorder.complete("q", &c).unwrap();
        assert_eq!(first.status, CacheStatus::Mocked);
        let second = recorder.complete("q", &c).unwrap();
        assert_eq!(second.status, CacheStatus::Replayed);

        let empty: Arc<dyn CompletionBackend> = Arc::new(ScriptedBackend::new("none"));
        let replay = LlmClient::new(
            empty,
            Some(ReplayCache::open(dir.path()).unwrap()),
            CacheMode::StrictReplay,
            2,
        )
        .unwrap();
        let a = replay.complete("q", &c).unwrap();
        let b = replay.complete("q", &c).unwrap();
        assert_eq!(a.text, "answer");
        assert_eq!(a, b);
        assert_eq!(a.status, CacheStatus::Replayed);
        match replay.complete("unseen", &c) {
            Err(LlmError::CacheMiss { fingerprint: f }) => assert_eq!(f, fingerprint("unseen", &c)),
            other => panic!("expected cache miss, got {other:?}"),
        }
        assert!(matches!(
            LlmClient::new(backend, None, CacheMode::StrictReplay, 1),
            Err(LlmError::NoCache(_))
        ));
    }

    struct Slow {
        now: AtomicUsize,
        peak: AtomicUsize,
    }

    impl CompletionBackend for Slow {
        fn descriptor(&self) -> String {
            "slow".into()
        }
        fn status(&self) -> CacheStatus {
            CacheStatus::Mocked
        }
        fn generate(&self, _: &str, _: &GenerationConfig, _: &str) -> Result<String, LlmError> {
            let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(n, Ordering::SeqCst);
            std::thread::sleep(std::time::Duration::from_millis(5));
            self.now.fetch_sub(1, Ordering::SeqCst);
            Ok("ok".into())
        }
    }

    #[test]
    fn in_flight_bound_holds() {
        let slow = Arc::new(Slow {
            now: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let dir = tempfile::tempdir().unwrap();
        let client = LlmClient::new(
            slow.clone(),
            Some(ReplayCache::open(dir.path()).unwrap()),
            CacheMode::Live,
            2,
        )
        .unwrap();
        std::thread::scope(|s| {
            for i in 0..8 {
                let client = &client;
                s.spawn(move || client.complete(&format!("p{i}"), &GenerationConfig::default()).unwrap());
            }
        });
        assert!(slow.peak.load(Ordering::SeqCst) <= 2);
    }
}
