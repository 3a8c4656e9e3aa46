//! Chat-model access: live HTTP, record-through and cassette replay.

mod cassette;
mod http;
mod limiter;

use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kb::{BundleError, ChatPart, PromptBundle};

pub use cassette::{Cassette, CassetteEntry};
pub use http::{wire_request, HttpTransport, API_KEY_ENV, DEFAULT_ENDPOINT};
pub use limiter::RateLimiter;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("network failure: {0}")]
    Network(String),
    #[error("rate limited by the endpoint")]
    RateLimited,
    #[error("endpoint returned {status}: {body}")]
    Http { status: u16, body: String },
    #[error("assistant reply is empty")]
    EmptyReply,
    #[error("no cassette entry for request fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("cassette {path}: {message}")]
    Cassette { path: PathBuf, message: String },
    #[error("environment variable {0} is not set")]
    MissingCredentials(&'static str),
    #[error("invalid backend configuration: {0}")]
    Config(String),
    #[error("malformed prompt bundle: {0}")]
    Bundle(#[from] BundleError),
}

/// Transport-level failure classification used by the retry loop.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("{0}")]
    Retryable(String),
    #[error("rate limited")]
    RateLimited,
    #[error("{0}")]
    Fatal(LlmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LlmMode {
    Live,
    Record,
    Replay,
}

impl FromStr for LlmMode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            other => Err(LlmError::Config(format!("unknown llm mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub mode: LlmMode,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: u32,
    pub cassette: Option<PathBuf>,
    /// Live-call budget; `None` disables the limiter.
    pub requests_per_minute: Option<u32>,
    /// First backoff delay; doubles on each retry.
    #[serde(with = "millis")]
    pub retry_base: Duration,
    #[serde(with = "millis")]
    pub timeout: Duration,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: LlmMode::Replay,
            endpoint: DEFAULT_ENDPOINT.to_string(),
            model: "gpt-4o".to_string(),
            temperature: 0.0,
            max_retries: 3,
            cassette: None,
            requests_per_minute: Some(60),
            retry_base: Duration::from_secs(1),
            timeout: Duration::from_secs(120),
        }
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl BackendConfig {
    pub fn check(&self) -> Result<(), LlmError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            )));
        }
        match (self.mode, &self.cassette) {
            (LlmMode::Replay, None) | (LlmMode::Record, None) => Err(LlmError::Config(
                "record and replay modes need a cassette path".into(),
            )),
            (LlmMode::Replay, Some(p)) if !p.is_file() => Err(LlmError::Cassette {
                path: p.clone(),
                message: "replay cassette does not exist".into(),
            }),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub usage: Usage,
    pub elapsed_ms: u64,
    pub fingerprint: String,
    pub from_cassette: bool,
}

/// What a transport hands back for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportReply {
    pub text: String,
    pub usage: Usage,
}

pub trait ChatTransport: Send + Sync {
    fn send(&self, bundle: &PromptBundle) -> Result<TransportReply, TransportError>;
}

/// Anything that answers a prompt bundle.
pub trait ChatModel: Send + Sync {
    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError>;
}

/// Transport backed by a closure; used for tests and for recording fixtures.
pub struct FnTransport<F> {
    f: F,
}

impl<F> FnTransport<F>
where
    F: Fn(&PromptBundle) -> Result<TransportReply, TransportError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self { f }
    }
}

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&PromptBundle) -> Result<TransportReply, TransportError> + Send + Sync,
{
    fn send(&self, bundle: &PromptBundle) -> Result<TransportReply, TransportError> {
        (self.f)(bundle)
    }
}

/// Canonical JSON of a bundle with images replaced by their digests.
pub fn canonical_bundle(bundle: &PromptBundle) -> Value {
    let messages: Vec<Value> = bundle
        .messages
        .iter()
        .map(|m| {
            let parts: Vec<Value> = m
                .parts
                .iter()
                .map(|p| match p {
                    ChatPart::Text { text } => json!({"kind": "text", "text": text}),
                    ChatPart::Image { image } => json!({
                        "kind": "image",
                        "media_type": image.media_type,
                        "sha256": image.sha256_hex(),
                    }),
                })
                .collect();
            json!({"role": m.role.as_str(), "parts": parts})
        })
        .collect();
    json!({ "messages": messages })
}

/// Stable request identity: SHA-256 over the canonical bundle JSON.
pub fn fingerprint(bundle: &PromptBundle) -> String {
    let text = serde_json::to_string(&canonical_bundle(bundle)).expect("JSON values serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Mode-dispatching gateway shared by all workers of a run.
pub struct Gateway {
    mode: LlmMode,
    transport: Option<Box<dyn ChatTransport>>,
    cassette: Option<Cassette>,
    max_retries: u32,
    retry_base: Duration,
    limiter: Option<RateLimiter>,
    transport_calls: AtomicUsize,
}

impl Gateway {
    /// Builds a gateway from configuration, opening the HTTP transport when needed.
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LlmError> {
        cfg.check()?;
        let transport: Option<Box<dyn ChatTransport>> = match cfg.mode {
            LlmMode::Replay => None,
            LlmMode::Live | LlmMode::Record => Some(Box::new(HttpTransport::from_env(cfg)?)),
        };
        Self::with_transport(cfg, transport)
    }

    /// Like `from_config` but with a caller-supplied transport.
    pub fn with_transport(
        cfg: &BackendConfig,
        transport: Option<Box<dyn ChatTransport>>,
    ) -> Result<Self, LlmError> {
        if cfg.mode != LlmMode::Replay && transport.is_none() {
            return Err(LlmError::Config("live and record modes need a transport".into()));
        }
        let cassette = match (&cfg.cassette, cfg.mode) {
            (_, LlmMode::Live) => None,
            (Some(p), LlmMode::Replay) => Some(Cassette::load(p)?),
            (Some(p), LlmMode::Record) => Some(Cassette::open_or_create(p)?),
            (None, _) => {
                return Err(LlmError::Config("record and replay modes need a cassette path".into()))
            }
        };
        Ok(Self {
            mode: cfg.mode,
            transport,
            cassette,
            max_retries: cfg.max_retries,
            retry_base: cfg.retry_base,
            limiter: cfg.requests_per_minute.map(RateLimiter::per_minute),
            transport_calls: AtomicUsize::new(0),
        })
    }

    pub fn mode(&self) -> LlmMode {
        self.mode
    }

    /// Requests that reached the transport (including retries).
    pub fn transport_calls(&self) -> usize {
        self.transport_calls.load(Ordering::Relaxed)
    }

    pub fn cassette(&self) -> Option<&Cassette> {
        self.cassette.as_ref()
    }

    fn call_transport(&self, bundle: &PromptBundle, fp: &str) -> Result<LlmResponse, LlmError> {
        let transport = self.transport.as_ref().expect("checked at construction");
        let mut attempt = 0u32;
        loop {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            self.transport_calls.fetch_add(1, Ordering::Relaxed);
            let started = Instant::now();
            let err = match transport.send(bundle) {
                Ok(reply) if reply.text.trim().is_empty() => return Err(LlmError::EmptyReply),
                Ok(reply) => {
                    return Ok(LlmResponse {
                        text: reply.text,
                        usage: reply.usage,
                        elapsed_ms: started.elapsed().as_millis() as u64,
                        fingerprint: fp.to_string(),
                        from_cassette: false,
                    })
                }
                Err(TransportError::Fatal(e)) => return Err(e),
                Err(TransportError::RateLimited) => LlmError::RateLimited,
                Err(TransportError::Retryable(m)) => LlmError::Network(m),
            };
            if attempt >= self.max_retries {
                return Err(err);
            }
            log::warn!("request {fp:.12} failed ({err}); retry {} of {}", attempt + 1, self.max_retries);
            thread::sleep(self.retry_base * 2u32.pow(attempt));
            attempt += 1;
        }
    }
}

impl ChatModel for Gateway {
    fn complete(&self, bundle: &PromptBundle) -> Result<LlmResponse, LlmError> {
        bundle.check()?;
        let fp = fingerprint(bundle);
        if let Some(entry) = self.cassette.as_ref().and_then(|c| c.get(&fp)) {
            return Ok(LlmResponse {
                text: entry.response,
                usage: entry.usage,
                elapsed_ms: entry.latency_ms,
                fingerprint: fp,
                from_cassette: true,
            });
        }
        match self.mode {
            LlmMode::Replay => Err(LlmError::CassetteMiss { fingerprint: fp }),
            LlmMode::Live => self.call_transport(bundle, &fp),
            LlmMode::Record => {
                let resp = self.call_transport(bundle, &fp)?;
                let cassette = self.cassette.as_ref().expect("record mode has a cassette");
                cassette.append(CassetteEntry {
                    fingerprint: fp,
                    response: resp.text.clone(),
                    latency_ms: resp.elapsed_ms,
                    usage: resp.usage,
                })?;
                Ok(resp)
            }
        }
    }
}
