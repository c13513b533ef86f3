//! Chat-completion HTTP client with retries, an in-flight cap and token-bucket pacing.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{CallLog, CallRecord, CompletionProvider, CompletionRequest, CompletionResponse, ProviderError};
use crate::config::ProviderSettings;

pub const API_KEY_ENV: &str = "ELOREVIEW_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout(String),
    Connect(String),
    Status { code: u16, body: String },
    Decode(String),
}

impl TransportError {
    fn is_transient(&self) -> bool {
        match self {
            TransportError::Timeout(_) | TransportError::Connect(_) => true,
            TransportError::Status { code, .. } => *code == 408 || *code == 429 || *code >= 500,
            TransportError::Decode(_) => false,
        }
    }
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Timeout(m) => write!(f, "timeout: {m}"),
            TransportError::Connect(m) => write!(f, "connection error: {m}"),
            TransportError::Status { code, body } => write!(f, "HTTP {code}: {body}"),
            TransportError::Decode(m) => write!(f, "decode error: {m}"),
        }
    }
}

/// Posts a JSON body with bearer auth and returns the decoded JSON reply.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<Value, TransportError> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| match e {
                ureq::Error::Timeout(t) => TransportError::Timeout(t.to_string()),
                other => TransportError::Connect(other.to_string()),
            })?;
        let code = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Connect(e.to_string()))?;
        if !(200..300).contains(&code) {
            return Err(TransportError::Status { code, body: text.chars().take(500).collect() });
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

/// Caps concurrent requests and paces request starts.
struct Limiter {
    in_flight: Mutex<usize>,
    freed: Condvar,
    max_in_flight: usize,
    bucket: Mutex<Bucket>,
}

struct Bucket {
    tokens: f64,
    capacity: f64,
    rate: f64,
    last: Instant,
}

impl Limiter {
    fn new(max_in_flight: usize, rate: f64) -> Self {
        let capacity = rate.ceil().max(1.0);
        Self {
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
            bucket: Mutex::new(Bucket { tokens: capacity, capacity, rate, last: Instant::now() }),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.max_in_flight {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        drop(n);
        loop {
            let wait = {
                let mut b = self.bucket.lock().expect("limiter poisoned");
                let now = Instant::now();
                b.tokens = (b.tokens + now.duration_since(b.last).as_secs_f64() * b.rate).min(b.capacity);
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    break;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / b.rate)
            };
            std::thread::sleep(wait);
        }
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().expect("limiter poisoned") -= 1;
        self.0.freed.notify_one();
    }
}

pub struct LiveProvider<T: Transport = UreqTransport> {
    id: String,
    settings: ProviderSettings,
    api_key: String,
    transport: T,
    limiter: Limiter,
}

impl LiveProvider<UreqTransport> {
    /// Reads the API key from `ELOREVIEW_API_KEY`.
    pub fn from_env(settings: ProviderSettings) -> Result<Self, ProviderError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(ProviderError::MissingApiKey(API_KEY_ENV))?;
        let transport = UreqTransport::new(Duration::from_secs(settings.timeout_secs.max(1)));
        Ok(Self::with_transport(settings, key, transport))
    }
}

impl<T: Transport> LiveProvider<T> {
    pub fn with_transport(settings: ProviderSettings, api_key: String, transport: T) -> Self {
        let limiter = Limiter::new(settings.max_in_flight, settings.requests_per_second);
        Self { id: format!("live:{}", settings.model), settings, api_key, transport, limiter }
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
        messages.extend(request.user_messages.iter().map(|m| json!({"role": "user", "content": m})));
        json!({
            "model": self.settings.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        })
    }
}

fn extract(reply: &Value) -> Result<(String, u64, u64), String> {
    let text = reply
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or("missing choices[0].message.content")?;
    let usage = |k: &str| reply.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
    Ok((text.to_string(), usage("prompt_tokens"), usage("completion_tokens")))
}

impl<T: Transport> CompletionProvider for LiveProvider<T> {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest, log: &CallLog) -> Result<CompletionResponse, ProviderError> {
        let body = self.body(request);
        let attempts = self.settings.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let backoff = self.settings.backoff_ms.saturating_mul(1 << (attempt - 2).min(16));
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let mut record = CallRecord::new(request, attempt, &self.id);
            let started = Instant::now();
            let result = {
                let _permit = self.limiter.acquire();
                self.transport.post_json(&self.settings.endpoint, &self.api_key, &body)
            };
            let latency = started.elapsed();
            record.latency_ms = latency.as_millis() as u64;
            match result {
                Ok(reply) => match extract(&reply) {
                    Ok((text, prompt_tokens, completion_tokens)) => {
                        record.response = Some(text.clone());
                        record.prompt_tokens = prompt_tokens;
                        record.completion_tokens = completion_tokens;
                        log.push(record);
                        return Ok(CompletionResponse {
                            text,
                            latency,
                            prompt_tokens,
                            completion_tokens,
                            provider_id: self.id.clone(),
                        });
                    }
                    Err(message) => {
                        record.error = Some(message.clone());
                        log.push(record);
                        return Err(ProviderError::BadResponse { tag: request.tag.clone(), message });
                    }
                },
                Err(err) => {
                    record.error = Some(err.to_string());
                    log.push(record);
                    match err {
                        TransportError::Status { code: code @ (401 | 403), .. } => {
                            return Err(ProviderError::Auth { tag: request.tag.clone(), status: code });
                        }
                        e if e.is_transient() => last_error = e.to_string(),
                        TransportError::Status { code, body } => {
                            return Err(ProviderError::Rejected { tag: request.tag.clone(), status: code, body });
                        }
                        other => {
                            return Err(ProviderError::BadResponse {
                                tag: request.tag.clone(),
                                message: other.to_string(),
                            });
                        }
                    }
                }
            }
        }
        Err(ProviderError::RetriesExhausted { tag: request.tag.clone(), attempts, last_error })
    }
}
