//! The single boundary through which agents obtain model text.

use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

mod live;
mod scripted;
pub mod simulated;

pub use live::{LiveProvider, Transport, TransportError, UreqTransport, API_KEY_ENV};
pub use scripted::{Responder, ScriptedProvider};
pub use simulated::PersonaSimulator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub user_messages: Vec<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Call-site label, unique within a run, e.g. `round3/syn-004/rev-b/initial`.
    pub tag: String,
}

impl CompletionRequest {
    /// All prompt text the provider sees, joined in order.
    pub fn rendered(&self) -> String {
        let mut s = self.system_prompt.clone();
        for m in &self.user_messages {
            s.push_str("\n\n");
            s.push_str(m);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    pub text: String,
    pub latency: Duration,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub provider_id: String,
}

/// One attempt against a provider, successful or not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tag: String,
    pub attempt: u32,
    pub provider_id: String,
    pub system_prompt: String,
    pub user_messages: Vec<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub latency_ms: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CallRecord {
    pub fn new(request: &CompletionRequest, attempt: u32, provider_id: &str) -> Self {
        Self {
            tag: request.tag.clone(),
            attempt,
            provider_id: provider_id.to_string(),
            system_prompt: request.system_prompt.clone(),
            user_messages: request.user_messages.clone(),
            temperature: request.temperature,
            max_output_tokens: request.max_output_tokens,
            response: None,
            error: None,
            latency_ms: 0,
            prompt_tokens: 0,
            completion_tokens: 0,
        }
    }

    pub fn rendered_prompt(&self) -> String {
        let mut s = self.system_prompt.clone();
        for m in &self.user_messages {
            s.push_str("\n\n");
            s.push_str(m);
        }
        s
    }
}

/// Append-only, internally synchronized sequence of call records.
#[derive(Debug, Default)]
pub struct CallLog {
    entries: Mutex<Vec<CallRecord>>,
}

impl CallLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, record: CallRecord) {
        self.entries.lock().expect("call log poisoned").push(record);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("call log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<CallRecord> {
        self.entries.lock().expect("call log poisoned").clone()
    }

    pub fn into_records(self) -> Vec<CallRecord> {
        self.entries.into_inner().expect("call log poisoned")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("no script entry for tag `{tag}`")]
    NoScriptEntry { tag: String },
    #[error("call `{tag}` failed after {attempts} attempts: {last_error}")]
    RetriesExhausted { tag: String, attempts: u32, last_error: String },
    #[error("call `{tag}` rejected: authentication failed (HTTP {status})")]
    Auth { tag: String, status: u16 },
    #[error("call `{tag}` rejected with HTTP {status}: {body}")]
    Rejected { tag: String, status: u16, body: String },
    #[error("call `{tag}` returned an unusable response: {message}")]
    BadResponse { tag: String, message: String },
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("transcript call log is incomplete: no successful call for tag `{tag}`")]
    IncompleteLog { tag: String },
}

impl ProviderError {
    pub fn tag(&self) -> Option<&str> {
        match self {
            ProviderError::NoScriptEntry { tag }
            | ProviderError::RetriesExhausted { tag, .. }
            | ProviderError::Auth { tag, .. }
            | ProviderError::Rejected { tag, .. }
            | ProviderError::BadResponse { tag, .. }
            | ProviderError::IncompleteLog { tag } => Some(tag),
            ProviderError::MissingApiKey(_) => None,
        }
    }
}

pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> &str;

    /// Returns model text for `request`, appending one record per attempt to `log`.
    fn complete(&self, request: &CompletionRequest, log: &CallLog) -> Result<CompletionResponse, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Box<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest, log: &CallLog) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request, log)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for std::sync::Arc<P> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, request: &CompletionRequest, log: &CallLog) -> Result<CompletionResponse, ProviderError> {
        (**self).complete(request, log)
    }
}

pub(crate) fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}
