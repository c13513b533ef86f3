use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use super::{word_count, CallLog, CallRecord, CompletionProvider, CompletionRequest, CompletionResponse, ProviderError};

/// Computes a response for requests missing from the script table.
pub trait Responder: Send + Sync {
    fn respond(&self, request: &CompletionRequest) -> Option<String>;
}

impl<F> Responder for F
where
    F: Fn(&CompletionRequest) -> Option<String> + Send + Sync,
{
    fn respond(&self, request: &CompletionRequest) -> Option<String> {
        self(request)
    }
}

/// Deterministic provider answering each tag from a fixed table, with an optional fallback.
pub struct ScriptedProvider {
    id: String,
    table: BTreeMap<String, String>,
    fallback: Option<Box<dyn Responder>>,
}

impl ScriptedProvider {
    pub fn new(table: BTreeMap<String, String>) -> Self {
        Self { id: "scripted".into(), table, fallback: None }
    }

    pub fn with_responder(responder: impl Responder + 'static) -> Self {
        Self { id: "scripted".into(), table: BTreeMap::new(), fallback: Some(Box::new(responder)) }
    }

    pub fn fallback(mut self, responder: impl Responder + 'static) -> Self {
        self.fallback = Some(Box::new(responder));
        self
    }

    /// Builds a provider from a call log. Only successful attempts are kept;
    /// every tag in `required` must be answerable.
    pub fn from_call_log<'a>(
        records: &[CallRecord],
        required: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self, ProviderError> {
        let mut table = BTreeMap::new();
        for r in records {
            if let Some(text) = &r.response {
                table.insert(r.tag.clone(), text.clone());
            }
        }
        let missing: BTreeSet<&str> = required.into_iter().filter(|t| !table.contains_key(*t)).collect();
        if let Some(tag) = missing.into_iter().next() {
            return Err(ProviderError::IncompleteLog { tag: tag.to_string() });
        }
        Ok(Self::new(table))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl CompletionProvider for ScriptedProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest, log: &CallLog) -> Result<CompletionResponse, ProviderError> {
        let mut record = CallRecord::new(request, 1, &self.id);
        let text = self
            .table
            .get(&request.tag)
            .cloned()
            .or_else(|| self.fallback.as_ref().and_then(|f| f.respond(request)));
        let Some(text) = text else {
            let err = ProviderError::NoScriptEntry { tag: request.tag.clone() };
            record.error = Some(err.to_string());
            log.push(record);
            return Err(err);
        };
        let response = CompletionResponse {
            prompt_tokens: word_count(&request.rendered()),
            completion_tokens: word_count(&text),
            text: text.clone(),
            latency: Duration::ZERO,
            provider_id: self.id.clone(),
        };
        record.response = Some(text);
        record.prompt_tokens = response.prompt_tokens;
        record.completion_tokens = response.completion_tokens;
        log.push(record);
        Ok(response)
    }
}
