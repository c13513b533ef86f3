//! Persona-conditioned prompting and structured-output parsing for reviewer and AC agents.

mod audit;
mod parse;
mod persona;
mod prompt;

pub use audit::{audit_mode_isolation, Violation};
pub use parse::{extract_json_object, parse_ac, parse_memory, parse_review, truncate_words, ParseError};
pub use persona::{PersonaError, PersonaRegistry, PersonaSpec};
pub use prompt::{
    anonymize, build_ac_prompt, build_initial_review_prompt, build_memory_update_prompt,
    build_second_review_prompt, repair_instruction, ExpectedSchema, PromptBundle, DELTA_LABEL, ELO_HEADER,
    MEMORY_CLOSE, MEMORY_OPEN, OWN_REVIEW_HEADER, PEER_HEADER, PRIOR_NOTES_HEADER,
};

use crate::config::ProviderSettings;
use crate::domain::{Mode, ReviewerId};
use crate::provider::{CallLog, CompletionProvider, CompletionRequest, ProviderError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error("reviewer memory is only allowed in full-access mode (mode is {0})")]
    MemoryOutsideFullAccess(Mode),
    #[error("second review needs exactly 2 peer reviews, got {0}")]
    PeerCount(usize),
    #[error("peer reviews include the reviewer's own review ({0})")]
    PeerIsSelf(ReviewerId),
    #[error("AC decision needs exactly 3 reviews, got {0}")]
    ReviewCount(usize),
    #[error("review by {0} is not a second-stage review")]
    NotFinal(ReviewerId),
    #[error("no Elo rating for reviewer {0}")]
    MissingElo(ReviewerId),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("unparseable response for `{tag}` after repair: {error}")]
    Parse { tag: String, error: ParseError },
}

/// What a call in the log was for, recovered from its tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CallKind {
    Initial,
    Second,
    Ac,
    Memory,
}

pub mod tags {
    use super::CallKind;
    use crate::domain::ReviewStage;

    pub const REPAIR_SUFFIX: &str = "/repair";

    pub fn review(round: u32, paper: &str, reviewer: &str, stage: ReviewStage) -> String {
        let s = match stage {
            ReviewStage::Initial => "initial",
            ReviewStage::Second => "second",
        };
        format!("round{round}/{paper}/{reviewer}/{s}")
    }

    pub fn ac(round: u32, paper: &str) -> String {
        format!("round{round}/{paper}/ac")
    }

    pub fn memory(round: u32, reviewer: &str) -> String {
        format!("round{round}/{reviewer}/memory")
    }

    pub fn repair(tag: &str) -> String {
        format!("{tag}{REPAIR_SUFFIX}")
    }

    /// Parsed call tag.
    #[derive(Debug, Clone, PartialEq, Eq)]
    pub struct Parsed<'a> {
        pub round: u32,
        pub kind: CallKind,
        /// Paper id for reviews and AC calls.
        pub paper: Option<&'a str>,
        /// Reviewer id for reviews and memory calls.
        pub reviewer: Option<&'a str>,
        pub repair: bool,
    }

    pub fn parse(tag: &str) -> Option<Parsed<'_>> {
        let (base, repair) = match tag.strip_suffix(REPAIR_SUFFIX) {
            Some(b) => (b, true),
            None => (tag, false),
        };
        let (round, rest) = base.strip_prefix("round")?.split_once('/')?;
        let round = round.parse().ok()?;
        let (head, last) = rest.rsplit_once('/')?;
        let parsed = match last {
            "ac" => Parsed { round, kind: CallKind::Ac, paper: Some(head), reviewer: None, repair },
            "memory" => Parsed { round, kind: CallKind::Memory, paper: None, reviewer: Some(head), repair },
            "initial" | "second" => {
                let (paper, reviewer) = head.rsplit_once('/')?;
                let kind = if last == "initial" { CallKind::Initial } else { CallKind::Second };
                Parsed { round, kind, paper: Some(paper), reviewer: Some(reviewer), repair }
            }
            _ => return None,
        };
        Some(parsed)
    }
}

/// Sends a prompt and parses the answer, re-asking once with a repair instruction on parse failure.
pub fn ask<T>(
    provider: &dyn CompletionProvider,
    log: &CallLog,
    settings: &ProviderSettings,
    bundle: &PromptBundle,
    tag: String,
    parse: impl Fn(&str) -> Result<T, ParseError>,
) -> Result<T, AgentError> {
    let mut request = CompletionRequest {
        system_prompt: bundle.system_prompt.clone(),
        user_messages: vec![bundle.user_message.clone()],
        temperature: settings.temperature,
        max_output_tokens: settings.max_output_tokens,
        tag,
    };
    let first = provider.complete(&request, log)?;
    let error = match parse(&first.text) {
        Ok(v) => return Ok(v),
        Err(e) => e,
    };
    request.user_messages.push(repair_instruction(bundle.expected_schema, &error.to_string()));
    request.tag = tags::repair(&request.tag);
    let second = provider.complete(&request, log)?;
    parse(&second.text).map_err(|error| AgentError::Parse { tag: request.tag.clone(), error })
}
