//! Prompt builders for the four call kinds.
//!
//! Every section that carries disclosure-sensitive information is delimited
//! by one of the marker constants below so call logs can be audited.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use super::persona::PersonaSpec;
use super::AgentError;
use crate::domain::{Mode, Paper, PersonaId, Review, ReviewStage, ReviewerId};

pub const MEMORY_OPEN: &str = "[Reviewer memory]";
pub const MEMORY_CLOSE: &str = "[End of reviewer memory]";
pub const ELO_HEADER: &str = "Reviewer Elo ratings";
pub const DELTA_LABEL: &str = "Elo change this round:";
pub const PRIOR_NOTES_HEADER: &str = "Your previous strategy notes:";
pub const OWN_REVIEW_HEADER: &str = "Your initial review:";
pub const PEER_HEADER: &str = "Other reviewers' initial reviews:";

const AC_SYSTEM_PROMPT: &str = "You are the Area Chair for a machine learning conference. \
You read the final reviews of a submission, decide whether it is accepted or rejected, \
and rate the overall quality of each review so that careful, well-justified reviewing is recognized.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedSchema {
    ReviewJson,
    AcJson,
    MemoryJson,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub system_prompt: String,
    pub user_message: String,
    pub expected_schema: ExpectedSchema,
}

const REVIEW_SCHEMA: &str = "Respond with a single JSON object and nothing else, using exactly these keys:\n\
{\"rating\": <integer 1-10>, \"confidence\": <integer 1-5>, \"summary\": <string>, \"strengths\": <string>, \"weaknesses\": <string>}";

fn memory_block(memory: &str) -> String {
    format!("{MEMORY_OPEN}\n{}\n{MEMORY_CLOSE}\n\n", memory.trim())
}

fn paper_block(paper: &Paper) -> String {
    format!("Paper title: {}\n\nPaper content:\n{}\n", paper.title, paper.body)
}

fn check_memory(memory: &str, mode: Mode) -> Result<(), AgentError> {
    if !memory.trim().is_empty() && !mode.has_memory() {
        return Err(AgentError::MemoryOutsideFullAccess(mode));
    }
    Ok(())
}

fn redactor() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let names: Vec<_> = PersonaId::ALL.iter().map(|p| p.name().to_lowercase()).collect();
        Regex::new(&format!(r"(?i)\b({})s?\b", names.join("|"))).expect("static regex")
    })
}

/// Removes persona names and the given reviewer ids from free text.
pub fn anonymize(text: &str, ids: &[&str]) -> String {
    let mut out = redactor().replace_all(text, "[redacted]").into_owned();
    for id in ids {
        if !id.is_empty() {
            out = out.replace(id, "[redacted]");
        }
    }
    out
}

fn review_body(review: &Review, ids: &[&str]) -> String {
    format!(
        "Rating: {}/10\nConfidence: {}/5\nSummary: {}\nStrengths: {}\nWeaknesses: {}\n",
        review.rating,
        review.confidence,
        anonymize(&review.summary, ids),
        anonymize(&review.strengths, ids),
        anonymize(&review.weaknesses, ids),
    )
}

pub fn build_initial_review_prompt(
    persona: &PersonaSpec,
    memory: &str,
    paper: &Paper,
    mode: Mode,
) -> Result<PromptBundle, AgentError> {
    check_memory(memory, mode)?;
    let mut user = String::new();
    if !memory.trim().is_empty() {
        user.push_str(&memory_block(memory));
    }
    user.push_str(&paper_block(paper));
    user.push_str(
        "\nWrite your review of this submission. Rate it on a 1-10 scale \
(1 = strong reject, 10 = strong accept) and give your confidence on a 1-5 scale.\n",
    );
    user.push_str(REVIEW_SCHEMA);
    Ok(PromptBundle {
        system_prompt: persona.system_prompt.clone(),
        user_message: user,
        expected_schema: ExpectedSchema::ReviewJson,
    })
}

pub fn build_second_review_prompt(
    persona: &PersonaSpec,
    memory: &str,
    paper: &Paper,
    mode: Mode,
    own: &Review,
    peers: &[Review],
) -> Result<PromptBundle, AgentError> {
    check_memory(memory, mode)?;
    if peers.len() != 2 {
        return Err(AgentError::PeerCount(peers.len()));
    }
    if peers.iter().any(|p| p.reviewer_id == own.reviewer_id) {
        return Err(AgentError::PeerIsSelf(own.reviewer_id.clone()));
    }
    let ids: Vec<&str> = std::iter::once(own.reviewer_id.as_str())
        .chain(peers.iter().map(|p| p.reviewer_id.as_str()))
        .collect();

    let mut user = String::new();
    if !memory.trim().is_empty() {
        user.push_str(&memory_block(&anonymize(memory, &ids)));
    }
    user.push_str(&paper_block(paper));
    let _ = write!(user, "\n{OWN_REVIEW_HEADER}\n{}", review_body(own, &ids));
    let _ = write!(user, "\n{PEER_HEADER}\n");
    for (i, peer) in peers.iter().enumerate() {
        let _ = write!(user, "--- Reviewer {} ---\n{}", i + 1, review_body(peer, &ids));
    }
    user.push_str(
        "\nConsider the other reviews. You may keep your rating or revise it, \
and you may update any part of your review.\n",
    );
    user.push_str(REVIEW_SCHEMA);
    Ok(PromptBundle {
        system_prompt: persona.system_prompt.clone(),
        user_message: user,
        expected_schema: ExpectedSchema::ReviewJson,
    })
}

pub fn build_ac_prompt(
    paper: &Paper,
    reviews: &[Review],
    elo_visible: bool,
    elos: &BTreeMap<ReviewerId, i64>,
) -> Result<PromptBundle, AgentError> {
    if reviews.len() != 3 {
        return Err(AgentError::ReviewCount(reviews.len()));
    }
    if let Some(r) = reviews.iter().find(|r| r.stage != ReviewStage::Second) {
        return Err(AgentError::NotFinal(r.reviewer_id.clone()));
    }
    let mut user = paper_block(paper);
    if elo_visible {
        let _ = writeln!(
            user,
            "\n{ELO_HEADER} (higher means this reviewer's past reviews were rated as more useful; all reviewers started equal):"
        );
        for r in reviews {
            let elo = elos.get(&r.reviewer_id).ok_or_else(|| AgentError::MissingElo(r.reviewer_id.clone()))?;
            let _ = writeln!(user, "- {}: {}", r.reviewer_id, elo);
        }
    }
    user.push_str("\nFinal reviews:\n");
    for r in reviews {
        let _ = write!(user, "--- Review by {} ---\n{}", r.reviewer_id, review_body(r, &[]));
    }
    user.push_str("\nDecide whether to accept or reject the paper. ");
    if elo_visible {
        user.push_str("You may use the reviewers' ratings above as auxiliary information about review reliability. ");
    }
    user.push_str(
        "Then rate the overall quality of each review on a 1-10 scale \
(1 = unhelpful or unjustified, 10 = rigorous and well-justified).\n\
Respond with a single JSON object and nothing else, using exactly these keys:\n\
{\"decision\": \"Accept\" or \"Reject\", \"quality_scores\": {",
    );
    let keys: Vec<String> = reviews.iter().map(|r| format!("\"{}\": <integer 1-10>", r.reviewer_id)).collect();
    user.push_str(&keys.join(", "));
    user.push_str("}, \"rationale\": <string>}");
    Ok(PromptBundle {
        system_prompt: AC_SYSTEM_PROMPT.to_string(),
        user_message: user,
        expected_schema: ExpectedSchema::AcJson,
    })
}

pub fn build_memory_update_prompt(
    persona: &PersonaSpec,
    old_memory: &str,
    elo_delta: i64,
    quality_score: u8,
    word_cap: usize,
    mode: Mode,
) -> Result<PromptBundle, AgentError> {
    if !mode.has_memory() {
        return Err(AgentError::MemoryOutsideFullAccess(mode));
    }
    let prior = if old_memory.trim().is_empty() { "(none yet)" } else { old_memory.trim() };
    let user = format!(
        "{PRIOR_NOTES_HEADER}\n{prior}\n\n\
Outcome of this round:\n\
{DELTA_LABEL} {elo_delta:+}\n\
Area Chair quality score for your review: {quality_score}/10\n\n\
Write updated strategy notes for yourself: brief advice on how to review in future rounds so that your Elo rating improves. \
Use at most {word_cap} words. \
The notes must not abandon your reviewing persona; adjust your approach within it.\n\
Respond with a single JSON object and nothing else: {{\"memory\": <string>}}"
    );
    Ok(PromptBundle {
        system_prompt: persona.system_prompt.clone(),
        user_message: user,
        expected_schema: ExpectedSchema::MemoryJson,
    })
}

/// Instruction appended when a response could not be parsed.
pub fn repair_instruction(schema: ExpectedSchema, error: &str) -> String {
    let what = match schema {
        ExpectedSchema::ReviewJson => "review",
        ExpectedSchema::AcJson => "decision",
        ExpectedSchema::MemoryJson => "notes",
    };
    format!(
        "Your previous reply could not be used ({error}). Reply again with only the {what} JSON object described above, with every key present and values in range."
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::persona::PersonaRegistry;
    use crate::domain::Decision;

    fn paper() -> Paper {
        Paper {
            id: "p1".into(),
            title: "Sparse Routing for Long Contexts".into(),
            body: "We propose a routing rule and evaluate it on three benchmarks.".into(),
            avg_rating: 6.0,
            rating_variance: 0.5,
            ground_truth: Decision::Accept,
        }
    }

    fn review(id: &str, rating: u8, stage: ReviewStage) -> Review {
        Review {
            paper_id: "p1".into(),
            reviewer_id: id.into(),
            stage,
            rating,
            confidence: 3,
            summary: format!("Summary by {id}, speaking as the Skimmer."),
            strengths: "Clear writing; the experts will like it.".into(),
            weaknesses: "Missing ablation; the critic in me objects.".into(),
        }
    }

    fn expert() -> PersonaSpec {
        PersonaRegistry::builtin().get(PersonaId::Expert).clone()
    }

    #[test]
    fn full_access_memory_is_prepended() {
        let b = build_initial_review_prompt(&expert(), "Be more thorough", &paper(), Mode::FullAccess).unwrap();
        assert!(b.user_message.starts_with(MEMORY_OPEN));
        assert!(b.user_message.contains("Be more thorough"));
        assert_eq!(b.expected_schema, ExpectedSchema::ReviewJson);
    }

    #[test]
    fn baseline_prompt_has_no_memory_or_elo() {
        let b = build_initial_review_prompt(&expert(), "", &paper(), Mode::Baseline).unwrap();
        assert!(!b.user_message.contains(MEMORY_OPEN));
        assert!(!b.user_message.contains("Elo") && !b.system_prompt.contains("Elo"));
    }

    #[test]
    fn title_appears_once_in_every_mode() {
        for mode in [Mode::Baseline, Mode::AcAccess, Mode::FullAccess] {
            let b = build_initial_review_prompt(&expert(), "", &paper(), mode).unwrap();
            assert_eq!(b.user_message.matches(&paper().title).count(), 1);
        }
    }

    #[test]
    fn memory_outside_full_access_is_rejected() {
        let err = build_initial_review_prompt(&expert(), "notes", &paper(), Mode::AcAccess).unwrap_err();
        assert!(matches!(err, AgentError::MemoryOutsideFullAccess(Mode::AcAccess)));
    }

    #[test]
    fn second_review_is_anonymized() {
        let own = review("rev-a", 5, ReviewStage::Initial);
        let peers = [review("rev-b", 7, ReviewStage::Initial), review("rev-c", 3, ReviewStage::Initial)];
        let b = build_second_review_prompt(&expert(), "", &paper(), Mode::Baseline, &own, &peers).unwrap();
        let text = format!("{}\n{}", b.system_prompt, b.user_message);
        assert!(text.contains("Rating: 7/10") && text.contains("Rating: 3/10"));
        assert!(text.contains("--- Reviewer 1 ---") && text.contains("--- Reviewer 2 ---"));
        for p in PersonaId::ALL {
            assert!(!text.to_lowercase().contains(&p.name().to_lowercase()), "{p} leaked");
        }
        for id in ["rev-a", "rev-b", "rev-c"] {
            assert!(!text.contains(id));
        }
        let own_section = &b.user_message[b.user_message.find(OWN_REVIEW_HEADER).unwrap()..];
        assert!(own_section.starts_with(&format!("{OWN_REVIEW_HEADER}\nRating: 5/10")));
        assert!(!text.to_lowercase().contains("rebuttal"));
    }

    #[test]
    fn second_review_preconditions() {
        let own = review("rev-a", 5, ReviewStage::Initial);
        let one = [review("rev-b", 7, ReviewStage::Initial)];
        assert!(matches!(
            build_second_review_prompt(&expert(), "", &paper(), Mode::Baseline, &own, &one),
            Err(AgentError::PeerCount(1))
        ));
        let with_self = [review("rev-a", 7, ReviewStage::Initial), review("rev-c", 3, ReviewStage::Initial)];
        assert!(matches!(
            build_second_review_prompt(&expert(), "", &paper(), Mode::Baseline, &own, &with_self),
            Err(AgentError::PeerIsSelf(_))
        ));
    }

    #[test]
    fn ac_prompt_elo_visibility() {
        let reviews = vec![
            review("rev-a", 7, ReviewStage::Second),
            review("rev-b", 5, ReviewStage::Second),
            review("rev-c", 3, ReviewStage::Second),
        ];
        let elos: BTreeMap<_, _> = [("rev-a".to_string(), 1620), ("rev-b".to_string(), 1500), ("rev-c".to_string(), 1380)].into();
        let hidden = build_ac_prompt(&paper(), &reviews, false, &elos).unwrap();
        assert!(!hidden.user_message.contains("Elo") && !hidden.system_prompt.contains("Elo"));
        for v in ["1620", "1380"] {
            assert!(!hidden.user_message.contains(v));
        }
        let shown = build_ac_prompt(&paper(), &reviews, true, &elos).unwrap();
        for v in ["rev-a: 1620", "rev-b: 1500", "rev-c: 1380"] {
            assert!(shown.user_message.contains(v));
        }
        assert_eq!(shown.expected_schema, ExpectedSchema::AcJson);
    }

    #[test]
    fn ac_prompt_lists_identical_reviews_separately() {
        let reviews = vec![review("rev-a", 6, ReviewStage::Second); 3]
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.reviewer_id = format!("rev-{i}");
                r.summary = "same".into();
                r
            })
            .collect::<Vec<_>>();
        let b = build_ac_prompt(&paper(), &reviews, false, &BTreeMap::new()).unwrap();
        assert_eq!(b.user_message.matches("--- Review by").count(), 3);
    }

    #[test]
    fn ac_prompt_preconditions() {
        let two = vec![review("rev-a", 7, ReviewStage::Second), review("rev-b", 5, ReviewStage::Second)];
        assert!(matches!(build_ac_prompt(&paper(), &two, false, &BTreeMap::new()), Err(AgentError::ReviewCount(2))));
        let mixed = vec![
            review("rev-a", 7, ReviewStage::Second),
            review("rev-b", 5, ReviewStage::Initial),
            review("rev-c", 5, ReviewStage::Second),
        ];
        assert!(matches!(build_ac_prompt(&paper(), &mixed, false, &BTreeMap::new()), Err(AgentError::NotFinal(_))));
    }

    #[test]
    fn memory_update_prompt_contents() {
        let b = build_memory_update_prompt(&expert(), "", 100, 9, 150, Mode::FullAccess).unwrap();
        assert!(b.user_message.contains("+100"));
        assert!(b.user_message.contains("at most 150 words"));
        assert!(b.user_message.contains("(none yet)"));
        let b = build_memory_update_prompt(&expert(), "", -100, 2, 150, Mode::FullAccess).unwrap();
        assert!(b.user_message.contains(&format!("{DELTA_LABEL} -100")));
        assert!(matches!(
            build_memory_update_prompt(&expert(), "", 0, 5, 150, Mode::AcAccess),
            Err(AgentError::MemoryOutsideFullAccess(Mode::AcAccess))
        ));
    }
}
