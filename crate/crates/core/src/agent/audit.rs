//! Substring audit of a call log against the disclosure rules of each mode.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

use super::prompt::{DELTA_LABEL, ELO_HEADER, MEMORY_CLOSE, MEMORY_OPEN};
use super::{tags, CallKind};
use crate::domain::{Mode, RoundRecord};
use crate::provider::CallRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tag: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.tag, self.rule)
    }
}

fn elo_word() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bElo\b").expect("static regex"))
}

/// Prompt text with any reviewer-memory block removed.
fn outside_memory(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find(MEMORY_OPEN) {
        out.push_str(&rest[..start]);
        match rest[start..].find(MEMORY_CLOSE) {
            Some(end) => rest = &rest[start + end + MEMORY_CLOSE.len()..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Checks every prompt in `calls` against the disclosure rules of `mode`.
///
/// * Baseline: no prompt mentions Elo or carries a memory block, and no memory calls exist.
/// * AC access: reviewer prompts mention neither; AC prompts list the pre-round
///   Elo of each assigned reviewer; no memory calls exist.
/// * Full access: as AC access, except reviewer prompts may carry a memory block,
///   and Elo deltas appear only in memory-update prompts.
pub fn audit_mode_isolation(
    mode: Mode,
    initial_elo: i64,
    rounds: &[RoundRecord],
    calls: &[CallRecord],
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |tag: &str, rule: &str| out.push(Violation { tag: tag.to_string(), rule: rule.to_string() });

    let mut elo_before: BTreeMap<u32, BTreeMap<String, i64>> = BTreeMap::new();
    let mut current: BTreeMap<String, i64> = BTreeMap::new();
    for r in rounds {
        for triplet in r.assignments.values() {
            for id in triplet {
                current.entry(id.clone()).or_insert(initial_elo);
            }
        }
        elo_before.insert(r.round_index, current.clone());
        current.extend(r.elo_after.iter().map(|(k, v)| (k.clone(), *v)));
    }

    for call in calls {
        let Some(parsed) = tags::parse(&call.tag) else {
            flag(&call.tag, "unrecognised call tag");
            continue;
        };
        let text = call.rendered_prompt();
        let has_memory = text.contains(MEMORY_OPEN);
        let visible = outside_memory(&text);
        match (mode, parsed.kind) {
            (Mode::Baseline | Mode::AcAccess, CallKind::Memory) => {
                flag(&call.tag, "memory update outside full access")
            }
            (Mode::Baseline, _) => {
                if elo_word().is_match(&text) {
                    flag(&call.tag, "Elo mentioned in a baseline prompt");
                }
                if has_memory {
                    flag(&call.tag, "memory block in a baseline prompt");
                }
            }
            (_, CallKind::Initial | CallKind::Second) => {
                if mode == Mode::AcAccess && has_memory {
                    flag(&call.tag, "memory block outside full access");
                }
                if elo_word().is_match(&visible) {
                    flag(&call.tag, "Elo visible to a reviewer");
                }
            }
            (_, CallKind::Ac) => {
                if has_memory {
                    flag(&call.tag, "memory block in an AC prompt");
                }
                if text.contains(DELTA_LABEL) {
                    flag(&call.tag, "Elo delta in an AC prompt");
                }
                if !text.contains(ELO_HEADER) {
                    flag(&call.tag, "AC prompt lacks reviewer Elo");
                } else if let Some(round) = rounds.iter().find(|r| r.round_index == parsed.round) {
                    let paper = parsed.paper.unwrap_or_default();
                    if let (Some(triplet), Some(before)) = (round.assignments.get(paper), elo_before.get(&round.round_index)) {
                        for id in triplet {
                            let line = format!("- {}: {}", id, before.get(id).copied().unwrap_or(initial_elo));
                            if !text.contains(&line) {
                                flag(&call.tag, &format!("AC prompt lacks pre-round Elo of {id}"));
                            }
                        }
                    }
                }
            }
            (_, CallKind::Memory) => {
                if has_memory {
                    flag(&call.tag, "memory block in a memory-update prompt");
                }
                if !text.contains(DELTA_LABEL) {
                    flag(&call.tag, "memory-update prompt lacks the Elo delta");
                }
            }
        }
        if parsed.kind != CallKind::Memory && visible.contains(DELTA_LABEL) {
            flag(&call.tag, "Elo delta outside a memory-update prompt");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::CompletionRequest;

    fn call(tag: &str, user: &str) -> CallRecord {
        let req = CompletionRequest {
            system_prompt: "sys".into(),
            user_messages: vec![user.into()],
            temperature: 0.0,
            max_output_tokens: 1,
            tag: tag.into(),
        };
        CallRecord::new(&req, 1, "t")
    }

    #[test]
    fn memory_block_is_stripped() {
        let t = format!("a {MEMORY_OPEN}\nImprove my Elo\n{MEMORY_CLOSE}\n b");
        assert_eq!(outside_memory(&t), "a \n b");
    }

    #[test]
    fn baseline_flags_elo_and_memory() {
        let calls = [
            call("round1/p/rev-a/initial", "clean prompt about model development"),
            call("round1/p/rev-b/initial", "your Elo is 1600"),
            call("round1/p/ac", &format!("{MEMORY_OPEN} x {MEMORY_CLOSE}")),
            call("round1/rev-a/memory", "x"),
        ];
        let v = audit_mode_isolation(Mode::Baseline, 1500, &[], &calls);
        let tags: Vec<_> = v.iter().map(|v| v.tag.as_str()).collect();
        assert_eq!(tags, ["round1/p/rev-b/initial", "round1/p/ac", "round1/rev-a/memory"]);
    }

    #[test]
    fn full_access_allows_elo_inside_memory_only() {
        let ok = format!("{MEMORY_OPEN}\nraise my Elo\n{MEMORY_CLOSE}\n\nPaper title: x");
        let bad = format!("{ok}\n{DELTA_LABEL} +100");
        let calls = [call("round1/p/rev-a/second", &ok), call("round1/p/rev-b/second", &bad)];
        let v = audit_mode_isolation(Mode::FullAccess, 1500, &[], &calls);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|v| v.tag == "round1/p/rev-b/second"));
    }
}
