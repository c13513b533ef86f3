//! A deterministic stand-in for the reviewer and AC models.
//!
//! Each reviewer's rating follows a persona-specific bias around the paper's
//! average venue rating plus seeded noise derived from the call tag; the AC
//! scores review quality by persona (the Expert always highest, the Skimmer
//! always lowest) and weighs ratings by Elo when the prompt discloses it.
//! Everything else is read from the prompt text.

use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{CompletionRequest, Responder};
use crate::agent::{tags, CallKind, DELTA_LABEL, ELO_HEADER, MEMORY_OPEN};
use crate::domain::{Paper, PersonaId, ReviewerState};

pub struct PersonaSimulator {
    seed: u64,
    ratings: HashMap<String, f64>,
    personas: HashMap<String, PersonaId>,
}

fn rating_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"Rating: (\d+)/10").expect("static regex"))
}

fn review_by_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"--- Review by (\S+) ---\nRating: (\d+)/10").expect("static regex"))
}

fn elo_line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^- (\S+): (-?\d+)$").expect("static regex"))
}

fn delta_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"{} ([+-]\d+)", regex::escape(DELTA_LABEL))).expect("static regex"))
}

impl PersonaSimulator {
    pub fn new(pool: &[Paper], reviewers: &[ReviewerState], seed: u64) -> Self {
        Self {
            seed,
            ratings: pool.iter().map(|p| (p.id.clone(), p.avg_rating)).collect(),
            personas: reviewers.iter().map(|r| (r.id.clone(), r.persona)).collect(),
        }
    }

    /// Uniform value in [-1, 1] determined by seed, tag and salt.
    fn noise(&self, tag: &str, salt: &str) -> f64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(tag.as_bytes());
        h.update(salt.as_bytes());
        let bytes: [u8; 8] = h.finalize()[..8].try_into().expect("digest is 32 bytes");
        (u64::from_le_bytes(bytes) as f64 / u64::MAX as f64) * 2.0 - 1.0
    }

    fn initial_rating(&self, persona: PersonaId, quality: f64, n: f64) -> (f64, u8) {
        match persona {
            PersonaId::Expert => (quality + 0.6 * n, 4),
            PersonaId::Critic => (quality - 1.5 + 0.8 * n, 4),
            PersonaId::Bluffer => (0.4 * quality + 0.6 * 6.5 + 2.0 * n, 5),
            PersonaId::Optimist => (quality + 1.8 + 0.8 * n, 3),
            PersonaId::Harmonizer => (0.6 * quality + 0.4 * 5.5 + 0.6 * n, 3),
            PersonaId::Skimmer => (5.5 + 3.0 * n, 2),
        }
    }

    fn review_text(persona: PersonaId) -> (&'static str, &'static str, &'static str) {
        match persona {
            PersonaId::Expert => (
                "Works through the method, the proofs and every experiment table.",
                "The central claim is supported by the reported evidence where it exists.",
                "Specific gaps: the ablation omits the strongest baseline and one derivation skips a step.",
            ),
            PersonaId::Critic => (
                "The contribution is narrower than claimed.",
                "Some experiments are reported.",
                "Baselines are weak, statistics are thin and novelty is overstated.",
            ),
            PersonaId::Bluffer => (
                "This is clearly a significant piece of work with obvious implications.",
                "Strong framing and a confident narrative.",
                "Minor presentation issues.",
            ),
            PersonaId::Optimist => (
                "An interesting contribution with real potential.",
                "Novel idea, promising results and broad applicability.",
                "A few clarifications would help readers.",
            ),
            PersonaId::Harmonizer => (
                "A balanced submission with both merits and limitations.",
                "Reasonable idea with some supporting evidence.",
                "Evaluation could be broader; some claims need qualification.",
            ),
            PersonaId::Skimmer => ("Looks fine overall.", "Okay.", "Could be improved."),
        }
    }

    fn review(&self, request: &CompletionRequest, kind: CallKind, paper: &str, reviewer: &str) -> Option<String> {
        let persona = *self.personas.get(reviewer)?;
        let quality = *self.ratings.get(paper)?;
        let text = request.rendered();
        let mut n = self.noise(&request.tag, "rating");
        if text.contains(MEMORY_OPEN) {
            n *= 0.7;
        }
        let (raw, confidence) = self.initial_rating(persona, quality, n);
        let rating = match kind {
            CallKind::Second => {
                let seen: Vec<f64> = rating_re()
                    .captures_iter(&text)
                    .filter_map(|c| c[1].parse::<f64>().ok())
                    .collect();
                let (own, peers) = seen.split_first()?;
                let peer_mean = peers.iter().sum::<f64>() / peers.len().max(1) as f64;
                let pull = match persona {
                    PersonaId::Harmonizer => 0.6,
                    PersonaId::Skimmer => 0.5,
                    PersonaId::Bluffer | PersonaId::Optimist => 0.3,
                    PersonaId::Expert => 0.2,
                    PersonaId::Critic => 0.1,
                };
                own + pull * (peer_mean - own)
            }
            _ => raw,
        };
        let (summary, strengths, weaknesses) = Self::review_text(persona);
        Some(
            json!({
                "rating": rating.round().clamp(1.0, 10.0) as u8,
                "confidence": confidence,
                "summary": summary,
                "strengths": strengths,
                "weaknesses": weaknesses,
            })
            .to_string(),
        )
    }

    fn ac(&self, request: &CompletionRequest) -> Option<String> {
        let text = request.rendered();
        let elos: HashMap<String, f64> = if text.contains(ELO_HEADER) {
            elo_line_re()
                .captures_iter(&text)
                .filter_map(|c| Some((c[1].to_string(), c[2].parse().ok()?)))
                .collect()
        } else {
            HashMap::new()
        };
        let mut scores = serde_json::Map::new();
        let (mut weighted, mut total) = (0.0, 0.0);
        for c in review_by_re().captures_iter(&text) {
            let id = c[1].to_string();
            let rating: f64 = c[2].parse().ok()?;
            let persona = *self.personas.get(&id)?;
            let n = self.noise(&request.tag, &id);
            let quality = match persona {
                PersonaId::Expert => 9.0,
                PersonaId::Skimmer => 2.0,
                PersonaId::Harmonizer => (7.0 + n).round().clamp(3.0, 8.0),
                PersonaId::Critic => (6.0 + n).round().clamp(3.0, 8.0),
                PersonaId::Optimist | PersonaId::Bluffer => (5.0 + n).round().clamp(3.0, 8.0),
            };
            scores.insert(id.clone(), json!(quality as u8));
            let w = elos.get(&id).map(|e| 10f64.powf((e - 1500.0) / 400.0)).unwrap_or(1.0);
            weighted += w * rating;
            total += w;
        }
        if scores.is_empty() {
            return None;
        }
        let mean = weighted / total;
        let decision = if mean >= 5.5 { "Accept" } else { "Reject" };
        Some(
            json!({
                "decision": decision,
                "quality_scores": scores,
                "rationale": format!("Weighted mean reviewer rating {mean:.2}."),
            })
            .to_string(),
        )
    }

    fn memory(&self, request: &CompletionRequest) -> Option<String> {
        let text = request.rendered();
        let delta: i64 = delta_re().captures(&text)?[1].parse().ok()?;
        let note = match delta {
            d if d > 0 => "My last review was judged useful. Keep the same depth and keep citing concrete evidence from the paper.",
            0 => "My last review was judged average. Add more specific technical points and justify the score.",
            _ => "My last review was judged weak. Read more of the paper and tie every criticism to a concrete passage.",
        };
        Some(json!({ "memory": note }).to_string())
    }
}

impl Responder for PersonaSimulator {
    fn respond(&self, request: &CompletionRequest) -> Option<String> {
        let parsed = tags::parse(&request.tag)?;
        match parsed.kind {
            CallKind::Initial | CallKind::Second => {
                self.review(request, parsed.kind, parsed.paper?, parsed.reviewer?)
            }
            CallKind::Ac => self.ac(request),
            CallKind::Memory => self.memory(request),
        }
    }
}
