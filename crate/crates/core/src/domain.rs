//! Shared domain types: papers, reviewers, reviews, AC outcomes and round records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type PaperId = String;
pub type ReviewerId = String;

/// Accept/reject label, used both for ground truth and for AC decisions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

impl Decision {
    pub fn is_accept(self) -> bool {
        matches!(self, Decision::Accept)
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Accept => "Accept",
            Decision::Reject => "Reject",
        })
    }
}

impl FromStr for Decision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "accept" => Ok(Decision::Accept),
            "reject" => Ok(Decision::Reject),
            other => Err(format!("unknown decision `{other}`")),
        }
    }
}

/// A submission under review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paper {
    pub id: PaperId,
    pub title: String,
    pub body: String,
    pub avg_rating: f64,
    pub rating_variance: f64,
    pub ground_truth: Decision,
}

impl Paper {
    /// Checks the per-record invariants. Returns a description of the first violation.
    pub fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id must be non-empty".into());
        }
        if !self.avg_rating.is_finite() || !(1.0..=10.0).contains(&self.avg_rating) {
            return Err(format!("avg_rating {} outside [1, 10]", self.avg_rating));
        }
        if !self.rating_variance.is_finite() || self.rating_variance < 0.0 {
            return Err(format!("rating_variance {} is negative", self.rating_variance));
        }
        Ok(())
    }
}

/// The six reviewer archetypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PersonaId {
    Expert,
    Critic,
    Bluffer,
    Optimist,
    Harmonizer,
    Skimmer,
}

impl PersonaId {
    pub const ALL: [PersonaId; 6] = [
        PersonaId::Expert,
        PersonaId::Critic,
        PersonaId::Bluffer,
        PersonaId::Optimist,
        PersonaId::Harmonizer,
        PersonaId::Skimmer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PersonaId::Expert => "Expert",
            PersonaId::Critic => "Critic",
            PersonaId::Bluffer => "Bluffer",
            PersonaId::Optimist => "Optimist",
            PersonaId::Harmonizer => "Harmonizer",
            PersonaId::Skimmer => "Skimmer",
        }
    }
}

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PersonaId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PersonaId::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown persona `{s}`"))
    }
}

/// Information-disclosure regime of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Elo is computed but shown to nobody.
    Baseline,
    /// The AC sees reviewer Elo; reviewers see nothing and keep no memory.
    AcAccess,
    /// The AC sees Elo; reviewers learn their deltas and keep a strategy memory.
    FullAccess,
}

impl Mode {
    pub fn ac_sees_elo(self) -> bool {
        !matches!(self, Mode::Baseline)
    }

    pub fn has_memory(self) -> bool {
        matches!(self, Mode::FullAccess)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::AcAccess => "ac-access",
            Mode::FullAccess => "full-access",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "baseline" => Ok(Mode::Baseline),
            "ac-access" | "acaccess" => Ok(Mode::AcAccess),
            "full-access" | "fullaccess" => Ok(Mode::FullAccess),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub paper_id: PaperId,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewerState {
    pub id: ReviewerId,
    pub persona: PersonaId,
    pub elo: i64,
    pub memory: String,
    pub history: Vec<HistoryEntry>,
}

impl ReviewerState {
    pub fn new(id: impl Into<ReviewerId>, persona: PersonaId, initial_elo: i64) -> Self {
        Self {
            id: id.into(),
            persona,
            elo: initial_elo,
            memory: String::new(),
            history: Vec::new(),
        }
    }

    /// Elo recomputed from the initial rating and the recorded deltas.
    pub fn reconstructed_elo(&self, initial_elo: i64) -> i64 {
        initial_elo + self.history.iter().map(|h| h.delta).sum::<i64>()
    }
}

/// The standard roster: one reviewer per persona, ids `rev-a` .. `rev-f`.
pub fn default_roster(initial_elo: i64) -> Vec<ReviewerState> {
    PersonaId::ALL
        .into_iter()
        .zip('a'..='f')
        .map(|(persona, c)| ReviewerState::new(format!("rev-{c}"), persona, initial_elo))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReviewStage {
    Initial,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Review {
    pub paper_id: PaperId,
    pub reviewer_id: ReviewerId,
    pub stage: ReviewStage,
    pub rating: u8,
    pub confidence: u8,
    pub summary: String,
    pub strengths: String,
    pub weaknesses: String,
}

impl Review {
    pub fn check(&self) -> Result<(), String> {
        if !(1..=10).contains(&self.rating) {
            return Err(format!("rating {} outside [1, 10]", self.rating));
        }
        if !(1..=5).contains(&self.confidence) {
            return Err(format!("confidence {} outside [1, 5]", self.confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcOutcome {
    pub paper_id: PaperId,
    pub decision: Decision,
    pub quality_scores: BTreeMap<ReviewerId, u8>,
    pub rationale: String,
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: u32,
    /// Paper ids in draw order.
    pub papers: Vec<PaperId>,
    pub assignments: BTreeMap<PaperId, [ReviewerId; 3]>,
    pub initial_reviews: Vec<Review>,
    pub second_reviews: Vec<Review>,
    pub ac_outcomes: Vec<AcOutcome>,
    pub elo_deltas: BTreeMap<ReviewerId, i64>,
    pub elo_after: BTreeMap<ReviewerId, i64>,
    /// Reviewer memories at the end of the round (all empty outside full access).
    pub memory_after: BTreeMap<ReviewerId, String>,
}

impl RoundRecord {
    /// Structural checks: disjoint triplets, zero-sum deltas, one second review per initial review.
    pub fn check(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for (paper, triplet) in &self.assignments {
            for r in triplet {
                if !seen.insert(r.as_str()) {
                    return Err(format!("reviewer {r} assigned twice (paper {paper})"));
                }
            }
            let sum: i64 = triplet
                .iter()
                .map(|r| self.elo_deltas.get(r).copied().unwrap_or(0))
                .sum();
            if sum != 0 {
                return Err(format!("deltas for paper {paper} sum to {sum}"));
            }
        }
        for second in &self.second_reviews {
            let has_initial = self.initial_reviews.iter().any(|i| {
                i.paper_id == second.paper_id && i.reviewer_id == second.reviewer_id
            });
            if !has_initial {
                return Err(format!(
                    "second review by {} on {} without an initial review",
                    second.reviewer_id, second.paper_id
                ));
            }
        }
        Ok(())
    }
}
