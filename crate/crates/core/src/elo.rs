//! Rank-based zero-sum Elo adjustment.
//!
//! Within each paper's triplet the reviewers are ranked by the AC quality
//! score and receive fixed base rewards by rank. Reviewers with equal scores
//! share the mean of the rewards their tie group spans, so every triplet's
//! adjustments still sum to exactly zero.

use std::collections::{BTreeMap, BTreeSet};

use crate::domain::{HistoryEntry, PaperId, ReviewerId, ReviewerState};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EloError {
    #[error("expected exactly 3 scores, got {0}")]
    Cardinality(usize),
    #[error("base rewards {0:?} do not sum to zero")]
    NotZeroSum([i64; 3]),
    #[error("base rewards {0:?} must be strictly descending")]
    NotDescending([i64; 3]),
    #[error("base rewards {0:?} give a non-integral mean for a two-way tie")]
    NonIntegralTie([i64; 3]),
    #[error("unknown reviewer `{0}`")]
    UnknownReviewer(ReviewerId),
    #[error("reviewer `{0}` appears in more than one triplet this round")]
    DuplicateReviewer(ReviewerId),
}

/// Base rewards for (top, middle, bottom).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankReward([i64; 3]);

impl Default for RankReward {
    fn default() -> Self {
        RankReward([100, 0, -100])
    }
}

impl RankReward {
    /// Rewards must sum to zero, descend strictly, and split any adjacent tie into integers.
    pub fn new(rewards: [i64; 3]) -> Result<Self, EloError> {
        if rewards.iter().sum::<i64>() != 0 {
            return Err(EloError::NotZeroSum(rewards));
        }
        if rewards[0] <= rewards[1] || rewards[1] <= rewards[2] {
            return Err(EloError::NotDescending(rewards));
        }
        if (rewards[0] + rewards[1]) % 2 != 0 || (rewards[1] + rewards[2]) % 2 != 0 {
            return Err(EloError::NonIntegralTie(rewards));
        }
        Ok(RankReward(rewards))
    }

    pub fn base_rewards(self) -> [i64; 3] {
        self.0
    }
}

/// Reviewers grouped by equal score, best group first. Members of a group are sorted by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking(Vec<Vec<ReviewerId>>);

impl Ranking {
    pub fn groups(&self) -> &[Vec<ReviewerId>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn rank_triplet(scores: &BTreeMap<ReviewerId, u8>) -> Result<Ranking, EloError> {
    if scores.len() != 3 {
        return Err(EloError::Cardinality(scores.len()));
    }
    let mut by_score: BTreeMap<std::cmp::Reverse<u8>, Vec<ReviewerId>> = BTreeMap::new();
    for (id, &score) in scores {
        by_score.entry(std::cmp::Reverse(score)).or_default().push(id.clone());
    }
    Ok(Ranking(by_score.into_values().collect()))
}

pub fn elo_deltas(ranking: &Ranking, rewards: RankReward) -> Result<BTreeMap<ReviewerId, i64>, EloError> {
    if ranking.len() != 3 {
        return Err(EloError::Cardinality(ranking.len()));
    }
    let base = rewards.base_rewards();
    let mut out = BTreeMap::new();
    let mut pos = 0;
    for group in ranking.groups() {
        let span = &base[pos..pos + group.len()];
        let share = span.iter().sum::<i64>() / group.len() as i64;
        for id in group {
            out.insert(id.clone(), share);
        }
        pos += group.len();
    }
    debug_assert_eq!(out.values().sum::<i64>(), 0);
    Ok(out)
}

/// Ranks one triplet and returns its deltas.
pub fn triplet_deltas(
    scores: &BTreeMap<ReviewerId, u8>,
    rewards: RankReward,
) -> Result<BTreeMap<ReviewerId, i64>, EloError> {
    elo_deltas(&rank_triplet(scores)?, rewards)
}

/// Applies all of a round's triplet deltas at once, returning the new states.
pub fn apply_round(
    states: &[ReviewerState],
    round: u32,
    triplets: &[(PaperId, BTreeMap<ReviewerId, i64>)],
) -> Result<Vec<ReviewerState>, EloError> {
    let mut seen = BTreeSet::new();
    let mut next = states.to_vec();
    for (paper, deltas) in triplets {
        for (id, &delta) in deltas {
            if !seen.insert(id.as_str()) {
                return Err(EloError::DuplicateReviewer(id.clone()));
            }
            let state = next
                .iter_mut()
                .find(|s| &s.id == id)
                .ok_or_else(|| EloError::UnknownReviewer(id.clone()))?;
            state.elo += delta;
            state.history.push(HistoryEntry { round, paper_id: paper.clone(), delta });
        }
    }
    Ok(next)
}
