//! Decision metrics against ground truth and per-reviewer Elo trajectories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Decision, PersonaId, ReviewerId};
use crate::transcript::Transcript;

/// Confusion matrix with Accept as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self { tp: self.tp * k, fp: self.fp * k, fn_: self.fn_ * k, tn: self.tn * k }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no decisions to score")]
    Empty,
    #[error("paper {0} is not in the transcript's pool")]
    UnknownPaper(String),
}

/// `(predicted, ground_truth)` pairs to counts.
pub fn confusion(decisions: &[(Decision, Decision)]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &(pred, truth) in decisions {
        match (pred, truth) {
            (Decision::Accept, Decision::Accept) => c.tp += 1,
            (Decision::Accept, Decision::Reject) => c.fp += 1,
            (Decision::Reject, Decision::Accept) => c.fn_ += 1,
            (Decision::Reject, Decision::Reject) => c.tn += 1,
        }
    }
    c
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(c: ConfusionCounts) -> Result<Scores, MetricsError> {
    if c.total() == 0 {
        return Err(MetricsError::Empty);
    }
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(Scores { accuracy: ratio(c.tp + c.tn, c.total()), precision, recall, f1 })
}

/// AC decision and ground truth for every decided paper, in round order.
pub fn decisions_from_transcript(t: &Transcript) -> Result<Vec<(Decision, Decision)>, MetricsError> {
    let truth: BTreeMap<&str, Decision> = t.header.pool.iter().map(|p| (p.id.as_str(), p.ground_truth)).collect();
    t.rounds
        .iter()
        .flat_map(|r| &r.ac_outcomes)
        .map(|o| {
            truth
                .get(o.paper_id.as_str())
                .map(|&g| (o.decision, g))
                .ok_or_else(|| MetricsError::UnknownPaper(o.paper_id.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub reviewer: ReviewerId,
    pub persona: PersonaId,
    /// `(round, elo)` starting with round 0 at the initial rating.
    pub points: Vec<(u32, i64)>,
}

/// One series per roster entry, each of length `rounds + 1`.
pub fn trajectories(t: &Transcript) -> Vec<Trajectory> {
    let initial = t.header.config.initial_elo;
    t.header
        .roster
        .iter()
        .map(|entry| {
            let mut elo = initial;
            let mut points = vec![(0, initial)];
            for r in &t.rounds {
                elo = r.elo_after.get(&entry.id).copied().unwrap_or(elo);
                points.push((r.round_index, elo));
            }
            Trajectory { reviewer: entry.id.clone(), persona: entry.persona, points }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub counts: ConfusionCounts,
    pub scores: Scores,
    pub trajectories: Vec<Trajectory>,
}

pub fn metrics_report(t: &Transcript) -> Result<MetricsReport, MetricsError> {
    let counts = confusion(&decisions_from_transcript(t)?);
    Ok(MetricsReport { counts, scores: metrics(counts)?, trajectories: trajectories(t) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Decision::{Accept as A, Reject as R};

    fn round2(x: f64) -> f64 {
        (x * 100.0).round() / 100.0
    }

    #[test]
    fn confusion_basics() {
        let c = confusion(&[(A, A), (A, R), (R, A), (R, R)]);
        assert_eq!(c, ConfusionCounts { tp: 1, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(confusion(&[]), ConfusionCounts::default());
    }

    #[test]
    fn hand_computed_example() {
        let s = metrics(ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 5 }).unwrap();
        assert!((s.accuracy - 0.8).abs() < 1e-12);
        assert!((s.precision - 0.75).abs() < 1e-12);
        assert!((s.recall - 0.75).abs() < 1e-12);
        assert!((s.f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cases() {
        assert_eq!(metrics(ConfusionCounts::default()), Err(MetricsError::Empty));
        let s = metrics(ConfusionCounts { tp: 0, fp: 0, fn_: 0, tn: 4 }).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 0.0, 0.0, 0.0));
        let s = metrics(ConfusionCounts { tp: 4, fp: 0, fn_: 0, tn: 3 }).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn reference_rows_are_consistent() {
        // counts chosen so precision and recall round to the reference pair
        for (c, p, r, f) in [
            (ConfusionCounts { tp: 77, fp: 98, fn_: 23, tn: 0 }, 0.44, 0.77, 0.56),
            (ConfusionCounts { tp: 2279, fp: 2021, fn_: 371, tn: 0 }, 0.53, 0.86, 0.66),
            (ConfusionCounts { tp: 464, fp: 336, fn_: 261, tn: 0 }, 0.58, 0.64, 0.61),
        ] {
            let s = metrics(c).unwrap();
            assert_eq!((round2(s.precision), round2(s.recall), round2(s.f1)), (p, r, f));
        }
    }

    proptest! {
        #[test]
        fn scale_free(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500, k in 1u64..50) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            prop_assume!(c.total() > 0);
            let a = metrics(c).unwrap();
            let b = metrics(c.scaled(k)).unwrap();
            for (x, y) in [(a.accuracy, b.accuracy), (a.precision, b.precision), (a.recall, b.recall), (a.f1, b.f1)] {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn f1_is_harmonic_mean(tp in 0u64..500, fp in 0u64..500, fn_ in 0u64..500, tn in 0u64..500) {
            let c = ConfusionCounts { tp, fp, fn_, tn };
            prop_assume!(c.total() > 0);
            let s = metrics(c).unwrap();
            let expect = if s.precision + s.recall == 0.0 { 0.0 } else { 2.0 / (1.0 / s.precision + 1.0 / s.recall) };
            prop_assert!((s.f1 - expect).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&s.f1));
        }
    }
}
