//! Line-delimited JSON transcript: a header line, one line per round, then the call log.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::domain::{Paper, PersonaId, ReviewerId, ReviewerState, RoundRecord};
use crate::provider::CallRecord;

pub const FORMAT_VERSION: u32 = 1;
pub const TRANSCRIPT_SUFFIX: &str = ".transcript.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub id: ReviewerId,
    pub persona: PersonaId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptHeader {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub pool_digest: String,
    pub roster: Vec<RosterEntry>,
    /// The prepared pool the run draws from, so a transcript replays on its own.
    pub pool: Vec<Paper>,
}

impl TranscriptHeader {
    pub fn initial_reviewers(&self) -> Vec<ReviewerState> {
        self.roster
            .iter()
            .map(|r| ReviewerState::new(r.id.clone(), r.persona, self.config.initial_elo))
            .collect()
    }
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(TranscriptHeader),
    Round(RoundRecord),
    Call(CallRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub header: TranscriptHeader,
    pub rounds: Vec<RoundRecord>,
    pub calls: Vec<CallRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum TranscriptError {
    #[error("transcript I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("transcript line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("transcript is structurally invalid: {0}")]
    Structure(String),
}

fn serialize_line<T: Serialize>(out: &mut Vec<u8>, line: &T) {
    serde_json::to_writer(&mut *out, line).expect("transcript values are always serializable");
    out.push(b'\n');
}

impl Transcript {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        #[derive(Serialize)]
        #[serde(tag = "kind", rename_all = "snake_case")]
        enum Ref<'a> {
            Header(&'a TranscriptHeader),
            Round(&'a RoundRecord),
            Call(&'a CallRecord),
        }
        serialize_line(&mut out, &Ref::Header(&self.header));
        for r in &self.rounds {
            serialize_line(&mut out, &Ref::Round(r));
        }
        for c in &self.calls {
            serialize_line(&mut out, &Ref::Call(c));
        }
        out
    }

    /// Canonical bytes of the round records alone.
    pub fn rounds_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.rounds {
            serialize_line(&mut out, r);
        }
        out
    }

    /// Writes to a sibling temporary file and renames it over `path`.
    pub fn write_atomic(&self, path: &Path) -> Result<(), TranscriptError> {
        let io = |source| TranscriptError::Io { path: path.display().to_string(), source };
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = std::fs::File::create(&tmp).map_err(io)?;
            f.write_all(&self.to_bytes()).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, TranscriptError> {
        let f = std::fs::File::open(path)
            .map_err(|source| TranscriptError::Io { path: path.display().to_string(), source })?;
        Self::from_reader(f)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, TranscriptError> {
        let mut header = None;
        let mut rounds = Vec::new();
        let mut calls = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| TranscriptError::Parse { line: n, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Line =
                serde_json::from_str(&line).map_err(|e| TranscriptError::Parse { line: n, message: e.to_string() })?;
            match parsed {
                Line::Header(h) if n == 1 => header = Some(h),
                Line::Header(_) => return Err(TranscriptError::Structure(format!("second header on line {n}"))),
                Line::Round(_) | Line::Call(_) if header.is_none() => {
                    return Err(TranscriptError::Structure("first line is not a header".into()))
                }
                Line::Round(_) if !calls.is_empty() => {
                    return Err(TranscriptError::Structure(format!("round record after call log on line {n}")))
                }
                Line::Round(r) => rounds.push(r),
                Line::Call(c) => calls.push(c),
            }
        }
        let header = header.ok_or_else(|| TranscriptError::Structure("empty transcript".into()))?;
        if header.format_version != FORMAT_VERSION {
            return Err(TranscriptError::Structure(format!("unsupported format version {}", header.format_version)));
        }
        for (i, r) in rounds.iter().enumerate() {
            if r.round_index as usize != i + 1 {
                return Err(TranscriptError::Structure(format!(
                    "round {} found where round {} was expected",
                    r.round_index,
                    i + 1
                )));
            }
        }
        Ok(Self { header, rounds, calls })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{default_roster, AcOutcome, Decision, Review, ReviewStage};
    use std::collections::BTreeMap;

    fn record(round: u32) -> RoundRecord {
        let review = |stage| Review {
            paper_id: "p1".into(),
            reviewer_id: "rev-a".into(),
            stage,
            rating: 6,
            confidence: 3,
            summary: "s \"quoted\"\nline".into(),
            strengths: "x".into(),
            weaknesses: "y".into(),
        };
        RoundRecord {
            round_index: round,
            papers: vec!["p1".into()],
            assignments: [("p1".to_string(), ["rev-a".to_string(), "rev-b".to_string(), "rev-c".to_string()])].into(),
            initial_reviews: vec![review(ReviewStage::Initial)],
            second_reviews: vec![review(ReviewStage::Second)],
            ac_outcomes: vec![AcOutcome {
                paper_id: "p1".into(),
                decision: Decision::Reject,
                quality_scores: [("rev-a".to_string(), 9u8)].into(),
                rationale: "r".into(),
            }],
            elo_deltas: [("rev-a".to_string(), 100), ("rev-b".to_string(), 0), ("rev-c".to_string(), -100)].into(),
            elo_after: [("rev-a".to_string(), 1600)].into(),
            memory_after: BTreeMap::new(),
        }
    }

    fn transcript(rounds: u32) -> Transcript {
        let roster = default_roster(1500)
            .into_iter()
            .map(|r| RosterEntry { id: r.id, persona: r.persona })
            .collect();
        Transcript {
            header: TranscriptHeader {
                format_version: FORMAT_VERSION,
                config: ExperimentConfig::default(),
                seed: 0,
                pool_digest: "d".into(),
                roster,
                pool: crate::pool::synthetic_pool(3, 1),
            },
            rounds: (1..=rounds).map(record).collect(),
            calls: vec![],
        }
    }

    #[test]
    fn roundtrip_through_bytes_and_file() {
        let t = transcript(3);
        let bytes = t.to_bytes();
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 4);
        assert!(bytes.starts_with(b"{\"kind\":\"header\""));
        let back = Transcript::from_reader(&bytes[..]).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_bytes(), bytes);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(format!("run{TRANSCRIPT_SUFFIX}"));
        t.write_atomic(&path).unwrap();
        assert_eq!(Transcript::read(&path).unwrap(), t);
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(Transcript::from_reader(&b""[..]), Err(TranscriptError::Structure(_))));
        let mut t = transcript(2);
        t.rounds[1].round_index = 5;
        assert!(matches!(Transcript::from_reader(&t.to_bytes()[..]), Err(TranscriptError::Structure(_))));
        let bytes = transcript(1).to_bytes();
        let text = String::from_utf8(bytes).unwrap();
        let mut lines: Vec<_> = text.lines().collect();
        lines.swap(0, 1);
        assert!(Transcript::from_reader(lines.join("\n").as_bytes()).is_err());
        assert!(matches!(
            Transcript::from_reader(&b"{\"kind\":\"header\"\n"[..]),
            Err(TranscriptError::Parse { line: 1, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_records_roundtrip(
                rating in 1u8..=10,
                delta in -100i64..=100,
                text in "\\PC{0,40}",
                round in 1u32..1000,
            ) {
                let mut r = record(round);
                r.initial_reviews[0].rating = rating;
                r.initial_reviews[0].summary = text.clone();
                r.elo_deltas.insert("rev-a".into(), delta);
                r.memory_after.insert("rev-a".into(), text);
                let json = serde_json::to_string(&r).unwrap();
                let back: RoundRecord = serde_json::from_str(&json).unwrap();
                prop_assert_eq!(back, r);
            }
        }
    }
}
