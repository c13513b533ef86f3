//! Extraction of structured JSON answers from raw model text.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use crate::domain::{AcOutcome, Decision, PaperId, Review, ReviewStage, ReviewerId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("field `{0}` has the wrong type")]
    WrongType(String),
    #[error("field `{field}` = {value} outside [{min}, {max}]")]
    OutOfRange { field: String, value: i64, min: i64, max: i64 },
    #[error("unknown decision `{0}`")]
    UnknownDecision(String),
    #[error("quality scores do not match the assigned reviewers (missing {missing:?}, unexpected {unexpected:?})")]
    ScoreSet { missing: Vec<String>, unexpected: Vec<String> },
}

/// The first JSON object embedded in `text`, skipping any surrounding prose or code fences.
pub fn extract_json_object(text: &str) -> Option<Map<String, Value>> {
    text.char_indices().filter(|&(_, c)| c == '{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

fn int_in(map: &Map<String, Value>, field: &'static str, min: i64, max: i64) -> Result<i64, ParseError> {
    let v = map.get(field).ok_or(ParseError::MissingField(field))?;
    to_int(v, field, min, max)
}

fn to_int(v: &Value, field: &str, min: i64, max: i64) -> Result<i64, ParseError> {
    let n = match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| ParseError::WrongType(field.to_string()))?;
    if !(min..=max).contains(&n) {
        return Err(ParseError::OutOfRange { field: field.to_string(), value: n, min, max });
    }
    Ok(n)
}

/// Strings pass through; lists of strings are joined with "; ".
fn text(map: &Map<String, Value>, field: &'static str) -> Result<String, ParseError> {
    match map.get(field).ok_or(ParseError::MissingField(field))? {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Array(items) => items
            .iter()
            .map(|i| i.as_str().map(str::trim).ok_or_else(|| ParseError::WrongType(field.to_string())))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.join("; ")),
        _ => Err(ParseError::WrongType(field.to_string())),
    }
}

pub fn parse_review(
    raw: &str,
    paper_id: &PaperId,
    reviewer_id: &ReviewerId,
    stage: ReviewStage,
) -> Result<Review, ParseError> {
    let map = extract_json_object(raw).ok_or(ParseError::NoJson)?;
    Ok(Review {
        paper_id: paper_id.clone(),
        reviewer_id: reviewer_id.clone(),
        stage,
        rating: int_in(&map, "rating", 1, 10)? as u8,
        confidence: int_in(&map, "confidence", 1, 5)? as u8,
        summary: text(&map, "summary")?,
        strengths: text(&map, "strengths")?,
        weaknesses: text(&map, "weaknesses")?,
    })
}

pub fn parse_ac(raw: &str, paper_id: &PaperId, reviewers: &[ReviewerId]) -> Result<AcOutcome, ParseError> {
    let map = extract_json_object(raw).ok_or(ParseError::NoJson)?;
    let decision = match map.get("decision").ok_or(ParseError::MissingField("decision"))? {
        Value::String(s) => s.parse::<Decision>().map_err(|_| ParseError::UnknownDecision(s.clone()))?,
        _ => return Err(ParseError::WrongType("decision".into())),
    };
    let scores = match map.get("quality_scores").ok_or(ParseError::MissingField("quality_scores"))? {
        Value::Object(m) => m,
        _ => return Err(ParseError::WrongType("quality_scores".into())),
    };
    let expected: BTreeSet<&str> = reviewers.iter().map(String::as_str).collect();
    let given: BTreeSet<&str> = scores.keys().map(String::as_str).collect();
    if expected != given {
        return Err(ParseError::ScoreSet {
            missing: expected.difference(&given).map(|s| s.to_string()).collect(),
            unexpected: given.difference(&expected).map(|s| s.to_string()).collect(),
        });
    }
    let mut quality_scores = BTreeMap::new();
    for (id, v) in scores {
        quality_scores.insert(id.clone(), to_int(v, &format!("quality_scores.{id}"), 1, 10)? as u8);
    }
    let rationale = match map.get("rationale") {
        None | Some(Value::Null) => String::new(),
        Some(_) => text(&map, "rationale")?,
    };
    Ok(AcOutcome { paper_id: paper_id.clone(), decision, quality_scores, rationale })
}

/// Parses a memory update, truncating to `word_cap` words instead of failing.
pub fn parse_memory(raw: &str, word_cap: usize) -> Result<String, ParseError> {
    let map = extract_json_object(raw).ok_or(ParseError::NoJson)?;
    let memory = text(&map, "memory")?;
    Ok(truncate_words(&memory, word_cap))
}

pub fn truncate_words(text: &str, cap: usize) -> String {
    text.split_whitespace().take(cap).collect::<Vec<_>>().join(" ")
}
