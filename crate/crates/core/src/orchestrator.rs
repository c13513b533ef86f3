//! Runs experiments round by round: draw, assign, initial review, second review,
//! AC decision, Elo update and (full access only) memory update.
//!
//! A round is computed against a copy of the state and committed only when
//! every stage succeeded, so a failed round leaves no partial Elo changes.
//! With an output path the transcript is rewritten atomically after each round.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    self, ask, build_ac_prompt, build_initial_review_prompt, build_memory_update_prompt, build_second_review_prompt,
    parse_ac, parse_memory, parse_review, tags, AgentError, PersonaRegistry,
};
use crate::config::{validate_config, ConfigViolation, ExperimentConfig, REVIEWER_COUNT, TRIPLET};
use crate::domain::{default_roster, AcOutcome, Paper, PaperId, Review, ReviewStage, ReviewerId, ReviewerState, RoundRecord};
use crate::elo::{apply_round, triplet_deltas, EloError};
use crate::pool::{draw_round_papers, pool_digest, stratified_sample, variance_filter, PoolError};
use crate::provider::{CallLog, CallRecord, CompletionProvider, ProviderError, ScriptedProvider};
use crate::transcript::{RosterEntry, Transcript, TranscriptError, TranscriptHeader, FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigViolation>),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error("pool has {available} papers but {needed} are needed ({rounds} rounds × {per_round} per round)")]
    PoolTooSmall { needed: usize, available: usize, rounds: u32, per_round: usize },
    #[error("round {round} aborted: {source}")]
    Round {
        round: u32,
        #[source]
        source: AgentError,
    },
    #[error(transparent)]
    Elo(#[from] EloError),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
    #[error("transcript does not match its own pool or roster: {0}")]
    Inconsistent(String),
    #[error("assignment needs {needed} distinct reviewers and {papers} distinct papers")]
    Assignment { needed: usize, papers: usize },
}

/// Everything needed to continue an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentState {
    pub config: ExperimentConfig,
    pub pool: Vec<Paper>,
    pub reviewers: Vec<ReviewerState>,
    pub remaining: Vec<Paper>,
    pub rounds: Vec<RoundRecord>,
    pub calls: Vec<CallRecord>,
}

impl ExperimentState {
    pub fn new(config: ExperimentConfig, pool: Vec<Paper>) -> Self {
        Self {
            reviewers: default_roster(config.initial_elo),
            remaining: pool.clone(),
            pool,
            config,
            rounds: Vec::new(),
            calls: Vec::new(),
        }
    }

    pub fn next_round(&self) -> u32 {
        self.rounds.len() as u32 + 1
    }

    pub fn total_elo(&self) -> i64 {
        self.reviewers.iter().map(|r| r.elo).sum()
    }

    pub fn transcript(&self) -> Transcript {
        Transcript {
            header: TranscriptHeader {
                format_version: FORMAT_VERSION,
                config: self.config.clone(),
                seed: self.config.rng_seed,
                pool_digest: pool_digest(&self.pool),
                roster: default_roster(self.config.initial_elo)
                    .into_iter()
                    .map(|r| RosterEntry { id: r.id, persona: r.persona })
                    .collect(),
                pool: self.pool.clone(),
            },
            rounds: self.rounds.clone(),
            calls: self.calls.clone(),
        }
    }

    /// Rebuilds the state at the end of the transcript's last round.
    pub fn from_transcript(t: &Transcript) -> Result<Self, RunError> {
        let h = &t.header;
        if pool_digest(&h.pool) != h.pool_digest {
            return Err(RunError::Inconsistent("pool digest mismatch".into()));
        }
        let mut state = Self::new(h.config.clone(), h.pool.clone());
        if state.reviewers.iter().map(|r| (&r.id, r.persona)).ne(h.roster.iter().map(|r| (&r.id, r.persona))) {
            return Err(RunError::Inconsistent("unexpected reviewer roster".into()));
        }
        for record in &t.rounds {
            let triplets: Vec<(PaperId, BTreeMap<ReviewerId, i64>)> = record
                .papers
                .iter()
                .map(|p| {
                    let triplet = record
                        .assignments
                        .get(p)
                        .ok_or_else(|| RunError::Inconsistent(format!("round {} lacks assignment for {p}", record.round_index)))?;
                    Ok((p.clone(), triplet.iter().map(|id| (id.clone(), record.elo_deltas.get(id).copied().unwrap_or(0))).collect()))
                })
                .collect::<Result<_, RunError>>()?;
            state.reviewers = apply_round(&state.reviewers, record.round_index, &triplets)?;
            for r in &mut state.reviewers {
                if record.elo_after.get(&r.id) != Some(&r.elo) {
                    return Err(RunError::Inconsistent(format!("round {}: Elo of {} does not add up", record.round_index, r.id)));
                }
                r.memory = record.memory_after.get(&r.id).cloned().unwrap_or_default();
            }
            let used: BTreeSet<&PaperId> = record.papers.iter().collect();
            let before = state.remaining.len();
            state.remaining.retain(|p| !used.contains(&p.id));
            if before - state.remaining.len() != used.len() {
                return Err(RunError::Inconsistent(format!("round {} reviews papers outside the pool", record.round_index)));
            }
            state.rounds.push(record.clone());
        }
        state.calls = t.calls.clone();
        Ok(state)
    }
}

/// RNG for one round. Stream 0 is reserved for pool preparation.
fn round_rng(seed: u64, round: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    rng
}

/// Applies the configured variance filter and optional stratified subsample.
pub fn prepare_pool(config: &ExperimentConfig, pool: &[Paper]) -> Result<Vec<Paper>, PoolError> {
    let filtered = match config.max_variance {
        Some(v) => variance_filter(pool, v),
        None => pool.to_vec(),
    };
    match config.sample_size {
        Some(n) => {
            let mut rng = round_rng(config.rng_seed, 0);
            stratified_sample(&filtered, &config.interval_edges, n, &mut rng)
        }
        None => Ok(filtered),
    }
}

/// Partitions reviewers into one random disjoint triplet per paper.
pub fn assign_triplets<R: Rng + ?Sized>(
    reviewers: &[ReviewerId],
    papers: &[PaperId],
    rng: &mut R,
) -> Result<BTreeMap<PaperId, [ReviewerId; 3]>, RunError> {
    let distinct_r: BTreeSet<_> = reviewers.iter().collect();
    let distinct_p: BTreeSet<_> = papers.iter().collect();
    let needed = papers.len() * TRIPLET;
    if distinct_r.len() != reviewers.len() || distinct_p.len() != papers.len() || reviewers.len() < needed {
        return Err(RunError::Assignment { needed, papers: papers.len() });
    }
    let mut shuffled = reviewers.to_vec();
    shuffled.shuffle(rng);
    Ok(papers
        .iter()
        .zip(shuffled.chunks_exact(TRIPLET))
        .map(|(p, c)| (p.clone(), [c[0].clone(), c[1].clone(), c[2].clone()]))
        .collect())
}

/// Runs `f(0..n)` on scoped threads and returns results in index order.
fn fan_out<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if n <= 1 {
        return (0..n).map(&f).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n).map(|i| {
            let f = &f;
            s.spawn(move || f(i))
        }).collect();
        handles.into_iter().map(|h| h.join().expect("pipeline task panicked")).collect()
    })
}

/// Runs every task of a stage concurrently, then appends each task's calls in task order.
fn stage<T: Send>(
    n: usize,
    calls: &mut Vec<CallRecord>,
    f: impl Fn(usize, &CallLog) -> Result<T, AgentError> + Sync,
) -> Result<Vec<T>, AgentError> {
    let results = fan_out(n, |i| {
        let log = CallLog::new();
        let r = f(i, &log);
        (r, log.into_records())
    });
    let mut out = Vec::with_capacity(n);
    for (r, log) in results {
        calls.extend(log);
        out.push(r?);
    }
    Ok(out)
}

pub struct Engine<'a> {
    config: ExperimentConfig,
    personas: PersonaRegistry,
    provider: &'a dyn CompletionProvider,
}

impl<'a> Engine<'a> {
    pub fn new(config: ExperimentConfig, provider: &'a dyn CompletionProvider) -> Result<Self, RunError> {
        let config = validate_config(config).map_err(RunError::Config)?;
        Ok(Self { config, personas: PersonaRegistry::builtin(), provider })
    }

    pub fn with_personas(mut self, personas: PersonaRegistry) -> Self {
        self.personas = personas;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    /// Executes one round against a copy of `state`; on success the returned state includes it.
    pub fn run_round(&self, state: &ExperimentState) -> Result<(RoundRecord, ExperimentState), RunError> {
        let cfg = &self.config;
        let round = state.next_round();
        let wrap = |source| RunError::Round { round, source };
        let mode = cfg.mode;
        let mut rng = round_rng(cfg.rng_seed, round);

        let (papers, remaining) = draw_round_papers(&state.remaining, cfg.papers_per_round, &mut rng)?;
        let paper_ids: Vec<PaperId> = papers.iter().map(|p| p.id.clone()).collect();
        let reviewer_ids: Vec<ReviewerId> = state.reviewers.iter().map(|r| r.id.clone()).collect();
        let assignments = assign_triplets(&reviewer_ids, &paper_ids, &mut rng)?;
        let reviewer = |id: &str| state.reviewers.iter().find(|r| r.id == id).expect("assigned reviewers exist");

        // (paper index, reviewer) for every review slot, in paper then triplet order
        let slots: Vec<(usize, &ReviewerState)> = papers
            .iter()
            .enumerate()
            .flat_map(|(pi, p)| assignments[&p.id].iter().map(move |id| (pi, id)))
            .map(|(pi, id)| (pi, reviewer(id)))
            .collect();
        let settings = &cfg.provider;
        let provider = self.provider;
        let mut calls = Vec::new();

        let initial: Vec<Review> = stage(slots.len(), &mut calls, |i, log| {
            let (pi, r) = slots[i];
            let paper = &papers[pi];
            let bundle = build_initial_review_prompt(self.personas.get(r.persona), &r.memory, paper, mode)?;
            let tag = tags::review(round, &paper.id, &r.id, ReviewStage::Initial);
            ask(provider, log, settings, &bundle, tag, |raw| parse_review(raw, &paper.id, &r.id, ReviewStage::Initial))
        })
        .map_err(wrap)?;

        let second: Vec<Review> = stage(slots.len(), &mut calls, |i, log| {
            let (pi, r) = slots[i];
            let paper = &papers[pi];
            let own = &initial[i];
            let peers: Vec<Review> = (0..slots.len())
                .filter(|&j| j != i && slots[j].0 == pi)
                .map(|j| initial[j].clone())
                .collect();
            let bundle = build_second_review_prompt(self.personas.get(r.persona), &r.memory, paper, mode, own, &peers)?;
            let tag = tags::review(round, &paper.id, &r.id, ReviewStage::Second);
            ask(provider, log, settings, &bundle, tag, |raw| parse_review(raw, &paper.id, &r.id, ReviewStage::Second))
        })
        .map_err(wrap)?;

        let elos: BTreeMap<ReviewerId, i64> = state.reviewers.iter().map(|r| (r.id.clone(), r.elo)).collect();
        let outcomes: Vec<AcOutcome> = stage(papers.len(), &mut calls, |pi, log| {
            let paper = &papers[pi];
            let finals: Vec<Review> =
                slots.iter().zip(&second).filter(|((p, _), _)| *p == pi).map(|(_, r)| r.clone()).collect();
            let bundle = build_ac_prompt(paper, &finals, mode.ac_sees_elo(), &elos)?;
            let triplet = assignments[&paper.id].to_vec();
            ask(provider, log, settings, &bundle, tags::ac(round, &paper.id), |raw| parse_ac(raw, &paper.id, &triplet))
        })
        .map_err(wrap)?;

        let rewards = cfg.rank_reward();
        let triplet_deltas: Vec<(PaperId, BTreeMap<ReviewerId, i64>)> = outcomes
            .iter()
            .map(|o| Ok((o.paper_id.clone(), triplet_deltas(&o.quality_scores, rewards)?)))
            .collect::<Result<_, EloError>>()?;
        let mut reviewers = apply_round(&state.reviewers, round, &triplet_deltas)?;
        let elo_deltas: BTreeMap<ReviewerId, i64> =
            triplet_deltas.iter().flat_map(|(_, d)| d.iter().map(|(k, v)| (k.clone(), *v))).collect();

        if mode.has_memory() {
            let scores: BTreeMap<&str, u8> = outcomes
                .iter()
                .flat_map(|o| o.quality_scores.iter().map(|(k, v)| (k.as_str(), *v)))
                .collect();
            let memories: Vec<String> = stage(slots.len(), &mut calls, |i, log| {
                let r = slots[i].1;
                let bundle = build_memory_update_prompt(
                    self.personas.get(r.persona),
                    &r.memory,
                    elo_deltas[&r.id],
                    scores[r.id.as_str()],
                    cfg.memory_word_cap,
                    mode,
                )?;
                ask(provider, log, settings, &bundle, tags::memory(round, &r.id), |raw| {
                    parse_memory(raw, cfg.memory_word_cap)
                })
            })
            .map_err(wrap)?;
            for ((_, r), memory) in slots.iter().zip(memories) {
                let next = reviewers.iter_mut().find(|n| n.id == r.id).expect("reviewer exists");
                next.memory = memory;
            }
        }

        let record = RoundRecord {
            round_index: round,
            papers: paper_ids,
            assignments,
            initial_reviews: initial,
            second_reviews: second,
            ac_outcomes: outcomes,
            elo_deltas,
            elo_after: reviewers.iter().map(|r| (r.id.clone(), r.elo)).collect(),
            memory_after: reviewers.iter().map(|r| (r.id.clone(), r.memory.clone())).collect(),
        };
        debug_assert_eq!(record.check(), Ok(()));

        let mut next = state.clone();
        next.reviewers = reviewers;
        next.remaining = remaining;
        next.rounds.push(record.clone());
        next.calls.extend(calls);
        Ok((record, next))
    }

    /// Fresh state for `pool` after filtering and sampling.
    pub fn initial_state(&self, pool: &[Paper]) -> Result<ExperimentState, RunError> {
        let prepared = prepare_pool(&self.config, pool)?;
        let needed = self.config.rounds as usize * self.config.papers_per_round;
        if prepared.len() < needed {
            return Err(RunError::PoolTooSmall {
                needed,
                available: prepared.len(),
                rounds: self.config.rounds,
                per_round: self.config.papers_per_round,
            });
        }
        Ok(ExperimentState::new(self.config.clone(), prepared))
    }

    /// Runs rounds until `config.rounds` are complete, flushing the transcript after each.
    pub fn run_from(&self, state: ExperimentState, out: Option<&Path>) -> Result<Transcript, RunError> {
        self.run_until(state, out, self.config.rounds)
    }

    /// As [`Engine::run_from`], but stops once `last_round` rounds exist.
    pub fn run_until(&self, mut state: ExperimentState, out: Option<&Path>, last_round: u32) -> Result<Transcript, RunError> {
        if let Some(path) = out {
            state.transcript().write_atomic(path)?;
        }
        let last = last_round.min(self.config.rounds) as usize;
        while state.rounds.len() < last {
            let (_, next) = self.run_round(&state)?;
            state = next;
            debug_assert_eq!(state.total_elo(), REVIEWER_COUNT as i64 * self.config.initial_elo);
            if let Some(path) = out {
                state.transcript().write_atomic(path)?;
            }
        }
        Ok(state.transcript())
    }
}

pub fn run_experiment(
    config: ExperimentConfig,
    pool: &[Paper],
    provider: &dyn CompletionProvider,
    out: Option<&Path>,
) -> Result<Transcript, RunError> {
    let engine = Engine::new(config, provider)?;
    let state = engine.initial_state(pool)?;
    engine.run_from(state, out)
}

/// Continues the run recorded at `path`, rewriting it in place.
pub fn resume_experiment(path: &Path, provider: &dyn CompletionProvider) -> Result<Transcript, RunError> {
    let transcript = Transcript::read(path)?;
    let state = ExperimentState::from_transcript(&transcript)?;
    let engine = Engine::new(transcript.header.config.clone(), provider)?;
    engine.run_from(state, Some(path))
}

/// Tags that a complete call log must answer for the given rounds.
pub fn required_tags(config: &ExperimentConfig, rounds: &[RoundRecord]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rounds {
        for stage in [ReviewStage::Initial, ReviewStage::Second] {
            for p in &r.papers {
                for id in &r.assignments[p] {
                    out.push(tags::review(r.round_index, p, id, stage));
                }
            }
        }
        for p in &r.papers {
            out.push(tags::ac(r.round_index, p));
        }
        if config.mode.has_memory() {
            for p in &r.papers {
                for id in &r.assignments[p] {
                    out.push(tags::memory(r.round_index, id));
                }
            }
        }
    }
    out
}

/// Scripted provider answering every call exactly as logged in `t`.
pub fn scripted_from_transcript(t: &Transcript) -> Result<ScriptedProvider, ProviderError> {
    let required = required_tags(&t.header.config, &t.rounds);
    ScriptedProvider::from_call_log(&t.calls, required.iter().map(String::as_str))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub matched: bool,
    /// First round whose record differs, if any.
    pub first_mismatch: Option<u32>,
    pub replayed: Transcript,
}

/// Re-runs a transcript's rounds against its own call log and compares round records byte for byte.
pub fn replay_transcript(t: &Transcript) -> Result<ReplayOutcome, RunError> {
    let provider = scripted_from_transcript(t).map_err(|e| RunError::Round { round: 0, source: e.into() })?;
    let mut config = t.header.config.clone();
    config.rounds = t.rounds.len() as u32;
    let engine = Engine::new(config.clone(), &provider)?;
    let state = ExperimentState::new(config, t.header.pool.clone());
    let mut replayed = engine.run_from(state, None)?;
    replayed.header.config.rounds = t.header.config.rounds;
    let first_mismatch = t
        .rounds
        .iter()
        .zip(&replayed.rounds)
        .find(|(a, b)| serde_json::to_vec(a).ok() != serde_json::to_vec(b).ok())
        .map(|(a, _)| a.round_index);
    let matched = first_mismatch.is_none() && t.rounds_bytes() == replayed.rounds_bytes();
    Ok(ReplayOutcome { matched, first_mismatch, replayed })
}

pub use agent::CallKind;
