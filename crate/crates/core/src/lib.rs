//! Elo-ranked peer-review simulation: persona-driven reviewers and an area chair
//! review papers in rounds, earn zero-sum rank-based Elo, and leave a replayable
//! transcript behind.

pub mod agent;
pub mod config;
pub mod domain;
pub mod elo;
pub mod metrics;
pub mod orchestrator;
pub mod pool;
pub mod provider;
pub mod report;
pub mod transcript;

pub use config::{validate_config, ConfigError, ConfigViolation, ExperimentConfig, ProviderSettings};
pub use domain::{
    default_roster, AcOutcome, Decision, Mode, Paper, PaperId, PersonaId, Review, ReviewStage, ReviewerId,
    ReviewerState, RoundRecord,
};
pub use elo::{apply_round, elo_deltas, rank_triplet, triplet_deltas, EloError, RankReward, Ranking};
pub use metrics::{confusion, metrics, ConfusionCounts, MetricsReport, Scores, Trajectory};
pub use orchestrator::{
    assign_triplets, replay_transcript, resume_experiment, run_experiment, Engine, ExperimentState, RunError,
};
pub use pool::{load_pool, stratified_sample, synthetic_pool, variance_filter, PoolError};
pub use provider::{CallLog, CallRecord, CompletionProvider, CompletionRequest, PersonaSimulator, ScriptedProvider};
pub use report::emit_report;
pub use transcript::{Transcript, TranscriptError};
