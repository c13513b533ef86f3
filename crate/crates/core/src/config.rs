//! Experiment configuration, its TOML file form, and validation.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::Mode;
use crate::elo::RankReward;

/// Reviewers in every experiment: one per persona.
pub const REVIEWER_COUNT: usize = 6;
/// Reviewers assigned to each paper.
pub const TRIPLET: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Retries after the first attempt for transient transport failures.
    pub max_retries: u32,
    /// First backoff delay; doubles on each retry.
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub max_in_flight: usize,
    pub requests_per_second: f64,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            endpoint: "https://generativelanguage.googleapis.com/v1beta/openai/chat/completions"
                .into(),
            model: "gemini-2.5-flash".into(),
            temperature: 0.0,
            max_output_tokens: 2048,
            max_retries: 3,
            backoff_ms: 500,
            timeout_secs: 120,
            max_in_flight: 4,
            requests_per_second: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub rounds: u32,
    pub papers_per_round: usize,
    pub initial_elo: i64,
    pub rng_seed: u64,
    pub memory_word_cap: usize,
    /// Papers with a larger rating variance are dropped before sampling. `None` disables the filter.
    pub max_variance: Option<f64>,
    /// Bucket edges for stratified sampling; the last bucket is closed on the right.
    pub interval_edges: Vec<f64>,
    /// When set, the filtered pool is stratified-sampled down to this many papers.
    pub sample_size: Option<usize>,
    pub base_rewards: [i64; 3],
    pub provider: ProviderSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            rounds: 30,
            papers_per_round: 2,
            initial_elo: 1500,
            rng_seed: 0,
            memory_word_cap: 150,
            max_variance: Some(2.0),
            interval_edges: vec![1.0, 3.0, 5.0, 7.0, 9.0, 10.0],
            sample_size: None,
            base_rewards: RankReward::default().base_rewards(),
            provider: ProviderSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigViolation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ConfigViolation>),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config is always representable as TOML")
    }

    pub fn rank_reward(&self) -> RankReward {
        RankReward::new(self.base_rewards).unwrap_or_default()
    }
}

/// Returns the config unchanged when every invariant holds, otherwise every violation found.
pub fn validate_config(config: ExperimentConfig) -> Result<ExperimentConfig, Vec<ConfigViolation>> {
    let mut out = Vec::new();
    let mut bad = |field: &'static str, message: String| out.push(ConfigViolation { field, message });

    if config.rounds < 1 {
        bad("rounds", "rounds must be ≥ 1".into());
    }
    if config.papers_per_round < 1 {
        bad("papers_per_round", "papers_per_round must be ≥ 1".into());
    } else if config.papers_per_round * TRIPLET > REVIEWER_COUNT {
        bad(
            "papers_per_round",
            format!(
                "insufficient reviewers: {} papers × {TRIPLET} reviewers > {REVIEWER_COUNT}",
                config.papers_per_round
            ),
        );
    }
    if config.memory_word_cap < 1 {
        bad("memory_word_cap", "memory_word_cap must be ≥ 1".into());
    }
    if let Some(v) = config.max_variance {
        if v.is_nan() || v < 0.0 {
            bad("max_variance", format!("max_variance {v} must be ≥ 0"));
        }
    }
    if config.interval_edges.len() < 2 {
        bad("interval_edges", "at least two edges are required".into());
    } else if config.interval_edges.iter().any(|e| !e.is_finite())
        || config.interval_edges.windows(2).any(|w| w[0] >= w[1])
    {
        bad("interval_edges", "edges must be finite and strictly ascending".into());
    }
    if let Some(n) = config.sample_size {
        if n < config.rounds as usize * config.papers_per_round {
            bad(
                "sample_size",
                format!("sample_size {n} is smaller than rounds × papers_per_round"),
            );
        }
    }
    if let Err(e) = RankReward::new(config.base_rewards) {
        bad("base_rewards", e.to_string());
    }
    let p = &config.provider;
    if !p.temperature.is_finite() || p.temperature < 0.0 {
        bad("provider.temperature", format!("temperature {} must be ≥ 0", p.temperature));
    }
    if p.max_output_tokens == 0 {
        bad("provider.max_output_tokens", "must be ≥ 1".into());
    }
    if p.max_in_flight == 0 {
        bad("provider.max_in_flight", "must be ≥ 1".into());
    }
    if p.requests_per_second.is_nan() || p.requests_per_second <= 0.0 {
        bad("provider.requests_per_second", "must be > 0".into());
    }

    if out.is_empty() {
        Ok(config)
    } else {
        Err(out)
    }
}
