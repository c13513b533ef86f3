use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use eloreview_core::agent::PersonaRegistry;
use eloreview_core::orchestrator::{scripted_from_transcript, Engine, ExperimentState};
use eloreview_core::pool::{load_pool, write_pool};
use eloreview_core::provider::{CompletionProvider, LiveProvider};
use eloreview_core::{
    default_roster, emit_report, replay_transcript, synthetic_pool, ExperimentConfig, Mode, PersonaSimulator,
    ScriptedProvider, Transcript,
};

#[derive(Parser)]
#[command(name = "eloreview", version, about = "Elo-ranked peer-review simulation")]
struct Cli {
    /// Emit diagnostics on stderr as JSON lines.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Live,
    Scripted,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its transcript.
    Run {
        /// TOML experiment config; defaults apply to omitted keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Paper pool (JSONL). Not needed with --resume.
        #[arg(long, required_unless_present = "resume")]
        pool: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Transcript path; rewritten after every round.
        #[arg(long, required_unless_present = "resume")]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "scripted")]
        provider: ProviderKind,
        /// Scripted answers: a transcript, or JSONL lines of {"tag", "text"}.
        /// Without it the scripted provider simulates the personas.
        #[arg(long)]
        script: Option<PathBuf>,
        /// Continue the transcript at this path.
        #[arg(long, conflicts_with_all = ["pool", "out", "config", "mode", "seed"])]
        resume: Option<PathBuf>,
        /// Directory of persona JSON files replacing the built-in ones.
        #[arg(long)]
        personas: Option<PathBuf>,
        /// Stop after this many rounds, leaving a resumable transcript.
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Write metrics.csv, trajectories.csv, elo.svg and report.txt.
    Report {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a transcript against its own call log and compare round records.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
    },
    /// Check a paper pool file.
    ValidatePool { path: PathBuf },
    /// Generate a synthetic paper pool.
    GenPool {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            if json {
                let chain: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
                eprintln!("{}", json!({"level": "error", "message": e.to_string(), "causes": chain}));
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, pool, mode, seed, out, provider, script, resume, personas, stop_after } => {
            let personas = match personas {
                Some(dir) => PersonaRegistry::load_dir(&dir).with_context(|| format!("loading personas from {}", dir.display()))?,
                None => PersonaRegistry::builtin(),
            };
            let (state, path) = match resume {
                Some(path) => {
                    let t = Transcript::read(&path)?;
                    (ExperimentState::from_transcript(&t)?, path)
                }
                None => {
                    let mut cfg = match &config {
                        Some(p) => ExperimentConfig::load(p)?,
                        None => ExperimentConfig::default(),
                    };
                    if let Some(m) = mode {
                        cfg.mode = m;
                    }
                    if let Some(s) = seed {
                        cfg.rng_seed = s;
                    }
                    let pool_path = pool.expect("clap enforces --pool");
                    let pool = load_pool(&pool_path)?;
                    let provider = ScriptedProvider::new(BTreeMap::new());
                    let state = Engine::new(cfg, &provider)?.initial_state(&pool)?;
                    (state, out.expect("clap enforces --out"))
                }
            };
            let provider = make_provider(provider, script.as_deref(), &state)?;
            let engine = Engine::new(state.config.clone(), provider.as_ref())?.with_personas(personas);
            let limit = stop_after.unwrap_or(state.config.rounds);
            let t = engine.run_until(state, Some(&path), limit)?;
            let last: Vec<String> = t
                .rounds
                .last()
                .map(|r| r.elo_after.iter().map(|(k, v)| format!("{k}={v}")).collect())
                .unwrap_or_default();
            println!("{} rounds ({}) written to {}", t.rounds.len(), t.header.config.mode, path.display());
            if !last.is_empty() {
                println!("Elo: {}", last.join(" "));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { transcript, out } => {
            let t = Transcript::read(&transcript)?;
            for p in emit_report(&t, &out)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { transcript } => {
            let t = Transcript::read(&transcript)?;
            let outcome = replay_transcript(&t)?;
            if outcome.matched {
                println!("MATCH");
                Ok(ExitCode::SUCCESS)
            } else {
                let round = outcome.first_mismatch.map(|r| r.to_string()).unwrap_or_else(|| "?".into());
                println!("MISMATCH at round {round}");
                Ok(ExitCode::from(1))
            }
        }
        Command::ValidatePool { path } => match load_pool(&path) {
            Ok(papers) => {
                println!("{}: {} papers OK", path.display(), papers.len());
                Ok(ExitCode::SUCCESS)
            }
            Err(e) => {
                if cli.json {
                    eprintln!("{}", json!({"level": "error", "path": path.display().to_string(), "message": e.to_string()}));
                } else {
                    eprintln!("invalid pool: {e}");
                }
                Ok(ExitCode::from(1))
            }
        },
        Command::GenPool { n, seed, out } => {
            if n == 0 {
                bail!("--n must be at least 1");
            }
            let papers = synthetic_pool(n, seed);
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_pool(std::io::BufWriter::new(file), &papers).with_context(|| format!("writing {}", out.display()))?;
            println!("{} papers written to {}", papers.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn make_provider(kind: ProviderKind, script: Option<&Path>, state: &ExperimentState) -> Result<Box<dyn CompletionProvider>> {
    Ok(match (kind, script) {
        (ProviderKind::Live, Some(_)) => bail!("--script only applies to the scripted provider"),
        (ProviderKind::Live, None) => Box::new(LiveProvider::from_env(state.config.provider.clone())?),
        (ProviderKind::Scripted, Some(path)) => Box::new(load_script(path)?),
        (ProviderKind::Scripted, None) => Box::new(ScriptedProvider::with_responder(PersonaSimulator::new(
            &state.pool,
            &default_roster(state.config.initial_elo),
            state.config.rng_seed,
        ))),
    })
}

/// A transcript's call log, or a table of `{"tag": ..., "text": ...}` lines.
fn load_script(path: &Path) -> Result<ScriptedProvider> {
    let file = std::fs::File::open(path).with_context(|| format!("opening script {}", path.display()))?;
    let mut lines = BufReader::new(file).lines();
    let first = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => bail!("script {} is empty", path.display()),
        }
    };
    let head: Value = serde_json::from_str(&first).with_context(|| format!("{}:1: not JSON", path.display()))?;
    if head.get("kind").and_then(Value::as_str) == Some("header") {
        let t = Transcript::read(path)?;
        return Ok(scripted_from_transcript(&t)?);
    }
    let mut table = BTreeMap::new();
    for (i, line) in std::iter::once(Ok(first)).chain(lines).enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value = serde_json::from_str(&line).with_context(|| format!("{}:{}: not JSON", path.display(), i + 1))?;
        let (Some(tag), Some(text)) = (v.get("tag").and_then(Value::as_str), v.get("text").and_then(Value::as_str)) else {
            bail!("{}:{}: expected {{\"tag\", \"text\"}}", path.display(), i + 1);
        };
        table.insert(tag.to_string(), text.to_string());
    }
    Ok(ScriptedProvider::new(table))
}
