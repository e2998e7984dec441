//! `dyadic` command-line front end.
//!
//! Every subcommand is deterministic under `--stub --seed N`. Runtime
//! failures surface as [`CliError`], which `main` prints to stderr as one
//! JSON object and maps to exit status 1. Usage errors exit with 2.

pub mod http;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dyadic_core::agent::{analyze_dialogue, network_requests, plan_scene, AgentError, PortError, ProxemicSetup, SceneContext};
use dyadic_core::config::ConfigError;
use dyadic_core::io::{eval_report, export_bvh, load_trace, load_transcript, save_trace, write_atomic};
use dyadic_core::metrics::DmssConfig;
use dyadic_core::{run_dialogue, CharacterId, EngineConfig, IoError, LlmPort, RuleStub, RunOptions};
use serde::Serialize;
use thiserror::Error;

use crate::http::{HttpPort, HttpSettings};

#[derive(Debug, Parser)]
#[command(name = "dyadic", version, about = "Two-character conversational motion generation")]
pub struct Cli {
    /// Log request and reply bodies instead of their hashes.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyse a transcript and print the initial proxemic setup as JSON.
    PlanScene {
        transcript: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        /// Write the JSON here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Generate a motion trace for a transcript.
    Run {
        transcript: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Override the round count derived from the transcript length.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        rounds: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Synchrony report for one trace, or two traces compared.
    Eval {
        #[arg(required = true, num_args = 1..=2)]
        traces: Vec<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write each character of a trace as a BVH file.
    Export {
        trace: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Export only this character (`I` or `II`).
        #[arg(long, value_parser = parse_character)]
        character: Option<CharacterId>,
    },
    /// Print the default engine configuration as TOML.
    DefaultConfig,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    /// Offline rule table instead of a language model (the default).
    #[arg(long, conflicts_with = "llm")]
    pub stub: bool,
    /// Chat-completions endpoint configured through the environment.
    #[arg(long)]
    pub llm: bool,
    /// Engine configuration TOML.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_character(s: &str) -> Result<CharacterId, String> {
    match s {
        "I" | "i" | "1" => Ok(CharacterId::I),
        "II" | "ii" | "2" => Ok(CharacterId::II),
        _ => Err(format!("unknown character `{s}`, expected I or II")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    round: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    path: Option<&'a Path>,
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

fn agent_kind(e: &AgentError) -> (&'static str, Option<usize>) {
    match e {
        AgentError::Round { round, source } => (agent_kind(source).0, Some(*round)),
        AgentError::Port(PortError::Config(_)) => ("config", None),
        AgentError::Port(_) => ("transport", None),
        AgentError::Protocol { .. } => ("protocol", None),
        AgentError::Precondition(_) => ("precondition", None),
        AgentError::PlanInconsistent(_) => ("plan_inconsistent", None),
        AgentError::TriggerWordNotFound(_) => ("trigger_word_not_found", None),
        AgentError::Compile(_) => ("compile", None),
        AgentError::Diffusion(_) | AgentError::Motion(_) | AgentError::Proxemics(_) => ("generation", None),
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(e) => match e {
                IoError::Io { .. } => "io",
                IoError::Parse { .. } => "parse",
                IoError::Validation { .. } => "validation",
                IoError::UnsupportedVersion { .. } => "unsupported_version",
                IoError::MissingHierarchy(_) => "missing_hierarchy",
                IoError::Metrics(_) => "metrics",
            },
            CliError::Agent(e) => agent_kind(e).0,
        }
    }

    /// One-line JSON object for stderr.
    pub fn to_json(&self) -> String {
        let (round, path) = match self {
            CliError::Agent(e) => (agent_kind(e).1, None),
            CliError::Io(IoError::Io { path, .. }) => (None, Some(path.as_path())),
            _ => (None, None),
        };
        let report = ErrorReport {
            error: ErrorBody {
                kind: self.kind(),
                message: self.to_string(),
                round,
                path,
            },
        };
        serde_json::to_string(&report).expect("error serializes")
    }
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, CliError> {
    let Some(path) = path else {
        return Ok(EngineConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    EngineConfig::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// The stub, or the HTTP port with its settings checked before any request.
fn make_port(engine: &EngineArgs, config: &EngineConfig, verbose: bool) -> Result<Box<dyn LlmPort>, CliError> {
    if engine.llm {
        let settings = HttpSettings::from_env().map_err(AgentError::Port)?;
        Ok(Box::new(HttpPort::new(settings).with_verbose(verbose)))
    } else {
        Ok(Box::new(RuleStub::new(config.stub.clone())))
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(path, bytes)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes).and_then(|_| stdout.flush()).map_err(|source| IoError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct ScenePlan {
    scene: SceneContext,
    setup: ProxemicSetup,
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("output serializes");
    bytes.push(b'\n');
    bytes
}

/// Executes one parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Command::PlanScene { transcript, engine, out } => {
            let config = load_config(engine.config.as_deref())?;
            let port = make_port(&engine, &config, verbose)?;
            let transcript = load_transcript(&transcript)?;
            let mut log = Vec::new();
            let scene = analyze_dialogue(&transcript.words, &transcript.hints, port.as_ref(), &mut log)?;
            let setup = plan_scene(&scene, port.as_ref(), &mut log)?;
            emit(out.as_deref(), &pretty(&ScenePlan { scene, setup }))
        }
        Command::Run {
            transcript,
            engine,
            seed,
            rounds,
            out,
        } => {
            let config = load_config(engine.config.as_deref())?;
            let port = make_port(&engine, &config, verbose)?;
            let transcript = load_transcript(&transcript)?;
            let denoiser = config.reference_denoiser().map_err(AgentError::from)?;
            let options = RunOptions {
                seed,
                rounds: rounds.map(|r| r as usize),
            };
            let before = network_requests();
            let trace = run_dialogue(&transcript, &config, port.as_ref(), &denoiser, &options)?;
            save_trace(&out, &trace)?;
            println!(
                "wrote {}: {} rounds, {} frames, {} network requests",
                out.display(),
                trace.rounds.len(),
                trace.total_frames(),
                network_requests() - before
            );
            Ok(())
        }
        Command::Eval { traces, out } => {
            let loaded = traces.iter().map(|p| load_trace(p)).collect::<Result<Vec<_>, _>>()?;
            let labels: Vec<String> = traces.iter().map(|p| p.display().to_string()).collect();
            let pairs: Vec<(&str, _)> = labels.iter().map(String::as_str).zip(loaded.iter()).collect();
            let report = eval_report(&pairs, &DmssConfig::default())?;
            emit(out.as_deref(), &report.to_json_bytes())
        }
        Command::Export {
            trace,
            out_dir,
            character,
        } => {
            let loaded = load_trace(&trace)?;
            fs::create_dir_all(&out_dir).map_err(|source| IoError::Io {
                path: out_dir.clone(),
                source,
            })?;
            let stem = trace.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned());
            let who: Vec<CharacterId> = character.map_or(CharacterId::BOTH.to_vec(), |c| vec![c]);
            for c in who {
                let path = out_dir.join(format!("{stem}.{c}.bvh"));
                export_bvh(&loaded, c, &path)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::DefaultConfig => emit(None, EngineConfig::default().to_toml_string().as_bytes()),
    }
}
