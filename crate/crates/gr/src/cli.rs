//! Command-line entry points: `run`, `replay` and `serve`.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use guided_reasoning::gateway::{Model, Transcript};
use guided_reasoning::guide::{Guide, GuideConfig, GuideKind, GuideSession, SessionState};
use guided_reasoning::prompts::PromptTemplates;

use crate::backend::{self, Settings, TranscriptFile, CLIENT, EXPERT};
use crate::config::Config;
use crate::service::{self, AppState};
use crate::store::SessionStore;

pub const EXIT_DELIVERED: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gr", version, about = "Guided pros/cons deliberation with a client and an expert model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a guide on a problem and write its artifacts.
    Run {
        #[arg(long)]
        problem_file: PathBuf,
        #[arg(long, default_value = "pros_cons")]
        guide: GuideKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run a recorded session from its transcript.json.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        /// Defaults to a `replay` directory next to the transcript.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory for session documents; sessions are kept in memory only
        /// when omitted.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn usage_error(message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}\n\n{}", Cli::command().render_usage());
    EXIT_USAGE
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::Run {
            problem_file,
            guide,
            config,
            out_dir,
        } => run(&problem_file, guide, &config, &out_dir),
        Command::Replay { transcript, out_dir } => {
            let out = out_dir.unwrap_or_else(|| {
                transcript
                    .parent()
                    .unwrap_or(Path::new("."))
                    .join("replay")
            });
            replay(&transcript, &out)
        }
        Command::Serve {
            config,
            addr,
            data_dir,
        } => serve(&config, addr, data_dir),
    }
}

/// A guide run apart from its models.
struct Job<'a> {
    problem: &'a str,
    kind: GuideKind,
    templates: PromptTemplates,
    config: GuideConfig,
    templates_dir: Option<PathBuf>,
}

/// Runs `job` with recorded models and writes all artifacts.
fn execute(job: Job<'_>, client: &Model, expert: &Model, out_dir: &Path) -> i32 {
    let Job {
        problem,
        kind,
        templates,
        config,
        templates_dir,
    } = job;
    let mut session = match GuideSession::new("local", kind, problem) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let transcript = Transcript::new();
    let guide = Guide::new(
        backend::record(client, CLIENT, &transcript),
        backend::record(expert, EXPERT, &transcript),
        templates,
        config.clone(),
    );
    if let Err(e) = guide.run(&mut session, &mut |stage, _| log::info!("completed stage {}", stage.as_str())) {
        return usage_error(e);
    }
    let file = TranscriptFile {
        problem: problem.to_string(),
        guide: kind,
        settings: Settings {
            client: client.into(),
            expert: expert.into(),
            guide: config,
            templates: templates_dir,
        },
        exchanges: transcript.exchanges(),
    };
    match backend::write_artifacts(out_dir, &session, &file) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: cannot write artifacts to {}: {e}", out_dir.display());
            return EXIT_FAILED;
        }
    }
    match (&session.state, &session.failure) {
        (SessionState::Delivered, _) => EXIT_DELIVERED,
        (_, Some(f)) => {
            eprintln!("deliberation failed at stage {}: {}", f.stage.as_str(), f.cause);
            EXIT_FAILED
        }
        _ => EXIT_FAILED,
    }
}

fn run(problem_file: &Path, kind: GuideKind, config: &Path, out_dir: &Path) -> i32 {
    let problem = match std::fs::read_to_string(problem_file) {
        Ok(p) => p.trim().to_string(),
        Err(e) => return usage_error(format!("cannot read problem file {}: {e}", problem_file.display())),
    };
    let cfg = match Config::load(config) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let (client, expert) = match backend::connect(&cfg) {
        Ok(m) => m,
        Err(e) => return usage_error(e),
    };
    let templates = match backend::templates(&cfg) {
        Ok(t) => t,
        Err(e) => return usage_error(e),
    };
    let job = Job {
        problem: &problem,
        kind,
        templates,
        config: cfg.guide_config(),
        templates_dir: cfg.templates.clone(),
    };
    execute(job, &client, &expert, out_dir)
}

fn replay(transcript: &Path, out_dir: &Path) -> i32 {
    let file = match TranscriptFile::load(transcript) {
        Ok(f) => f,
        Err(e) => return usage_error(e),
    };
    let templates = match file.templates() {
        Ok(t) => t,
        Err(e) => return usage_error(e),
    };
    let (client, expert) = file.replay_models();
    let job = Job {
        problem: &file.problem,
        kind: file.guide,
        templates,
        config: file.settings.guide.clone(),
        templates_dir: file.settings.templates.clone(),
    };
    execute(job, &client, &expert, out_dir)
}

fn serve(config: &Path, addr: SocketAddr, data_dir: Option<PathBuf>) -> i32 {
    let cfg = match Config::load(config) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let store = match data_dir.map(SessionStore::open).transpose() {
        Ok(s) => s,
        Err(e) => return usage_error(format!("cannot open data directory: {e}")),
    };
    let app = match AppState::from_config(&cfg, store) {
        Ok(a) => a,
        Err(e) => return usage_error(e),
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return EXIT_FAILED;
        }
    };
    let result = rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("listening on {}", listener.local_addr()?);
        service::serve(listener, app).await
    });
    match result {
        Ok(()) => EXIT_DELIVERED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAILED
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_run() {
        let cli = Cli::try_parse_from([
            "gr",
            "run",
            "--problem-file",
            "p.txt",
            "--guide",
            "suspension",
            "--config",
            "c.toml",
            "--out-dir",
            "out",
        ])
        .unwrap();
        match cli.command {
            Command::Run { guide, .. } => assert_eq!(guide, GuideKind::Suspension),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(main_with_args(["gr", "run", "--guide", "pros_cons"]), EXIT_USAGE);
        assert_eq!(main_with_args(["gr", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            main_with_args([
                "gr",
                "run",
                "--problem-file",
                "p.txt",
                "--guide",
                "nope",
                "--config",
                "c",
                "--out-dir",
                "o"
            ]),
            EXIT_USAGE
        );
    }
}
