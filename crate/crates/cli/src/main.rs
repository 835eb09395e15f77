//! `privbench`: run evaluation suites, replay trajectories, re-score logs,
//! and edit profile seed files.
//!
//! Exit codes: 0 on success, 2 on validation failures (bad suites, bad
//! arguments, digest mismatches), 3 on I/O failures. Every flag can also be
//! set through a `PRIVBENCH_*` environment variable.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use privbench_core::agent::{PolicyKind, TrajectoryError};
use privbench_core::auditor::PenaltySchedule;
use privbench_core::profile::{Level, ProfileSeed};
use privbench_core::runner::{
    replay_file, run_suite, score_run_dir, PolicySelector, RunConfig, RunnerError,
};
use privbench_core::suite::SuiteError;

const EXIT_VALIDATION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "privbench",
    version,
    about = "Deterministic privacy-behavior evaluation harness for GUI agents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task and pair of a suite under one policy.
    Run(RunArgs),
    /// Re-execute a recorded trajectory and verify its state digest.
    Replay(ReplayArgs),
    /// Recompute reports and the aggregate from a run directory's logs.
    Score(ScoreArgs),
    /// List or edit the items of a profile seed file.
    Profile(ProfileArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Suite directory (or path to its suite.json).
    #[arg(long, env = "PRIVBENCH_SUITE")]
    suite: PathBuf,
    /// Policy: oracle_minimal, oracle_no_save, greedy_completionist,
    /// random, or external (requires --endpoint-cmd).
    #[arg(long, env = "PRIVBENCH_POLICY", default_value = "oracle_minimal")]
    policy: String,
    /// Command line for an external agent speaking the wire protocol.
    #[arg(long, env = "PRIVBENCH_ENDPOINT_CMD")]
    endpoint_cmd: Option<String>,
    /// Seed for the per-episode policy RNG.
    #[arg(long, env = "PRIVBENCH_SEED", default_value_t = 0)]
    seed: u64,
    /// Episode-level parallelism.
    #[arg(long, env = "PRIVBENCH_JOBS", default_value_t = 1)]
    jobs: usize,
    /// Privacy threshold for PQSR (defaults to the suite's).
    #[arg(long, env = "PRIVBENCH_TAU")]
    tau: Option<f64>,
    /// Comma-separated threshold grid; writes sweep.json.
    #[arg(long, env = "PRIVBENCH_TAU_GRID", value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    /// Penalty schedule override, e.g.
    /// "plausible=0.25,unnecessary=0.5,forbidden=1.0,fm=0.25".
    #[arg(long, env = "PRIVBENCH_SCHEDULE")]
    schedule: Option<String>,
    /// Output directory for trajectories, reports, and aggregates.
    #[arg(long, env = "PRIVBENCH_OUT")]
    out: PathBuf,
    /// Per-step timeout for external endpoints, in seconds.
    #[arg(long, env = "PRIVBENCH_STEP_TIMEOUT_SECS", default_value_t = 30)]
    step_timeout_secs: u64,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trajectory file to re-execute.
    trajectory: PathBuf,
    /// Suite directory; defaults to the `suite/` copy next to the
    /// trajectory's run directory.
    #[arg(long, env = "PRIVBENCH_SUITE")]
    suite: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    /// A finished run directory (with suite/ and trajectories/).
    run_dir: PathBuf,
    /// Where to write the recomputed reports (default: RUN_DIR/rescore).
    #[arg(long, env = "PRIVBENCH_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "PRIVBENCH_TAU")]
    tau: Option<f64>,
    #[arg(long, env = "PRIVBENCH_TAU_GRID", value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    /// Penalty schedule override (same format as `run --schedule`).
    #[arg(long, env = "PRIVBENCH_SCHEDULE")]
    schedule: Option<String>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Profile seed file.
    file: PathBuf,
    #[command(subcommand)]
    action: ProfileAction,
}

#[derive(Subcommand)]
enum ProfileAction {
    /// Print items grouped by sensitivity level.
    List,
    /// Create an item or edit its value (and optionally its level).
    Set {
        key: String,
        value: String,
        #[arg(long)]
        level: Option<String>,
    },
    /// Remove an item.
    Delete { key: String },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn runner_exit_code(err: &RunnerError) -> u8 {
    match err {
        RunnerError::Io { .. } | RunnerError::Endpoint { .. } => EXIT_IO,
        RunnerError::Suite(SuiteError::Io { .. }) => EXIT_IO,
        RunnerError::Trajectory(TrajectoryError::Io { .. }) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

fn parse_schedule(spec: &str) -> Result<PenaltySchedule, String> {
    let mut schedule = PenaltySchedule::default();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got '{part}'"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| format!("'{value}' is not a number"))?;
        match key.trim() {
            "plausible" => schedule.plausible = value,
            "unnecessary" => schedule.unnecessary = value,
            "forbidden" => schedule.forbidden = value,
            "fm" | "fm_per_field" => schedule.fm_per_field = value,
            other => return Err(format!("unknown schedule grade '{other}'")),
        }
    }
    schedule.validate().map_err(|e| e.to_string())?;
    Ok(schedule)
}

fn check_tau(tau: Option<f64>) -> Result<(), String> {
    match tau {
        Some(t) if !(0.0..=1.0).contains(&t) => Err(format!("tau must be in [0,1], got {t}")),
        _ => Ok(()),
    }
}

fn cmd_run(args: RunArgs) -> ExitCode {
    if let Err(msg) = check_tau(args.tau) {
        return fail(EXIT_VALIDATION, msg);
    }
    let schedule = match args.schedule.as_deref().map(parse_schedule).transpose() {
        Ok(schedule) => schedule,
        Err(msg) => return fail(EXIT_VALIDATION, msg),
    };
    let policy = if args.policy == "external" {
        let Some(command) = args.endpoint_cmd.clone() else {
            return fail(EXIT_VALIDATION, "--policy external requires --endpoint-cmd");
        };
        PolicySelector::External {
            command,
            step_timeout: Duration::from_secs(args.step_timeout_secs),
        }
    } else {
        match args.policy.parse::<PolicyKind>() {
            Ok(kind) => PolicySelector::Baseline(kind),
            Err(msg) => return fail(EXIT_VALIDATION, msg),
        }
    };
    if args.jobs == 0 {
        return fail(EXIT_VALIDATION, "--jobs must be at least 1");
    }

    let config = RunConfig {
        suite_dir: args.suite,
        out_dir: args.out,
        policy,
        rng_seed: args.seed,
        jobs: args.jobs,
        tau: args.tau,
        tau_grid: args.tau_grid,
        schedule,
    };
    match run_suite(&config) {
        Ok(summary) => {
            print!("{}", summary.aggregate.render_text());
            println!(
                "\n{} episodes written under {}",
                summary.episodes,
                summary.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(err) => fail(runner_exit_code(&err), err),
    }
}

fn cmd_replay(args: ReplayArgs) -> ExitCode {
    match replay_file(&args.trajectory, args.suite.as_deref()) {
        Ok(episode) => {
            println!(
                "replay ok: task {} verified, digest {}",
                episode.task_id, episode.final_state_digest
            );
            ExitCode::SUCCESS
        }
        Err(err) => fail(runner_exit_code(&err), err),
    }
}

fn cmd_score(args: ScoreArgs) -> ExitCode {
    if let Err(msg) = check_tau(args.tau) {
        return fail(EXIT_VALIDATION, msg);
    }
    let schedule = match args.schedule.as_deref().map(parse_schedule).transpose() {
        Ok(schedule) => schedule,
        Err(msg) => return fail(EXIT_VALIDATION, msg),
    };
    let out = args
        .out
        .unwrap_or_else(|| args.run_dir.join("rescore"));
    match score_run_dir(&args.run_dir, &out, schedule, args.tau, args.tau_grid) {
        Ok(summary) => {
            print!("{}", summary.aggregate.render_text());
            println!("\nreports written under {}", out.display());
            ExitCode::SUCCESS
        }
        Err(err) => fail(runner_exit_code(&err), err),
    }
}

fn load_profile(path: &PathBuf) -> Result<ProfileSeed, (u8, String)> {
    let body = std::fs::read_to_string(path)
        .map_err(|e| (EXIT_IO, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&body)
        .map_err(|e| (EXIT_VALIDATION, format!("bad profile file {}: {e}", path.display())))
}

fn save_profile(path: &PathBuf, seed: &ProfileSeed) -> Result<(), (u8, String)> {
    let mut body = serde_json::to_string_pretty(seed).expect("profile serializes");
    body.push('\n');
    std::fs::write(path, body)
        .map_err(|e| (EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn cmd_profile(args: ProfileArgs) -> ExitCode {
    let mut seed = match load_profile(&args.file) {
        Ok(seed) => seed,
        Err((code, msg)) => return fail(code, msg),
    };
    match args.action {
        ProfileAction::List => {
            let mut profile = seed.clone().into_profile();
            profile.end_session();
            println!("HIGH (ask first):");
            for item in profile.list_items() {
                if item.level == Level::High {
                    println!("  {} = {}", item.key, item.value);
                }
            }
            println!("LOW (default access):");
            for item in profile.list_items() {
                if item.level == Level::Low {
                    println!("  {} = {}", item.key, item.value);
                }
            }
            ExitCode::SUCCESS
        }
        ProfileAction::Set { key, value, level } => {
            let level = match level.as_deref() {
                None => None,
                Some("low") => Some(Level::Low),
                Some("high") => Some(Level::High),
                Some(other) => {
                    return fail(EXIT_VALIDATION, format!("level must be low or high, got '{other}'"))
                }
            };
            match seed.items.iter_mut().find(|item| item.key == key) {
                Some(item) => {
                    item.value = value;
                    if let Some(level) = level {
                        item.level = level;
                    }
                }
                None => {
                    if key.is_empty() {
                        return fail(EXIT_VALIDATION, "item key must not be empty");
                    }
                    seed.items.push(privbench_core::profile::SeedItem {
                        key,
                        value,
                        level: level.unwrap_or(Level::Low),
                    });
                }
            }
            if let Err((code, msg)) = save_profile(&args.file, &seed) {
                return fail(code, msg);
            }
            ExitCode::SUCCESS
        }
        ProfileAction::Delete { key } => {
            let before = seed.items.len();
            seed.items.retain(|item| item.key != key);
            if seed.items.len() == before {
                return fail(EXIT_VALIDATION, format!("no profile item named '{key}'"));
            }
            if let Err((code, msg)) = save_profile(&args.file, &seed) {
                return fail(code, msg);
            }
            ExitCode::SUCCESS
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Score(args) => cmd_score(args),
        Command::Profile(args) => cmd_profile(args),
    }
}
