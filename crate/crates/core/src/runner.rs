//! Suite orchestration: run every task and pair, persist artifacts, score,
//! and aggregate, plus the re-scoring and replay paths over a finished
//! output directory.
//!
//! Output directory layout (fixed, so replay and re-scoring need no hidden
//! state):
//!
//! ```text
//! out/
//!   suite/            verbatim copy of the suite directory
//!   trajectories/     one JSONL file per episode
//!   reports/          one ScoreReport JSON per scored episode
//!   aggregate.json    machine-readable aggregate
//!   aggregate.txt     aligned plain-text table
//!   sweep.json        PQSR threshold sweep (when a grid is given)
//! ```
//!
//! Episodes are independent units: with `jobs > 1` they run on a thread
//! pool, but all artifacts are written by the collector in suite order, so
//! identical configurations produce identical bytes at any parallelism.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{
    baseline_policy, read_trajectory, replay_episode, run_episode, run_pair, run_proxy,
    write_trajectory, EpisodeResult, Policy, PolicyKind, ReplayError, SessionKind, StoredEpisode,
    TrajectoryError, TrajectoryHeader, WireAgent, TRAJECTORY_FORMAT,
};
use crate::auditor::{
    aggregate, later_session_metrics, score_episode, threshold_sweep, AggregateReport, AuditError,
    LaterSessionDiagnostics, PairOutcome, PenaltySchedule, ScoreReport, SweepPoint,
};
use crate::profile::UserProfile;
use crate::suite::{load_suite, Suite, SuiteError, Task};

#[derive(Debug, Clone)]
pub enum PolicySelector {
    Baseline(PolicyKind),
    External {
        command: String,
        step_timeout: Duration,
    },
}

impl PolicySelector {
    pub fn label(&self) -> String {
        match self {
            PolicySelector::Baseline(kind) => kind.name().to_string(),
            PolicySelector::External { command, .. } => format!("external:{command}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub suite_dir: PathBuf,
    pub out_dir: PathBuf,
    pub policy: PolicySelector,
    pub rng_seed: u64,
    pub jobs: usize,
    /// Privacy threshold; `None` uses the suite's default.
    pub tau: Option<f64>,
    pub tau_grid: Option<Vec<f64>>,
    /// Penalty schedule override; `None` uses the suite's schedule.
    pub schedule: Option<PenaltySchedule>,
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to start endpoint '{command}': {source}")]
    Endpoint {
        command: String,
        source: std::io::Error,
    },
    #[error("no trajectory found for task '{0}'")]
    MissingTrajectory(String),
    #[error("trajectory '{0}' does not belong to any suite task")]
    UnknownTrajectoryTask(String),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunnerError + '_ {
    move |source| RunnerError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub reports: Vec<ScoreReport>,
    pub aggregate: AggregateReport,
    pub sweep: Option<Vec<SweepPoint>>,
    pub episodes: usize,
}

fn header_for(
    task: &Task,
    policy_label: &str,
    session: SessionKind,
    pair_id: Option<&str>,
    profile_start: &UserProfile,
) -> TrajectoryHeader {
    TrajectoryHeader {
        format: TRAJECTORY_FORMAT,
        task_id: task.task_id.clone(),
        app_id: task.app_id.clone(),
        seed_name: task.seed_name.clone(),
        policy: policy_label.to_string(),
        session,
        pair_id: pair_id.map(str::to_string),
        instruction: task.instruction.clone(),
        profile_start: profile_start.list_items().into_iter().cloned().collect(),
    }
}

fn make_policy(
    selector: &PolicySelector,
    suite: &Suite,
    task: &Task,
    rng_seed: u64,
) -> Result<Box<dyn Policy>, RunnerError> {
    match selector {
        PolicySelector::Baseline(kind) => Ok(baseline_policy(
            *kind,
            task,
            suite.schema(&task.app_id).expect("suite schemas are complete"),
            &suite.profile.levels(),
            rng_seed,
        )),
        PolicySelector::External {
            command,
            step_timeout,
        } => WireAgent::spawn(command, *step_timeout)
            .map(|agent| Box::new(agent) as Box<dyn Policy>)
            .map_err(|source| RunnerError::Endpoint {
                command: command.clone(),
                source,
            }),
    }
}

enum Work<'a> {
    Independent(&'a Task),
    Pair(&'a crate::suite::CrossSessionPair),
}

type Produced = Vec<(TrajectoryHeader, EpisodeResult)>;

fn run_work(
    work: &Work<'_>,
    suite: &Suite,
    config: &RunConfig,
    label: &str,
) -> Result<Produced, RunnerError> {
    match work {
        Work::Independent(task) => {
            let schema = suite.schema(&task.app_id).expect("validated on load");
            let profile = suite.profile.clone();
            let header = header_for(task, label, SessionKind::Independent, None, &profile);
            let mut policy = make_policy(&config.policy, suite, task, config.rng_seed)?;
            let (episode, _) = run_episode(task, schema, policy.as_mut(), profile);
            Ok(vec![(header, episode)])
        }
        Work::Pair(pair) => {
            let schema_a = suite.schema(&pair.task_a.app_id).expect("validated on load");
            let schema_b = suite.schema(&pair.task_b.app_id).expect("validated on load");
            let profile = suite.profile.clone();
            let header_a = header_for(
                &pair.task_a,
                label,
                SessionKind::PairA,
                Some(&pair.pair_id),
                &profile,
            );

            let mut spawn_error: Option<RunnerError> = None;
            let mut factory = |task: &Task| -> Box<dyn Policy> {
                match make_policy(&config.policy, suite, task, config.rng_seed) {
                    Ok(policy) => policy,
                    Err(err) => {
                        spawn_error = Some(err);
                        Box::new(crate::agent::WaitPolicy)
                    }
                }
            };
            let (episode_a, episode_b, _) = run_pair(pair, schema_a, schema_b, &mut factory, profile);
            if let Some(err) = spawn_error {
                return Err(err);
            }
            // Session B starts from the items that survived session A.
            let mut header_b = header_for(
                &pair.task_b,
                label,
                SessionKind::PairB,
                Some(&pair.pair_id),
                &suite.profile,
            );
            header_b.profile_start = episode_a.profile_after.clone();

            // Pre-seeded proxy of session B for the used-when-needed
            // diagnostic.
            let mut proxy_policy = make_policy(&config.policy, suite, &pair.task_b, config.rng_seed)?;
            let proxy_profile = {
                let mut p = suite.profile.clone();
                p.upsert_item(
                    &pair.target_pref.key,
                    &pair.target_pref.value,
                    crate::profile::Level::Low,
                    crate::profile::Source::AgentSaved,
                    None,
                )
                .expect("fresh profile accepts the preference");
                p
            };
            let header_proxy = header_for(
                &pair.task_b,
                label,
                SessionKind::Proxy,
                Some(&pair.pair_id),
                &proxy_profile,
            );
            let proxy_episode = run_proxy(pair, schema_b, proxy_policy.as_mut(), suite.profile.clone());

            Ok(vec![
                (header_a, episode_a),
                (header_b, episode_b),
                (header_proxy, proxy_episode),
            ])
        }
    }
}

fn trajectory_filename(header: &TrajectoryHeader) -> String {
    match header.session {
        SessionKind::Proxy => format!("{}--proxy.jsonl", header.task_id),
        _ => format!("{}.jsonl", header.task_id),
    }
}

fn copy_dir_recursive(from: &Path, to: &Path) -> Result<(), RunnerError> {
    std::fs::create_dir_all(to).map_err(io_err(to))?;
    let mut entries: Vec<PathBuf> = std::fs::read_dir(from)
        .map_err(io_err(from))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(from))?;
    entries.sort();
    for entry in entries {
        let name = entry.file_name().expect("read_dir yields named entries");
        let dest = to.join(name);
        if entry.is_dir() {
            copy_dir_recursive(&entry, &dest)?;
        } else {
            std::fs::copy(&entry, &dest).map_err(io_err(&entry))?;
        }
    }
    Ok(())
}

type ScoredOutputs = (Vec<ScoreReport>, AggregateReport, Option<Vec<SweepPoint>>);

/// Score all non-proxy episodes in suite order and build the aggregate.
fn score_all(
    suite: &Suite,
    episodes: &[(TrajectoryHeader, EpisodeResult)],
    schedule: &PenaltySchedule,
    tau: f64,
    tau_grid: Option<&[f64]>,
    policy_label: &str,
) -> Result<ScoredOutputs, RunnerError> {
    let mut reports = Vec::new();
    for (header, episode) in episodes {
        if header.session == SessionKind::Proxy {
            continue;
        }
        let task = suite
            .find_task(&header.task_id)
            .ok_or_else(|| RunnerError::UnknownTrajectoryTask(header.task_id.clone()))?;
        let schema = suite.schema(&task.app_id).expect("validated on load");
        reports.push(score_episode(task, schema, episode, schedule, header.session));
    }

    let diagnostics = pair_diagnostics(suite, episodes)?;
    let agg = aggregate(policy_label, &reports, diagnostics.as_ref(), tau)?;
    let sweep = tau_grid.map(|grid| threshold_sweep(&reports, grid));
    Ok((reports, agg, sweep))
}

type PairSlot<'a> = (
    Option<&'a EpisodeResult>,
    Option<&'a EpisodeResult>,
    Option<&'a EpisodeResult>,
);

fn pair_diagnostics(
    suite: &Suite,
    episodes: &[(TrajectoryHeader, EpisodeResult)],
) -> Result<Option<LaterSessionDiagnostics>, RunnerError> {
    if suite.pairs.is_empty() {
        return Ok(None);
    }
    let mut by_pair: BTreeMap<String, PairSlot<'_>> = BTreeMap::new();
    for (header, episode) in episodes {
        let Some(pair_id) = &header.pair_id else {
            continue;
        };
        let slot = by_pair.entry(pair_id.clone()).or_default();
        match header.session {
            SessionKind::PairA => slot.0 = Some(episode),
            SessionKind::PairB => slot.1 = Some(episode),
            SessionKind::Proxy => slot.2 = Some(episode),
            SessionKind::Independent => {}
        }
    }
    let mut outcomes = BTreeMap::new();
    for pair in &suite.pairs {
        let Some((Some(a), Some(b), Some(proxy))) = by_pair.get(&pair.pair_id).copied() else {
            return Err(AuditError::MissingResult(pair.pair_id.clone()).into());
        };
        outcomes.insert(pair.pair_id.clone(), PairOutcome { a, b, proxy });
    }
    Ok(Some(later_session_metrics(&suite.pairs, &outcomes)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), RunnerError> {
    let mut body = serde_json::to_string_pretty(value).expect("reports serialize");
    body.push('\n');
    std::fs::write(path, body).map_err(io_err(path))
}

fn write_outputs(
    out_dir: &Path,
    reports: &[ScoreReport],
    agg: &AggregateReport,
    sweep: Option<&[SweepPoint]>,
) -> Result<(), RunnerError> {
    let reports_dir = out_dir.join("reports");
    std::fs::create_dir_all(&reports_dir).map_err(io_err(&reports_dir))?;
    for report in reports {
        write_json(&reports_dir.join(format!("{}.json", report.task_id)), report)?;
    }
    write_json(&out_dir.join("aggregate.json"), agg)?;
    std::fs::write(out_dir.join("aggregate.txt"), agg.render_text())
        .map_err(io_err(&out_dir.join("aggregate.txt")))?;
    if let Some(sweep) = sweep {
        write_json(&out_dir.join("sweep.json"), &sweep)?;
    }
    Ok(())
}

/// Execute the whole suite under one policy and write the artifact tree.
pub fn run_suite(config: &RunConfig) -> Result<RunSummary, RunnerError> {
    let suite = load_suite(&config.suite_dir)?;
    let label = config.policy.label();

    let mut work: Vec<Work<'_>> = suite.tasks.iter().map(Work::Independent).collect();
    work.extend(suite.pairs.iter().map(Work::Pair));

    let jobs = config.jobs.max(1);
    let produced: Vec<Produced> = if jobs == 1 {
        work.iter()
            .map(|w| run_work(w, &suite, config, &label))
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool builds");
        pool.install(|| {
            work.par_iter()
                .map(|w| run_work(w, &suite, config, &label))
                .collect::<Result<_, _>>()
        })?
    };
    let episodes: Vec<(TrajectoryHeader, EpisodeResult)> = produced.into_iter().flatten().collect();

    // All artifacts are written here, after the parallel phase, in suite
    // order.
    std::fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    copy_dir_recursive(&suite.dir, &config.out_dir.join("suite"))?;
    let traj_dir = config.out_dir.join("trajectories");
    std::fs::create_dir_all(&traj_dir).map_err(io_err(&traj_dir))?;
    for (header, episode) in &episodes {
        write_trajectory(&traj_dir.join(trajectory_filename(header)), header, episode)?;
    }

    let schedule = config.schedule.unwrap_or(suite.schedule);
    schedule.validate()?;
    let tau = config.tau.unwrap_or(suite.default_tau);
    let (reports, agg, sweep) = score_all(
        &suite,
        &episodes,
        &schedule,
        tau,
        config.tau_grid.as_deref(),
        &label,
    )?;
    write_outputs(&config.out_dir, &reports, &agg, sweep.as_deref())?;

    Ok(RunSummary {
        out_dir: config.out_dir.clone(),
        episodes: episodes.len(),
        reports,
        aggregate: agg,
        sweep,
    })
}

/// Read every trajectory of a finished run, in suite order: independent
/// tasks first, then each pair's A/B/proxy.
fn read_run_episodes(
    run_dir: &Path,
    suite: &Suite,
) -> Result<Vec<(TrajectoryHeader, EpisodeResult)>, RunnerError> {
    let traj_dir = run_dir.join("trajectories");
    let mut episodes = Vec::new();
    let mut read_one = |file: String, task_id: &str| -> Result<(), RunnerError> {
        let path = traj_dir.join(file);
        if !path.exists() {
            return Err(RunnerError::MissingTrajectory(task_id.to_string()));
        }
        let stored = read_trajectory(&path)?;
        episodes.push((stored.header, stored.episode));
        Ok(())
    };
    for task in &suite.tasks {
        read_one(format!("{}.jsonl", task.task_id), &task.task_id)?;
    }
    for pair in &suite.pairs {
        read_one(format!("{}.jsonl", pair.task_a.task_id), &pair.task_a.task_id)?;
        read_one(format!("{}.jsonl", pair.task_b.task_id), &pair.task_b.task_id)?;
        read_one(
            format!("{}--proxy.jsonl", pair.task_b.task_id),
            &pair.task_b.task_id,
        )?;
    }
    Ok(episodes)
}

/// Re-score a finished run directory from its logs alone: no re-execution.
/// Outputs are written under `score_out` with the same layout as a run.
pub fn score_run_dir(
    run_dir: &Path,
    score_out: &Path,
    schedule_override: Option<PenaltySchedule>,
    tau_override: Option<f64>,
    tau_grid: Option<Vec<f64>>,
) -> Result<RunSummary, RunnerError> {
    let suite = load_suite(&run_dir.join("suite"))?;
    let episodes = read_run_episodes(run_dir, &suite)?;
    let label = episodes
        .first()
        .map(|(h, _)| h.policy.clone())
        .unwrap_or_else(|| "unknown".to_string());
    let schedule = schedule_override.unwrap_or(suite.schedule);
    schedule.validate()?;
    let tau = tau_override.unwrap_or(suite.default_tau);
    let (reports, agg, sweep) = score_all(
        &suite,
        &episodes,
        &schedule,
        tau,
        tau_grid.as_deref(),
        &label,
    )?;
    std::fs::create_dir_all(score_out).map_err(io_err(score_out))?;
    write_outputs(score_out, &reports, &agg, sweep.as_deref())?;
    Ok(RunSummary {
        out_dir: score_out.to_path_buf(),
        episodes: episodes.len(),
        reports,
        aggregate: agg,
        sweep,
    })
}

/// Replay one trajectory file against the suite copy recorded next to it
/// (or an explicit suite directory) and verify the final state digest.
pub fn replay_file(
    trajectory: &Path,
    suite_dir: Option<&Path>,
) -> Result<EpisodeResult, RunnerError> {
    let stored: StoredEpisode = read_trajectory(trajectory)?;
    let suite_path = match suite_dir {
        Some(dir) => dir.to_path_buf(),
        None => trajectory
            .parent()
            .and_then(Path::parent)
            .map(|run_dir| run_dir.join("suite"))
            .unwrap_or_else(|| PathBuf::from("suite")),
    };
    let suite = load_suite(&suite_path)?;
    let task = suite
        .find_task(&stored.header.task_id)
        .ok_or_else(|| RunnerError::UnknownTrajectoryTask(stored.header.task_id.clone()))?;
    let schema = suite
        .schema(&task.app_id)
        .ok_or_else(|| RunnerError::UnknownTrajectoryTask(stored.header.task_id.clone()))?;
    Ok(replay_episode(&stored, task, schema)?)
}

/// Replay every trajectory of a run directory; returns the number verified.
pub fn replay_run_dir(run_dir: &Path) -> Result<usize, RunnerError> {
    let suite = load_suite(&run_dir.join("suite"))?;
    let episodes = read_run_episodes(run_dir, &suite)?;
    let mut verified = 0usize;
    for (header, _) in &episodes {
        let path = run_dir.join("trajectories").join(trajectory_filename(header));
        let stored = read_trajectory(&path)?;
        let task = suite
            .find_task(&header.task_id)
            .ok_or_else(|| RunnerError::UnknownTrajectoryTask(header.task_id.clone()))?;
        let schema = suite.schema(&task.app_id).expect("suite schemas are complete");
        replay_episode(&stored, task, schema)?;
        verified += 1;
    }
    Ok(verified)
}

/// SHA-256 of every file under a run directory, keyed by relative path.
/// Two runs with identical configurations must produce identical maps.
pub fn artifact_digests(dir: &Path) -> Result<BTreeMap<String, String>, RunnerError> {
    fn walk(
        root: &Path,
        dir: &Path,
        out: &mut BTreeMap<String, String>,
    ) -> Result<(), RunnerError> {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io_err(dir))?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err(dir))?;
        entries.sort();
        for entry in entries {
            if entry.is_dir() {
                walk(root, &entry, out)?;
            } else {
                let bytes = std::fs::read(&entry).map_err(io_err(&entry))?;
                let rel = entry
                    .strip_prefix(root)
                    .expect("entry under root")
                    .to_string_lossy()
                    .to_string();
                out.insert(rel, crate::digest::sha256_hex(&bytes));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}
