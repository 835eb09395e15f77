//! Trajectory persistence and deterministic replay.
//!
//! One file per episode, newline-delimited JSON records: a header (task
//! identity, policy, and the episode's starting profile), one record per
//! trajectory step, one per access-log entry, one per form draft, and a
//! footer with the termination cause, the final tables, and the state
//! digest. The file is self-contained: scoring and replay need no state
//! beyond it, the suite files, and the schema.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    run_episode, Action, Decision, EpisodeResult, Observation, Policy, PolicyError, TerminatedBy,
    TrajectoryStep,
};
use crate::app::{AppSchema, DatabaseState, FormDraftEntry};
use crate::contract::{AccessLogEntry, ToolResponse};
use crate::profile::{ProfileItem, UserProfile};
use crate::suite::Task;

pub const TRAJECTORY_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    Independent,
    PairA,
    PairB,
    Proxy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub format: u32,
    pub task_id: String,
    pub app_id: String,
    pub seed_name: String,
    pub policy: String,
    pub session: SessionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    pub instruction: String,
    /// Profile items at episode start; replay reconstructs the starting
    /// profile from these (grants never cross episode boundaries).
    pub profile_start: Vec<ProfileItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Footer {
    terminated_by: TerminatedBy,
    final_state_digest: String,
    final_tables: BTreeMap<String, Vec<BTreeMap<String, String>>>,
    profile_after: Vec<ProfileItem>,
    notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "rec", rename_all = "snake_case")]
enum Record {
    Header(TrajectoryHeader),
    Step(TrajectoryStep),
    Access(AccessLogEntry),
    Draft(FormDraftEntry),
    Footer(Footer),
}

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

/// A parsed trajectory file.
#[derive(Debug, Clone)]
pub struct StoredEpisode {
    pub header: TrajectoryHeader,
    pub episode: EpisodeResult,
}

pub fn write_trajectory(
    path: &Path,
    header: &TrajectoryHeader,
    episode: &EpisodeResult,
) -> Result<(), TrajectoryError> {
    let io_err = |source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut out = std::io::BufWriter::new(file);
    let mut write_record = |record: &Record| -> Result<(), TrajectoryError> {
        let line = serde_json::to_string(record).expect("records serialize");
        writeln!(out, "{line}").map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write_record(&Record::Header(header.clone()))?;
    for step in &episode.trajectory {
        write_record(&Record::Step(step.clone()))?;
    }
    for entry in &episode.access_log {
        write_record(&Record::Access(entry.clone()))?;
    }
    for draft in &episode.final_state.form_drafts {
        write_record(&Record::Draft(draft.clone()))?;
    }
    write_record(&Record::Footer(Footer {
        terminated_by: episode.terminated_by,
        final_state_digest: episode.final_state_digest.clone(),
        final_tables: episode.final_state.tables.clone(),
        profile_after: episode.profile_after.clone(),
        notes: episode.notes.clone(),
    }))
}

pub fn read_trajectory(path: &Path) -> Result<StoredEpisode, TrajectoryError> {
    let parse_err = |detail: String| TrajectoryError::Parse {
        path: path.display().to_string(),
        detail,
    };
    let file = std::fs::File::open(path).map_err(|source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut header: Option<TrajectoryHeader> = None;
    let mut steps: Vec<TrajectoryStep> = Vec::new();
    let mut access: Vec<AccessLogEntry> = Vec::new();
    let mut drafts: Vec<FormDraftEntry> = Vec::new();
    let mut footer: Option<Footer> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| TrajectoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)
            .map_err(|e| parse_err(format!("line {}: {e}", lineno + 1)))?;
        match record {
            Record::Header(h) => {
                if header.is_some() {
                    return Err(parse_err("duplicate header record".into()));
                }
                if h.format != TRAJECTORY_FORMAT {
                    return Err(parse_err(format!("unsupported format {}", h.format)));
                }
                header = Some(h);
            }
            Record::Step(s) => steps.push(s),
            Record::Access(a) => access.push(a),
            Record::Draft(d) => drafts.push(d),
            Record::Footer(f) => {
                if footer.is_some() {
                    return Err(parse_err("duplicate footer record".into()));
                }
                footer = Some(f);
            }
        }
    }

    let header = header.ok_or_else(|| parse_err("missing header record".into()))?;
    let footer = footer.ok_or_else(|| parse_err("missing footer record (truncated file?)".into()))?;

    let final_state = DatabaseState {
        tables: footer.final_tables,
        form_drafts: drafts,
    };
    if final_state.digest() != footer.final_state_digest {
        return Err(parse_err(
            "stored records do not reproduce the recorded state digest".into(),
        ));
    }
    Ok(StoredEpisode {
        episode: EpisodeResult {
            task_id: header.task_id.clone(),
            app_id: header.app_id.clone(),
            terminated_by: footer.terminated_by,
            final_state_digest: footer.final_state_digest,
            final_state,
            trajectory: steps,
            access_log: access,
            profile_after: footer.profile_after,
            notes: footer.notes,
        },
        header,
    })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trajectory belongs to task '{found}', expected '{expected}'")]
    TaskMismatch { expected: String, found: String },
    #[error(
        "digest mismatch after replay: recorded {recorded}, replayed {replayed} \
         (nondeterminism or a tampered file)"
    )]
    DigestMismatch { recorded: String, replayed: String },
}

/// Replays recorded actions verbatim.
struct ReplayPolicy {
    actions: std::collections::VecDeque<Action>,
}

impl Policy for ReplayPolicy {
    fn name(&self) -> &str {
        "replay"
    }

    fn decide(
        &mut self,
        _observation: &Observation,
        _last_response: Option<&ToolResponse>,
    ) -> Result<Decision, PolicyError> {
        match self.actions.pop_front() {
            Some(action) => Ok(Decision::act(action)),
            // The recorded episode stopped here (harness error); stop the
            // same way.
            None => Err(PolicyError::Io("recorded actions exhausted".into())),
        }
    }
}

/// Re-execute a stored episode's action sequence against the task's seed
/// and the recorded starting profile, then require the final state digest
/// to match the recording exactly.
pub fn replay_episode(
    stored: &StoredEpisode,
    task: &Task,
    schema: &AppSchema,
) -> Result<EpisodeResult, ReplayError> {
    if stored.header.task_id != task.task_id {
        return Err(ReplayError::TaskMismatch {
            expected: task.task_id.clone(),
            found: stored.header.task_id.clone(),
        });
    }
    let profile = UserProfile::from_items(stored.header.profile_start.iter().cloned());
    let mut policy = ReplayPolicy {
        actions: stored
            .episode
            .trajectory
            .iter()
            .map(|s| s.action.clone())
            .collect(),
    };
    let (episode, _) = run_episode(task, schema, &mut policy, profile);
    if episode.final_state_digest != stored.episode.final_state_digest {
        return Err(ReplayError::DigestMismatch {
            recorded: stored.episode.final_state_digest.clone(),
            replayed: episode.final_state_digest.clone(),
        });
    }
    Ok(episode)
}
