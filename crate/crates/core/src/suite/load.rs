//! Suite loading: the manifest document, task references, and full
//! validation on load.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::{load_schema, AppSchema, SchemaError};
use crate::auditor::PenaltySchedule;
use crate::profile::{ProfileSeed, UserProfile};
use crate::suite::{
    build_pair, generate_task, validate_task, CrossSessionPair, GenerateError, PairError, Task,
};

/// The preference a pair's session B depends on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPref {
    pub key: String,
    pub value: String,
}

/// Reference to one generatable task: everything needed to reproduce it
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRef {
    pub task_id: String,
    pub app_id: String,
    pub seed_name: String,
    pub template_id: String,
    pub rng_seed: u64,
    /// Slot overrides applied after variant sampling; pairs use these to
    /// pin the shared preference value.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub slots: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRef {
    pub pair_id: String,
    pub target_pref: TargetPref,
    pub task_a: TaskRef,
    pub task_b: TaskRef,
}

fn default_tau() -> f64 {
    0.7
}

/// The on-disk suite manifest (`suite.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteDoc {
    pub suite_id: String,
    /// Path to the profile seed document, relative to the suite directory.
    pub profile: String,
    /// Paths to app schema documents, relative to the suite directory.
    pub apps: Vec<String>,
    #[serde(default)]
    pub schedule: PenaltySchedule,
    #[serde(default = "default_tau")]
    pub default_tau: f64,
    pub tasks: Vec<TaskRef>,
    #[serde(default)]
    pub pairs: Vec<PairRef>,
}

/// A fully loaded, validated suite.
#[derive(Debug, Clone)]
pub struct Suite {
    pub suite_id: String,
    pub dir: PathBuf,
    pub profile: UserProfile,
    pub schedule: PenaltySchedule,
    pub default_tau: f64,
    pub apps: BTreeMap<String, AppSchema>,
    pub tasks: Vec<Task>,
    pub pairs: Vec<CrossSessionPair>,
}

impl Suite {
    pub fn schema(&self, app_id: &str) -> Option<&AppSchema> {
        self.apps.get(app_id)
    }

    /// Find any task by id, covering independent tasks, pair sessions, and
    /// their proxies.
    pub fn find_task(&self, task_id: &str) -> Option<&Task> {
        self.tasks
            .iter()
            .find(|t| t.task_id == task_id)
            .or_else(|| {
                self.pairs.iter().find_map(|p| {
                    if p.task_a.task_id == task_id {
                        Some(&p.task_a)
                    } else if p.task_b.task_id == task_id {
                        Some(&p.task_b)
                    } else {
                        None
                    }
                })
            })
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Pair(#[from] PairError),
    #[error("task reference '{task}' names unknown app '{app}'")]
    UnknownApp { task: String, app: String },
    #[error("duplicate task id '{0}' in suite")]
    DuplicateTaskId(String),
    #[error("suite validation failed:\n{}", .0.join("\n"))]
    ValidationFailed(Vec<String>),
}

fn read_file(path: &Path) -> Result<String, SuiteError> {
    std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn generate_from_ref(suite: &SuiteDoc, apps: &BTreeMap<String, AppSchema>, task_ref: &TaskRef)
    -> Result<Task, SuiteError>
{
    let _ = suite;
    let schema = apps
        .get(&task_ref.app_id)
        .ok_or_else(|| SuiteError::UnknownApp {
            task: task_ref.task_id.clone(),
            app: task_ref.app_id.clone(),
        })?;
    Ok(generate_task(
        schema,
        &task_ref.seed_name,
        &task_ref.template_id,
        task_ref.rng_seed,
        &task_ref.slots,
        &task_ref.task_id,
    )?)
}

/// Load and validate a suite directory (or a path to its `suite.json`).
///
/// Loading is pure given the file contents: the same directory always
/// produces an identical suite. Any validation failure is collected and
/// reported together.
pub fn load_suite(path: &Path) -> Result<Suite, SuiteError> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join("suite.json"))
    } else {
        (
            path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            path.to_path_buf(),
        )
    };

    let doc: SuiteDoc =
        serde_json::from_str(&read_file(&manifest_path)?).map_err(|e| SuiteError::Parse {
            path: manifest_path.display().to_string(),
            detail: e.to_string(),
        })?;

    let profile_path = dir.join(&doc.profile);
    let seed: ProfileSeed =
        serde_json::from_str(&read_file(&profile_path)?).map_err(|e| SuiteError::Parse {
            path: profile_path.display().to_string(),
            detail: e.to_string(),
        })?;
    let profile = seed.into_profile();
    let levels = profile.levels();

    let mut apps = BTreeMap::new();
    for app_rel in &doc.apps {
        let app_path = dir.join(app_rel);
        let schema = load_schema(&read_file(&app_path)?, &levels)?;
        apps.insert(schema.app_id.clone(), schema);
    }

    let mut failures: Vec<String> = Vec::new();
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    let mut note_id = |id: &str, failures: &mut Vec<String>| {
        if !seen_ids.insert(id.to_string()) {
            failures.push(format!("duplicate task id '{id}'"));
        }
    };

    let mut tasks = Vec::new();
    for task_ref in &doc.tasks {
        note_id(&task_ref.task_id, &mut failures);
        let task = generate_from_ref(&doc, &apps, task_ref)?;
        let schema = &apps[&task.app_id];
        let report = validate_task(&task, schema, &profile, &[]);
        if !report.passed() {
            for failure in &report.failures {
                failures.push(format!("task '{}': {failure}", task.task_id));
            }
        }
        tasks.push(task);
    }

    let mut pairs = Vec::new();
    for pair_ref in &doc.pairs {
        note_id(&pair_ref.task_a.task_id, &mut failures);
        note_id(&pair_ref.task_b.task_id, &mut failures);
        let task_a = generate_from_ref(&doc, &apps, &pair_ref.task_a)?;
        let task_b = generate_from_ref(&doc, &apps, &pair_ref.task_b)?;
        let schema_a = &apps[&task_a.app_id];
        let schema_b = &apps[&task_b.app_id];

        let report_a = validate_task(&task_a, schema_a, &profile, &[]);
        for failure in &report_a.failures {
            failures.push(format!("pair '{}' task A: {failure}", pair_ref.pair_id));
        }
        let pref = &pair_ref.target_pref;
        let report_b = validate_task(
            &task_b,
            schema_b,
            &profile,
            &[(pref.key.clone(), pref.value.clone())],
        );
        for failure in &report_b.failures {
            failures.push(format!("pair '{}' task B: {failure}", pair_ref.pair_id));
        }
        if report_a.passed() && report_b.passed() {
            match build_pair(
                &pair_ref.pair_id,
                task_a,
                task_b,
                pref.clone(),
                schema_b,
                &profile,
            ) {
                Ok(pair) => pairs.push(pair),
                Err(err) => failures.push(err.to_string()),
            }
        }
    }

    if !failures.is_empty() {
        return Err(SuiteError::ValidationFailed(failures));
    }

    Ok(Suite {
        suite_id: doc.suite_id,
        dir,
        profile,
        schedule: doc.schedule,
        default_tau: doc.default_tau,
        apps,
        tasks,
        pairs,
    })
}
