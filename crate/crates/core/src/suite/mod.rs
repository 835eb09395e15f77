//! Task suite: templates, generated tasks, probe manifests, and
//! cross-session pairs.
//!
//! Tasks are built from target states, not free-form prose: a template
//! samples slot values from a seeded RNG, renders them into the
//! natural-language instruction, and derives the verification rules from
//! the same values, so instruction and rules can never drift apart. Every
//! task also carries a completion plan, the canonical minimal-disclosure
//! route: used by the scripted baselines and by suite validation.

mod gen;
mod load;
mod validate;

pub use gen::{generate_task, GenerateError};
pub use load::{load_suite, PairRef, Suite, SuiteDoc, SuiteError, TargetPref, TaskRef};
pub use validate::{build_pair, validate_task, PairError, ValidationReport};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::app::VerificationRule;
use crate::profile::Level;

/// How much a permission request for a HIGH key costs, graded by how
/// necessary the key is to the task at hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Necessity {
    Required,
    Plausible,
    Unnecessary,
    Forbidden,
}

impl std::fmt::Display for Necessity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Necessity::Required => "required",
            Necessity::Plausible => "plausible",
            Necessity::Unnecessary => "unnecessary",
            Necessity::Forbidden => "forbidden",
        };
        write!(f, "{name}")
    }
}

/// Per-task declaration of the privacy probes: graded HIGH keys for OP,
/// trap fields for TR, sandwich fields for FM, plus the screen each probe
/// field lives on (needed to decide whether a dimension was reached).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeManifest {
    pub bait_keys: BTreeMap<String, Necessity>,
    pub trap_field_ids: BTreeSet<String>,
    pub sandwich_field_ids: BTreeSet<String>,
    /// Probe field id -> screen id.
    pub probe_screens: BTreeMap<String, String>,
}

impl ProbeManifest {
    pub fn op_evaluable(&self) -> bool {
        !self.bait_keys.is_empty()
    }

    pub fn tr_evaluable(&self) -> bool {
        !self.trap_field_ids.is_empty()
    }

    pub fn fm_evaluable(&self) -> bool {
        !self.sandwich_field_ids.is_empty()
    }

    pub fn screens_of<'a>(&'a self, fields: &'a BTreeSet<String>) -> BTreeSet<&'a str> {
        fields
            .iter()
            .filter_map(|f| self.probe_screens.get(f).map(String::as_str))
            .collect()
    }
}

/// Where a planned fill's value comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FillSource {
    /// Fixed text rendered from the instruction's slots.
    Literal { literal: String },
    /// Profile item, read through the contract (requesting first when the
    /// key is HIGH).
    Profile { profile: String },
    /// Ask the user, then type the canned answer.
    Ask { ask: String, question: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedFill {
    pub field: String,
    pub source: FillSource,
}

/// A preference the task instructs the agent to save.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SavedPref {
    pub key: String,
    pub value: String,
    pub level: Level,
}

/// Canonical minimal-disclosure route through the task, consumed by the
/// scripted baselines and the satisfiability check. External agents never
/// see it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPlan {
    /// Buttons to tap from the entry screen to the target screen.
    #[serde(default)]
    pub route: Vec<String>,
    /// Target screen of the flow.
    pub screen: String,
    /// Required-field fills in on-screen order.
    #[serde(default)]
    pub fills: Vec<PlannedFill>,
    /// Row taps (cancellation flows), after the fills.
    #[serde(default)]
    pub taps: Vec<String>,
    /// Submit element, when the flow commits a form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submit: Option<String>,
    /// Preference to save before terminating, when the task instructs it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_pref: Option<SavedPref>,
}

pub const DEFAULT_STEP_LIMIT: u32 = 100;

/// One evaluation unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub app_id: String,
    pub seed_name: String,
    pub instruction: String,
    pub rules: Vec<VerificationRule>,
    pub manifest: ProbeManifest,
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
    pub step_limit: u32,
    pub plan: TaskPlan,
    pub template_id: String,
    pub rng_seed: u64,
}

/// Session-A / session-B pair whose B-success is binding on the preference
/// saved in A.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossSessionPair {
    pub pair_id: String,
    pub task_a: Task,
    pub task_b: Task,
    pub target_pref: load::TargetPref,
}

/// Slot-filled task template shipped inside an app schema.
///
/// `variants` are coherent slot tuples; the task's RNG seed picks one, and
/// per-task slot overrides (used by cross-session pairs) replace individual
/// values afterwards. `{slot}` placeholders may appear in the instruction,
/// rule literals, fill literals, row taps, answer values, and the saved
/// preference's value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub template_id: String,
    pub seed_name: String,
    pub screen: String,
    pub instruction: String,
    pub variants: Vec<BTreeMap<String, String>>,
    #[serde(default)]
    pub route: Vec<String>,
    #[serde(default)]
    pub fills: Vec<PlannedFill>,
    #[serde(default)]
    pub taps: Vec<String>,
    pub rules: Vec<VerificationRule>,
    #[serde(default)]
    pub bait_keys: BTreeMap<String, Necessity>,
    #[serde(default)]
    pub forbidden_keys: Vec<String>,
    #[serde(default)]
    pub answers: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_pref: Option<SavedPref>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_limit: Option<u32>,
}
