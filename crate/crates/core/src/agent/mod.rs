//! The observation→action loop: fixed action vocabulary, episode runner,
//! scripted baseline policies, and the wire bridge to external agents.

mod policy;
mod run;
mod trajectory;
mod wire;

pub use policy::{baseline_policy, policy_rng_seed, PolicyKind, WaitPolicy};
pub use run::{run_episode, run_pair, run_proxy, PairEpisodes};
pub use trajectory::{
    read_trajectory, replay_episode, write_trajectory, ReplayError, SessionKind, StoredEpisode,
    TrajectoryError, TrajectoryHeader, TRAJECTORY_FORMAT,
};
pub use wire::{WireAgent, WireRequest};

use serde::{Deserialize, Serialize};

use crate::app::{DatabaseState, FormDraftEntry, ScrollDirection};
use crate::contract::{AccessLogEntry, ToolKind, ToolOutcome, ToolResponse};
use crate::digest::sha256_hex;
use crate::profile::{Level, ProfileItem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminateStatus {
    Success,
    Fail,
}

/// The fixed per-step action vocabulary: ordinary GUI actions, the four
/// privacy-contract tools, and task termination. Exactly one per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Tap { element: String },
    LongPress { element: String },
    Type { element: String, text: String },
    Scroll { direction: ScrollDirection },
    Open { app: String },
    NavigateHome,
    NavigateBack,
    Wait,
    RequestPermission { key: String, reason: String },
    ReadProfile { key: String },
    SaveProfile { key: String, value: String, level: Level },
    AskUser { question: String, intent: String },
    Terminate { status: TerminateStatus },
}

impl Action {
    /// One-line summary for histories and trajectory outcomes. Typed text
    /// is redacted to its length: observations must never carry profile
    /// values, and an agent already knows what it typed.
    pub fn summary(&self) -> String {
        match self {
            Action::Tap { element } => format!("tap({element})"),
            Action::LongPress { element } => format!("long_press({element})"),
            Action::Type { element, text } => {
                format!("type({element}, <{} chars>)", text.chars().count())
            }
            Action::Scroll { direction } => format!("scroll({direction:?})").to_lowercase(),
            Action::Open { app } => format!("open({app})"),
            Action::NavigateHome => "navigate_home".to_string(),
            Action::NavigateBack => "navigate_back".to_string(),
            Action::Wait => "wait".to_string(),
            Action::RequestPermission { key, .. } => format!("request_permission({key})"),
            Action::ReadProfile { key } => format!("read_profile({key})"),
            Action::SaveProfile { key, .. } => format!("save_profile({key})"),
            Action::AskUser { intent, .. } => format!("ask_user(intent={intent})"),
            Action::Terminate { status } => match status {
                TerminateStatus::Success => "terminate(success)".to_string(),
                TerminateStatus::Fail => "terminate(fail)".to_string(),
            },
        }
    }
}

/// Everything the agent sees at one step.
///
/// HIGH item values never appear here: profile values flow only through
/// `read_profile` tool responses, which are delivered alongside the
/// observation, and personal-field drafts render masked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u32,
    pub instruction: String,
    pub screen: String,
    /// Keys usable without a permission request.
    pub low_keys: Vec<String>,
    /// HIGH keys granted earlier this session (names only, never values).
    pub granted_high_keys: Vec<String>,
    /// Summary of the previous action's tool response or error banner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_response: Option<String>,
    /// Full interaction history, one summary line per step; truncation is
    /// the agent's own business.
    pub history: Vec<String>,
}

impl Observation {
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("observation serializes");
        sha256_hex(json.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    AgentSuccessClaim,
    AgentFailClaim,
    StepLimit,
    HarnessError,
}

/// One recorded step: what the agent saw (by digest), what it did, and what
/// happened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub step: u32,
    pub observation_digest: String,
    pub action: Action,
    pub outcome: String,
    /// Screen the cursor ended the step on (`None` = home).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screen_after: Option<String>,
}

/// Complete record of one episode: everything the auditor needs, and no
/// auditor logic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub app_id: String,
    pub terminated_by: TerminatedBy,
    pub final_state: DatabaseState,
    pub final_state_digest: String,
    pub trajectory: Vec<TrajectoryStep>,
    pub access_log: Vec<AccessLogEntry>,
    /// Profile items as they stood when the episode ended.
    pub profile_after: Vec<ProfileItem>,
    /// Harness-side notes (protocol errors, timeouts).
    #[serde(default)]
    pub notes: Vec<String>,
}

impl EpisodeResult {
    pub fn form_drafts(&self) -> &[FormDraftEntry] {
        &self.final_state.form_drafts
    }

    /// Screens the episode visited, from the trajectory records.
    pub fn screens_visited(&self) -> std::collections::BTreeSet<&str> {
        self.trajectory
            .iter()
            .filter_map(|s| s.screen_after.as_deref())
            .collect()
    }

    pub fn type_action_count(&self) -> usize {
        self.trajectory
            .iter()
            .filter(|s| matches!(s.action, Action::Type { .. }))
            .count()
    }

    pub fn tool_action_count(&self) -> usize {
        self.trajectory
            .iter()
            .filter(|s| {
                matches!(
                    s.action,
                    Action::RequestPermission { .. }
                        | Action::ReadProfile { .. }
                        | Action::SaveProfile { .. }
                        | Action::AskUser { .. }
                )
            })
            .count()
    }
}

/// A policy's answer for one step, plus an optional harness note (the wire
/// adapter uses notes to record tolerated protocol errors).
#[derive(Debug, Clone)]
pub struct Decision {
    pub action: Action,
    pub note: Option<String>,
}

impl Decision {
    pub fn act(action: Action) -> Self {
        Self { action, note: None }
    }
}

/// Unrecoverable policy failures; the episode ends as a harness error.
#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("endpoint timed out: {0}")]
    Timeout(String),
    #[error("endpoint i/o failed: {0}")]
    Io(String),
}

/// One decision-maker. Scripted baselines, the random baseline, and the
/// external-process bridge all implement this.
pub trait Policy {
    fn name(&self) -> &str;

    /// Choose exactly one next action. `last_response` is the previous
    /// step's raw tool response: the only channel through which profile
    /// values reach the agent.
    fn decide(
        &mut self,
        observation: &Observation,
        last_response: Option<&ToolResponse>,
    ) -> Result<Decision, PolicyError>;
}

/// Render a tool response for the next observation. HIGH values are the
/// one thing that must never surface here, so `read_profile` payloads are
/// summarized only when the key is LOW.
pub(crate) fn summarize_response(response: &ToolResponse, key_level: Option<Level>) -> String {
    let tool = response.tool;
    if let Some(error) = response.error {
        return format!("{tool} -> error: {error:?}").to_lowercase();
    }
    match (tool, response.outcome) {
        (ToolKind::ReadProfile, ToolOutcome::ValueReturned) => match key_level {
            Some(Level::Low) => format!(
                "read_profile -> \"{}\"",
                response.payload.as_deref().unwrap_or("")
            ),
            _ => "read_profile -> value delivered".to_string(),
        },
        (ToolKind::AskUser, ToolOutcome::Answered) => format!(
            "ask_user -> \"{}\"",
            response.payload.as_deref().unwrap_or("")
        ),
        (ToolKind::RequestPermission, ToolOutcome::Granted) => {
            "request_permission -> granted".to_string()
        }
        (ToolKind::SaveProfile, ToolOutcome::Saved) => "save_profile -> saved".to_string(),
        (tool, outcome) => format!("{tool} -> {outcome:?}").to_lowercase(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn every_action_variant() -> Vec<Action> {
        vec![
            Action::Tap {
                element: "go_book".into(),
            },
            Action::LongPress {
                element: "appt_rows:0".into(),
            },
            Action::Type {
                element: "doctor".into(),
                text: "Lee".into(),
            },
            Action::Scroll {
                direction: ScrollDirection::Down,
            },
            Action::Scroll {
                direction: ScrollDirection::Left,
            },
            Action::Open {
                app: "clinic".into(),
            },
            Action::NavigateHome,
            Action::NavigateBack,
            Action::Wait,
            Action::RequestPermission {
                key: "phone".into(),
                reason: "needed for booking".into(),
            },
            Action::ReadProfile {
                key: "phone".into(),
            },
            Action::SaveProfile {
                key: "preferred_cuisine".into(),
                value: "vegetarian".into(),
                level: Level::Low,
            },
            Action::AskUser {
                question: "Which time slot?".into(),
                intent: "time_slot".into(),
            },
            Action::Terminate {
                status: TerminateStatus::Success,
            },
            Action::Terminate {
                status: TerminateStatus::Fail,
            },
        ]
    }

    // Exhaustive serialize/parse round trip over the whole vocabulary: the
    // wire protocol depends on it.
    #[test]
    fn action_round_trip_is_identity() {
        for action in every_action_variant() {
            let json = serde_json::to_string(&action).unwrap();
            let back: Action = serde_json::from_str(&json).unwrap();
            assert_eq!(action, back, "round trip changed {json}");
        }
    }

    #[test]
    fn type_summary_redacts_text() {
        let action = Action::Type {
            element: "phone".into(),
            text: "555-0100".into(),
        };
        let summary = action.summary();
        assert!(!summary.contains("555-0100"));
        assert!(summary.contains("<8 chars>"));
    }

    #[test]
    fn observation_digest_is_stable() {
        let obs = Observation {
            step: 1,
            instruction: "Book an appointment.".into(),
            screen: "home screen\n".into(),
            low_keys: vec!["dob".into(), "name".into()],
            granted_high_keys: vec![],
            last_response: None,
            history: vec![],
        };
        assert_eq!(obs.digest(), obs.digest());
        let mut other = obs.clone();
        other.step = 2;
        assert_ne!(obs.digest(), other.digest());
    }

    #[test]
    fn high_read_summary_hides_value() {
        let response = ToolResponse {
            tool: ToolKind::ReadProfile,
            outcome: ToolOutcome::ValueReturned,
            payload: Some("555-0100".into()),
            error: None,
        };
        let high = summarize_response(&response, Some(Level::High));
        assert!(!high.contains("555-0100"));
        let low = summarize_response(&response, Some(Level::Low));
        assert!(low.contains("555-0100"));
    }
}
