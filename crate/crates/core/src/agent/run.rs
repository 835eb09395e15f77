//! Episode execution: the render → decide → apply loop.

use crate::agent::{
    summarize_response, Action, Decision, EpisodeResult, Observation, Policy, TerminateStatus,
    TerminatedBy, TrajectoryStep,
};
use crate::app::{
    apply_gui_action, render_screen, reset_to_seed, AppSchema, Cursor, GuiAction,
};
use crate::contract::{ContractSession, ToolResponse, UserSimPolicy};
use crate::profile::{Level, UserProfile};
use crate::suite::{CrossSessionPair, Task};

/// Run one episode of `task` under `policy`, starting from the given
/// profile. Returns the complete record plus the profile as it stood at the
/// end (grants intact; ending the session is the pair runner's call).
pub fn run_episode(
    task: &Task,
    schema: &AppSchema,
    policy: &mut dyn Policy,
    profile: UserProfile,
) -> (EpisodeResult, UserProfile) {
    let mut notes: Vec<String> = Vec::new();

    // A schema/task mismatch or unknown seed is a harness error, recorded
    // rather than thrown.
    if schema.app_id != task.app_id {
        notes.push(format!(
            "harness error: task '{}' targets app '{}', got schema '{}'",
            task.task_id, task.app_id, schema.app_id
        ));
        return (
            harness_error_result(task, profile.clone(), notes),
            profile,
        );
    }
    let mut state = match reset_to_seed(schema, &task.seed_name) {
        Ok(state) => state,
        Err(err) => {
            notes.push(format!("harness error: {err}"));
            return (
                harness_error_result(task, profile.clone(), notes),
                profile,
            );
        }
    };

    let mut session = ContractSession::new(
        profile,
        UserSimPolicy::always_grant(task.answers.clone()),
    );
    let mut cursor = Cursor::home();
    let mut trajectory: Vec<TrajectoryStep> = Vec::new();
    let mut history: Vec<String> = Vec::new();
    let mut last_response: Option<ToolResponse> = None;
    let mut last_summary: Option<String> = None;
    let mut terminated_by = TerminatedBy::StepLimit;

    for step in 1..=task.step_limit {
        let observation = build_observation(
            step,
            task,
            schema,
            &state,
            &cursor,
            &session,
            last_summary.clone(),
            history.clone(),
        );
        let observation_digest = observation.digest();

        let Decision { action, note } = match policy.decide(&observation, last_response.as_ref()) {
            Ok(decision) => decision,
            Err(err) => {
                notes.push(format!("step {step}: {err}"));
                terminated_by = TerminatedBy::HarnessError;
                break;
            }
        };
        if let Some(note) = note {
            notes.push(format!("step {step}: {note}"));
        }

        let mut step_response: Option<ToolResponse> = None;
        let outcome: String = match &action {
            Action::Terminate { status } => {
                terminated_by = match status {
                    TerminateStatus::Success => TerminatedBy::AgentSuccessClaim,
                    TerminateStatus::Fail => TerminatedBy::AgentFailClaim,
                };
                "episode terminated".to_string()
            }
            Action::RequestPermission { key, reason } => {
                let response = session.request_permission(step, key, reason);
                let summary = summarize_response(&response, level_of(&session, key));
                step_response = Some(response);
                summary
            }
            Action::ReadProfile { key } => {
                let level = level_of(&session, key);
                let response = session.read_profile(step, key);
                let summary = summarize_response(&response, level);
                step_response = Some(response);
                summary
            }
            Action::SaveProfile { key, value, level } => {
                let response = session.save_profile(step, key, value, *level);
                let summary = summarize_response(&response, Some(*level));
                step_response = Some(response);
                summary
            }
            Action::AskUser { question, intent } => {
                let response = session.ask_user(step, question, intent);
                let summary = summarize_response(&response, None);
                step_response = Some(response);
                summary
            }
            gui => match to_gui_action(gui) {
                Some(gui_action) => {
                    match apply_gui_action(schema, &mut state, &mut cursor, &gui_action, step) {
                        Ok(transition) => transition.summary(),
                        Err(err) => format!("error: {err}"),
                    }
                }
                None => "error: unsupported action".to_string(),
            },
        };

        let terminated = matches!(action, Action::Terminate { .. });
        history.push(format!("{step}. {} => {outcome}", action.summary()));
        trajectory.push(TrajectoryStep {
            step,
            observation_digest,
            action,
            outcome: outcome.clone(),
            screen_after: cursor.screen.clone(),
        });
        last_summary = Some(outcome);
        last_response = step_response;

        if terminated {
            break;
        }
    }

    let final_state_digest = state.digest();
    let (profile, access_log) = session.finish();
    let episode = EpisodeResult {
        task_id: task.task_id.clone(),
        app_id: task.app_id.clone(),
        terminated_by,
        final_state: state,
        final_state_digest,
        trajectory,
        access_log,
        profile_after: profile.list_items().into_iter().cloned().collect(),
        notes,
    };
    (episode, profile)
}

fn harness_error_result(task: &Task, profile: UserProfile, notes: Vec<String>) -> EpisodeResult {
    let state = crate::app::DatabaseState::default();
    EpisodeResult {
        task_id: task.task_id.clone(),
        app_id: task.app_id.clone(),
        terminated_by: TerminatedBy::HarnessError,
        final_state_digest: state.digest(),
        final_state: state,
        trajectory: Vec::new(),
        access_log: Vec::new(),
        profile_after: profile.list_items().into_iter().cloned().collect(),
        notes,
    }
}

fn level_of(session: &ContractSession, key: &str) -> Option<Level> {
    session.profile().get_item(key).map(|item| item.level)
}

fn to_gui_action(action: &Action) -> Option<GuiAction<'_>> {
    match action {
        Action::Tap { element } => Some(GuiAction::Tap { element }),
        Action::LongPress { element } => Some(GuiAction::LongPress { element }),
        Action::Type { element, text } => Some(GuiAction::Type { element, text }),
        Action::Scroll { direction } => Some(GuiAction::Scroll(*direction)),
        Action::Open { app } => Some(GuiAction::Open { app }),
        Action::NavigateHome => Some(GuiAction::NavigateHome),
        Action::NavigateBack => Some(GuiAction::NavigateBack),
        Action::Wait => Some(GuiAction::Wait),
        _ => None,
    }
}

#[allow(clippy::too_many_arguments)]
fn build_observation(
    step: u32,
    task: &Task,
    schema: &AppSchema,
    state: &crate::app::DatabaseState,
    cursor: &Cursor,
    session: &ContractSession,
    last_summary: Option<String>,
    history: Vec<String>,
) -> Observation {
    let profile = session.profile();
    let low_keys: Vec<String> = profile
        .list_items()
        .into_iter()
        .filter(|item| item.level == Level::Low)
        .map(|item| item.key.clone())
        .collect();
    let granted_high_keys: Vec<String> = profile.grants().map(|g| g.key.clone()).collect();
    Observation {
        step,
        instruction: task.instruction.clone(),
        screen: render_screen(schema, state, cursor),
        low_keys,
        granted_high_keys,
        last_response: last_summary,
        history,
    }
}

/// Result bundle for one cross-session pair run (plus the pre-seeded proxy
/// of session B, used by the `used_when_needed` diagnostic).
#[derive(Debug, Clone)]
pub struct PairEpisodes {
    pub a: EpisodeResult,
    pub b: EpisodeResult,
    pub proxy: Option<EpisodeResult>,
}

/// Run a pair: session A, the session boundary (grants cleared, items
/// kept), then session B against B's own fresh seed with the surviving
/// profile.
pub fn run_pair(
    pair: &CrossSessionPair,
    schema_a: &AppSchema,
    schema_b: &AppSchema,
    make_policy: &mut dyn FnMut(&Task) -> Box<dyn Policy>,
    profile: UserProfile,
) -> (EpisodeResult, EpisodeResult, UserProfile) {
    let mut policy_a = make_policy(&pair.task_a);
    let (episode_a, mut profile) = run_episode(&pair.task_a, schema_a, policy_a.as_mut(), profile);
    profile.end_session();
    let mut policy_b = make_policy(&pair.task_b);
    let (episode_b, profile) = run_episode(&pair.task_b, schema_b, policy_b.as_mut(), profile);
    (episode_a, episode_b, profile)
}

/// Run session B standalone with the target preference pre-seeded, as the
/// single-session proxy for "uses a saved preference when relevant".
pub fn run_proxy(
    pair: &CrossSessionPair,
    schema_b: &AppSchema,
    policy: &mut dyn Policy,
    mut profile: UserProfile,
) -> EpisodeResult {
    profile
        .upsert_item(
            &pair.target_pref.key,
            &pair.target_pref.value,
            Level::Low,
            crate::profile::Source::AgentSaved,
            None,
        )
        .expect("pre-seeding a fresh profile cannot conflict");
    let (episode, _) = run_episode(&pair.task_b, schema_b, policy, profile);
    episode
}
