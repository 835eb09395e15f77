//! Scripted baseline policies.
//!
//! The minimal-disclosure oracle defines the privacy ceiling: it follows the
//! task plan exactly: required fields only, permission requests only at
//! first required use, probe fields untouched, preferences saved or used
//! only when the task instructs. The greedy completionist is its foil: it
//! fills every visible field and requests every HIGH key it encounters, in
//! on-screen order. The random baseline samples uniformly from the actions
//! available on the current screen.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Action, Decision, Observation, Policy, PolicyError, TerminateStatus};
use crate::app::{AppSchema, ScrollDirection};
use crate::contract::ToolResponse;
use crate::digest::sha256_hex;
use crate::profile::Level;
use crate::suite::{FillSource, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    OracleMinimal,
    /// Oracle variant that never saves preferences; the negative arm of the
    /// later-session diagnostics.
    OracleNoSave,
    GreedyCompletionist,
    Random,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::OracleMinimal => "oracle_minimal",
            PolicyKind::OracleNoSave => "oracle_no_save",
            PolicyKind::GreedyCompletionist => "greedy_completionist",
            PolicyKind::Random => "random",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle_minimal" | "oracle" => Ok(PolicyKind::OracleMinimal),
            "oracle_no_save" | "never_saving" => Ok(PolicyKind::OracleNoSave),
            "greedy_completionist" | "greedy" => Ok(PolicyKind::GreedyCompletionist),
            "random" => Ok(PolicyKind::Random),
            other => Err(format!(
                "unknown policy '{other}' (expected oracle_minimal, oracle_no_save, \
                 greedy_completionist, or random)"
            )),
        }
    }
}

/// Stable per-episode RNG seed derived from the run seed and the task id.
pub fn policy_rng_seed(run_seed: u64, task_id: &str) -> u64 {
    let mut bytes = run_seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(task_id.as_bytes());
    let hex = sha256_hex(&bytes);
    u64::from_str_radix(&hex[..16], 16).expect("sha256 hex prefix is valid")
}

/// Build a policy instance for one episode. `profile_levels` is the level
/// map of the episode's starting profile seed; keys not in the map (for
/// example a preference saved in an earlier session) are treated as LOW and
/// read without a permission request.
pub fn baseline_policy(
    kind: PolicyKind,
    task: &Task,
    schema: &AppSchema,
    profile_levels: &BTreeMap<String, Level>,
    rng_seed: u64,
) -> Box<dyn Policy> {
    match kind {
        PolicyKind::OracleMinimal => Box::new(ScriptedPolicy::new(
            kind.name(),
            build_script(task, schema, Style::Minimal, true),
            profile_levels.clone(),
        )),
        PolicyKind::OracleNoSave => Box::new(ScriptedPolicy::new(
            kind.name(),
            build_script(task, schema, Style::Minimal, false),
            profile_levels.clone(),
        )),
        PolicyKind::GreedyCompletionist => Box::new(ScriptedPolicy::new(
            kind.name(),
            build_script(task, schema, Style::Greedy, true),
            profile_levels.clone(),
        )),
        PolicyKind::Random => Box::new(RandomPolicy::new(
            task.app_id.clone(),
            policy_rng_seed(rng_seed, &task.task_id),
        )),
    }
}

// ---------------------------------------------------------------------------
// Scripted policies
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Style {
    Minimal,
    Greedy,
}

#[derive(Debug, Clone)]
enum Instr {
    Emit(Action),
    /// Request permission for `key` unless it is LOW/unknown or already
    /// requested by this policy.
    RequestIfNeeded { key: String, reason: String },
    Read { key: String },
    /// Type the previous tool response's payload into `field`; missing
    /// payload (a failed read) aborts the episode as a fail claim.
    TypeLast { field: String },
}

struct ScriptedPolicy {
    name: &'static str,
    script: VecDeque<Instr>,
    requested: BTreeSet<String>,
    levels: BTreeMap<String, Level>,
}

impl ScriptedPolicy {
    fn new(name: &'static str, script: VecDeque<Instr>, levels: BTreeMap<String, Level>) -> Self {
        Self {
            name,
            script,
            requested: BTreeSet::new(),
            levels,
        }
    }
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> &str {
        self.name
    }

    fn decide(
        &mut self,
        _observation: &Observation,
        last_response: Option<&ToolResponse>,
    ) -> Result<Decision, PolicyError> {
        loop {
            let Some(instr) = self.script.pop_front() else {
                return Ok(Decision::act(Action::Terminate {
                    status: TerminateStatus::Fail,
                }));
            };
            match instr {
                Instr::Emit(action) => return Ok(Decision::act(action)),
                Instr::RequestIfNeeded { key, reason } => {
                    let high = self.levels.get(&key) == Some(&Level::High);
                    if high && self.requested.insert(key.clone()) {
                        return Ok(Decision::act(Action::RequestPermission { key, reason }));
                    }
                }
                Instr::Read { key } => return Ok(Decision::act(Action::ReadProfile { key })),
                Instr::TypeLast { field } => {
                    let payload = last_response.and_then(|r| {
                        if r.is_error() {
                            None
                        } else {
                            r.payload.clone()
                        }
                    });
                    return Ok(Decision::act(match payload {
                        Some(text) => Action::Type {
                            element: field,
                            text,
                        },
                        None => Action::Terminate {
                            status: TerminateStatus::Fail,
                        },
                    }));
                }
            }
        }
    }
}

/// Compile a task plan into a deterministic action script.
fn build_script(task: &Task, schema: &AppSchema, style: Style, save: bool) -> VecDeque<Instr> {
    let mut script = VecDeque::new();
    script.push_back(Instr::Emit(Action::Open {
        app: task.app_id.clone(),
    }));
    for button in &task.plan.route {
        script.push_back(Instr::Emit(Action::Tap {
            element: button.clone(),
        }));
    }

    let screen = schema
        .screen(&task.plan.screen)
        .expect("plan screens are validated");
    let mut page = 0u32;
    let planned: BTreeMap<&str, &FillSource> = task
        .plan
        .fills
        .iter()
        .map(|f| (f.field.as_str(), &f.source))
        .collect();

    match style {
        Style::Minimal => {
            for fill in &task.plan.fills {
                let field = screen.field(&fill.field).expect("plan fields are validated");
                scroll_to(&mut script, &mut page, field.page);
                emit_fill(&mut script, &field.id, &field.label, &fill.source);
            }
        }
        Style::Greedy => {
            for field in screen.fields() {
                scroll_to(&mut script, &mut page, field.page);
                match planned.get(field.id.as_str()) {
                    Some(source) => emit_fill(&mut script, &field.id, &field.label, source),
                    None => match &field.profile_key {
                        Some(key) => emit_fill(
                            &mut script,
                            &field.id,
                            &field.label,
                            &FillSource::Profile {
                                profile: key.clone(),
                            },
                        ),
                        None => script.push_back(Instr::Emit(Action::Type {
                            element: field.id.clone(),
                            text: "Yes please".to_string(),
                        })),
                    },
                }
            }
        }
    }

    for tap in &task.plan.taps {
        script.push_back(Instr::Emit(Action::Tap {
            element: tap.clone(),
        }));
    }
    if let Some(submit) = &task.plan.submit {
        let submit_page = screen
            .elements
            .iter()
            .find(|e| e.id() == submit)
            .map(|e| e.page())
            .unwrap_or(0);
        scroll_to(&mut script, &mut page, submit_page);
        script.push_back(Instr::Emit(Action::Tap {
            element: submit.clone(),
        }));
    }
    if save {
        if let Some(pref) = &task.plan.save_pref {
            script.push_back(Instr::Emit(Action::SaveProfile {
                key: pref.key.clone(),
                value: pref.value.clone(),
                level: pref.level,
            }));
        }
    }
    script.push_back(Instr::Emit(Action::Terminate {
        status: TerminateStatus::Success,
    }));
    script
}

fn scroll_to(script: &mut VecDeque<Instr>, current: &mut u32, target: u32) {
    while *current < target {
        script.push_back(Instr::Emit(Action::Scroll {
            direction: ScrollDirection::Down,
        }));
        *current += 1;
    }
    while *current > target {
        script.push_back(Instr::Emit(Action::Scroll {
            direction: ScrollDirection::Up,
        }));
        *current -= 1;
    }
}

fn emit_fill(script: &mut VecDeque<Instr>, field: &str, label: &str, source: &FillSource) {
    match source {
        FillSource::Literal { literal } => script.push_back(Instr::Emit(Action::Type {
            element: field.to_string(),
            text: literal.clone(),
        })),
        FillSource::Profile { profile } => {
            script.push_back(Instr::RequestIfNeeded {
                key: profile.clone(),
                reason: format!("needed for '{label}'"),
            });
            script.push_back(Instr::Read {
                key: profile.clone(),
            });
            script.push_back(Instr::TypeLast {
                field: field.to_string(),
            });
        }
        FillSource::Ask { ask, question } => {
            script.push_back(Instr::Emit(Action::AskUser {
                question: question.clone(),
                intent: ask.clone(),
            }));
            script.push_back(Instr::TypeLast {
                field: field.to_string(),
            });
        }
    }
}

// ---------------------------------------------------------------------------
// Random baseline
// ---------------------------------------------------------------------------

struct RandomPolicy {
    app_id: String,
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    fn new(app_id: String, seed: u64) -> Self {
        Self {
            app_id,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

const TYPE_POOL: &[&str] = &["ok", "maybe later", "42", "coffee"];

/// Element ids visible in a rendered screen, parsed from the stable render
/// line format.
fn visible_elements(screen: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for line in screen.lines() {
        let trimmed = line.trim_start();
        let Some(rest) = trimmed.strip_prefix("- ") else {
            continue;
        };
        let mut parts = rest.split_whitespace();
        let (Some(kind), Some(id)) = (parts.next(), parts.next()) else {
            continue;
        };
        match kind {
            "field" | "button" | "submit" | "row" | "app" => {
                out.push((kind.to_string(), id.to_string()));
            }
            _ => {}
        }
    }
    out
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(
        &mut self,
        observation: &Observation,
        _last_response: Option<&ToolResponse>,
    ) -> Result<Decision, PolicyError> {
        let mut menu: Vec<Action> = vec![
            Action::Wait,
            Action::Scroll {
                direction: ScrollDirection::Down,
            },
            Action::Scroll {
                direction: ScrollDirection::Up,
            },
            Action::NavigateBack,
            Action::NavigateHome,
            Action::Open {
                app: self.app_id.clone(),
            },
            Action::AskUser {
                question: "Any preference?".into(),
                intent: "misc".into(),
            },
            Action::SaveProfile {
                key: "note".into(),
                value: "remember this".into(),
                level: Level::Low,
            },
            Action::ReadProfile {
                key: "mystery_key".into(),
            },
            Action::Terminate {
                status: TerminateStatus::Success,
            },
            Action::Terminate {
                status: TerminateStatus::Fail,
            },
        ];
        for (kind, id) in visible_elements(&observation.screen) {
            match kind.as_str() {
                "field" => {
                    let text = TYPE_POOL[self.rng.gen_range(0..TYPE_POOL.len())];
                    menu.push(Action::Type {
                        element: id,
                        text: text.to_string(),
                    });
                }
                "button" | "submit" | "row" => menu.push(Action::Tap { element: id }),
                _ => {}
            }
        }
        for key in observation
            .low_keys
            .iter()
            .chain(observation.granted_high_keys.iter())
        {
            menu.push(Action::ReadProfile { key: key.clone() });
            menu.push(Action::RequestPermission {
                key: key.clone(),
                reason: "exploring".into(),
            });
        }
        let choice = self.rng.gen_range(0..menu.len());
        Ok(Decision::act(menu.swap_remove(choice)))
    }
}

/// A policy that only ever waits; used to exercise the step limit.
pub struct WaitPolicy;

impl Policy for WaitPolicy {
    fn name(&self) -> &str {
        "wait_only"
    }

    fn decide(
        &mut self,
        _observation: &Observation,
        _last_response: Option<&ToolResponse>,
    ) -> Result<Decision, PolicyError> {
        Ok(Decision::act(Action::Wait))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_kind_parses_aliases() {
        assert_eq!(
            "oracle".parse::<PolicyKind>().unwrap(),
            PolicyKind::OracleMinimal
        );
        assert_eq!(
            "greedy_completionist".parse::<PolicyKind>().unwrap(),
            PolicyKind::GreedyCompletionist
        );
        assert!("telepathy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn rng_seed_depends_on_task_and_run_seed() {
        let a = policy_rng_seed(7, "clinic-book-01");
        assert_eq!(a, policy_rng_seed(7, "clinic-book-01"));
        assert_ne!(a, policy_rng_seed(8, "clinic-book-01"));
        assert_ne!(a, policy_rng_seed(7, "clinic-book-02"));
    }

    #[test]
    fn visible_elements_parse_render_lines() {
        let render = "app clinic | screen manage | page 1/1\n\
                      - list appt_rows \"Upcoming appointments\"\n\
                      \x20 - row appt_rows:0 {doctor=Chen, time=14:00}\n\
                      - button go_home \"Home\"\n";
        let parsed = visible_elements(render);
        assert!(parsed.contains(&("row".to_string(), "appt_rows:0".to_string())));
        assert!(parsed.contains(&("button".to_string(), "go_home".to_string())));
    }
}
