//! Task and pair validation: static consistency checks plus oracle
//! dry-runs for satisfiability and cross-session binding.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::agent::{run_episode, baseline_policy, PolicyKind, TerminatedBy};
use crate::app::{evaluate_rule, rule_references_column, validate_rule, AppSchema, ProbeRole};
use crate::profile::{Level, Source, UserProfile};
use crate::suite::{load::TargetPref, CrossSessionPair, FillSource, Necessity, Task};

/// Outcome of validating one task; failures are human-readable and
/// accumulate rather than aborting at the first problem.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub task_id: String,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum PairError {
    #[error("pair '{0}': task A and task B must have distinct task ids")]
    IdenticalTasks(String),
    #[error("pair '{pair_id}': task A does not save the target preference ({detail})")]
    MissingSave { pair_id: String, detail: String },
    #[error(
        "pair '{0}': dependency not binding: task B succeeds even without the saved preference"
    )]
    DependencyNotBinding(String),
    #[error("pair '{0}': task B fails even with the preference pre-seeded")]
    UnsatisfiableWithPref(String),
}

fn preseed(profile: &UserProfile, extra: &[(String, String)]) -> UserProfile {
    let mut profile = profile.clone();
    for (key, value) in extra {
        profile
            .upsert_item(key, value, Level::Low, Source::AgentSaved, None)
            .expect("pre-seeding validation profiles cannot conflict");
    }
    profile
}

fn oracle_succeeds(task: &Task, schema: &AppSchema, profile: UserProfile) -> bool {
    let levels = profile.levels();
    let mut policy = baseline_policy(PolicyKind::OracleMinimal, task, schema, &levels, 0);
    let (episode, _) = run_episode(task, schema, policy.as_mut(), profile);
    episode.terminated_by == TerminatedBy::AgentSuccessClaim
        && task
            .rules
            .iter()
            .all(|rule| evaluate_rule(rule, &episode.final_state))
}

/// The necessity grade the schema itself implies for a HIGH key on the
/// task's target screen: required if a required field binds it, plausible
/// if only optional non-trap fields do, unnecessary if unbound.
fn derived_grade(task: &Task, schema: &AppSchema, key: &str) -> Necessity {
    let Some(screen) = schema.screen(&task.plan.screen) else {
        return Necessity::Unnecessary;
    };
    let mut bound_optional = false;
    for field in screen.fields() {
        if field.profile_key.as_deref() != Some(key) {
            continue;
        }
        if field.required {
            return Necessity::Required;
        }
        if field.probe_role != ProbeRole::Trap {
            bound_optional = true;
        }
    }
    if bound_optional {
        Necessity::Plausible
    } else {
        Necessity::Unnecessary
    }
}

/// Validate one task against its schema and the profile seed.
///
/// `preseed_items` supplies profile items assumed present at the episode's
/// start (session-B tasks of a pair are validated with their target
/// preference pre-seeded).
pub fn validate_task(
    task: &Task,
    schema: &AppSchema,
    profile: &UserProfile,
    preseed_items: &[(String, String)],
) -> ValidationReport {
    let mut failures = Vec::new();
    let fail = |failures: &mut Vec<String>, msg: String| failures.push(msg);

    if task.rules.is_empty() {
        fail(&mut failures, "task has no verification rules".into());
    }
    if task.step_limit == 0 {
        fail(&mut failures, "step_limit must be positive".into());
    }
    if task.app_id != schema.app_id {
        fail(
            &mut failures,
            format!(
                "task targets app '{}' but was validated against '{}'",
                task.app_id, schema.app_id
            ),
        );
    }
    if !schema.seeds.contains_key(&task.seed_name) {
        fail(
            &mut failures,
            format!("unknown seed '{}'", task.seed_name),
        );
    }

    for rule in &task.rules {
        if let Err(detail) = validate_rule(rule, schema) {
            fail(&mut failures, detail);
        }
    }

    // Rules must not reference trap fields (trap-referenced-by-rule).
    for (screen_id, trap) in schema.probe_fields(ProbeRole::Trap) {
        let Some(screen) = schema.screen(screen_id) else {
            continue;
        };
        let Some((_, table)) = screen.submit() else {
            continue;
        };
        for rule in &task.rules {
            if rule_references_column(rule, table, &trap.id) {
                fail(
                    &mut failures,
                    format!("trap-referenced-by-rule: '{}'", trap.id),
                );
            }
        }
    }

    // Manifest consistency with the schema's probe placement.
    let schema_traps: BTreeSet<String> = schema
        .probe_fields(ProbeRole::Trap)
        .into_iter()
        .map(|(_, f)| f.id.clone())
        .collect();
    if task.manifest.trap_field_ids != schema_traps {
        fail(
            &mut failures,
            "manifest trap fields disagree with schema probe placement".into(),
        );
    }
    let schema_sandwiches: BTreeSet<String> = schema
        .probe_fields(ProbeRole::SandwichOptional)
        .into_iter()
        .map(|(_, f)| f.id.clone())
        .collect();
    if task.manifest.sandwich_field_ids != schema_sandwiches {
        fail(
            &mut failures,
            "manifest sandwich fields disagree with schema probe placement".into(),
        );
    }

    // Grades: HIGH keys only, each consistent with how the flow binds the
    // key; forbidden keys must be unbound in the flow.
    let levels = profile.levels();
    for (key, grade) in &task.manifest.bait_keys {
        if levels.get(key) != Some(&Level::High) {
            fail(
                &mut failures,
                format!("graded key '{key}' is not a HIGH profile key"),
            );
            continue;
        }
        let derived = derived_grade(task, schema, key);
        let consistent = match grade {
            Necessity::Forbidden => derived == Necessity::Unnecessary,
            other => *other == derived,
        };
        if !consistent {
            fail(
                &mut failures,
                format!(
                    "grade for '{key}' declared {grade} but the flow implies {derived}"
                ),
            );
        }
    }

    // Plan cross-checks: referenced elements must exist, ask fills must
    // have canned answers.
    match schema.screen(&task.plan.screen) {
        None => fail(
            &mut failures,
            format!("plan targets unknown screen '{}'", task.plan.screen),
        ),
        Some(screen) => {
            for fill in &task.plan.fills {
                if screen.field(&fill.field).is_none() {
                    fail(
                        &mut failures,
                        format!("plan fills unknown field '{}'", fill.field),
                    );
                }
                if let FillSource::Ask { ask, .. } = &fill.source {
                    if !task.answers.contains_key(ask) {
                        fail(
                            &mut failures,
                            format!("ask fill '{ask}' has no canned answer"),
                        );
                    }
                }
            }
        }
    }

    // Satisfiability: the minimal-disclosure oracle must finish within the
    // step limit and make every rule true.
    if failures.is_empty() && !oracle_succeeds(task, schema, preseed(profile, preseed_items)) {
        fail(
            &mut failures,
            "oracle dry-run does not satisfy the rules within the step limit".into(),
        );
    }

    ValidationReport {
        task_id: task.task_id.clone(),
        failures,
    }
}

/// Assemble a cross-session pair after checking that B-success is binding
/// on the preference: the oracle without the preference must fail B, and
/// with it pre-seeded must succeed.
pub fn build_pair(
    pair_id: &str,
    task_a: Task,
    task_b: Task,
    target_pref: TargetPref,
    schema_b: &AppSchema,
    profile: &UserProfile,
) -> Result<CrossSessionPair, PairError> {
    if task_a.task_id == task_b.task_id {
        return Err(PairError::IdenticalTasks(pair_id.to_string()));
    }
    match &task_a.plan.save_pref {
        Some(pref) if pref.key == target_pref.key && pref.value == target_pref.value => {}
        Some(pref) => {
            return Err(PairError::MissingSave {
                pair_id: pair_id.to_string(),
                detail: format!(
                    "plan saves ('{}', '{}'), target is ('{}', '{}')",
                    pref.key, pref.value, target_pref.key, target_pref.value
                ),
            })
        }
        None => {
            return Err(PairError::MissingSave {
                pair_id: pair_id.to_string(),
                detail: "task A's plan saves nothing".into(),
            })
        }
    }

    if oracle_succeeds(&task_b, schema_b, profile.clone()) {
        return Err(PairError::DependencyNotBinding(pair_id.to_string()));
    }
    let with_pref = preseed(
        profile,
        &[(target_pref.key.clone(), target_pref.value.clone())],
    );
    if !oracle_succeeds(&task_b, schema_b, with_pref) {
        return Err(PairError::UnsatisfiableWithPref(pair_id.to_string()));
    }

    Ok(CrossSessionPair {
        pair_id: pair_id.to_string(),
        task_a,
        task_b,
        target_pref,
    })
}
