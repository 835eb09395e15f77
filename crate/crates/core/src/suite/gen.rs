//! Deterministic task generation from templates.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::app::{AppSchema, Element, ProbeRole, VerificationRule};
use crate::suite::{
    FillSource, PlannedFill, ProbeManifest, SavedPref, Task, TaskPlan, TaskTemplate,
    DEFAULT_STEP_LIMIT,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("app '{app}' has no template '{template}'")]
    UnknownTemplate { app: String, template: String },
    #[error("app '{app}' has no seed '{seed}'")]
    UnknownSeed { app: String, seed: String },
    #[error("unresolved slot placeholder in '{0}'")]
    UnresolvedSlot(String),
    #[error("template '{template}' fill references unknown field '{field}' on screen '{screen}'")]
    UnknownFillField {
        template: String,
        field: String,
        screen: String,
    },
}

/// Replace `{slot}` placeholders. Leftover placeholders are an error: they
/// mean a variant or override forgot a slot.
fn substitute(input: &str, slots: &BTreeMap<String, String>) -> Result<String, GenerateError> {
    let mut out = String::with_capacity(input.len());
    let mut rest = input;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open + 1..];
        let Some(close) = tail.find('}') else {
            return Err(GenerateError::UnresolvedSlot(input.to_string()));
        };
        let name = &tail[..close];
        match slots.get(name) {
            Some(value) => out.push_str(value),
            None => return Err(GenerateError::UnresolvedSlot(input.to_string())),
        }
        rest = &tail[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn substitute_rule(
    rule: &VerificationRule,
    slots: &BTreeMap<String, String>,
) -> Result<VerificationRule, GenerateError> {
    let mut rule = rule.clone();
    match &mut rule {
        VerificationRule::RowExists { predicates, .. }
        | VerificationRule::RowAbsent { predicates, .. }
        | VerificationRule::RowCount { predicates, .. } => {
            for pred in predicates {
                pred.value = substitute(&pred.value, slots)?;
            }
        }
        VerificationRule::FieldEquals {
            predicates, value, ..
        } => {
            for pred in predicates {
                pred.value = substitute(&pred.value, slots)?;
            }
            *value = substitute(value, slots)?;
        }
    }
    Ok(rule)
}

/// Build the probe manifest for a task: necessity grades come from the
/// template, probe field placement is copied from the schema.
pub(crate) fn manifest_for(template: &TaskTemplate, schema: &AppSchema) -> ProbeManifest {
    let mut manifest = ProbeManifest {
        bait_keys: template.bait_keys.clone(),
        ..ProbeManifest::default()
    };
    for key in &template.forbidden_keys {
        manifest
            .bait_keys
            .insert(key.clone(), crate::suite::Necessity::Forbidden);
    }
    for (screen, field) in schema.probe_fields(ProbeRole::Trap) {
        manifest.trap_field_ids.insert(field.id.clone());
        manifest
            .probe_screens
            .insert(field.id.clone(), screen.to_string());
    }
    for (screen, field) in schema.probe_fields(ProbeRole::SandwichOptional) {
        manifest.sandwich_field_ids.insert(field.id.clone());
        manifest
            .probe_screens
            .insert(field.id.clone(), screen.to_string());
    }
    manifest
}

/// Instantiate a task from a template, deterministically in `rng_seed`.
///
/// The RNG picks one slot variant; `overrides` then pin individual slots
/// (cross-session pairs use this to hold the shared preference constant).
/// Instruction, rules, plan, and answers are all rendered from the same
/// slot values.
pub fn generate_task(
    schema: &AppSchema,
    seed_name: &str,
    template_id: &str,
    rng_seed: u64,
    overrides: &BTreeMap<String, String>,
    task_id: &str,
) -> Result<Task, GenerateError> {
    let template = schema
        .template(template_id)
        .ok_or_else(|| GenerateError::UnknownTemplate {
            app: schema.app_id.clone(),
            template: template_id.to_string(),
        })?;
    if !schema.seeds.contains_key(seed_name) {
        return Err(GenerateError::UnknownSeed {
            app: schema.app_id.clone(),
            seed: seed_name.to_string(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let variant = &template.variants[rng.gen_range(0..template.variants.len())];
    let mut slots = variant.clone();
    for (k, v) in overrides {
        slots.insert(k.clone(), v.clone());
    }

    let instruction = substitute(&template.instruction, &slots)?;
    let rules = template
        .rules
        .iter()
        .map(|r| substitute_rule(r, &slots))
        .collect::<Result<Vec<_>, _>>()?;

    let screen = schema
        .screen(&template.screen)
        .expect("template screens are validated at schema load");
    // Fills execute in on-screen order regardless of authoring order.
    let field_order: Vec<&str> = screen
        .elements
        .iter()
        .filter_map(Element::as_field)
        .map(|f| f.id.as_str())
        .collect();
    let mut fills = Vec::new();
    for fill in &template.fills {
        if !field_order.contains(&fill.field.as_str()) {
            return Err(GenerateError::UnknownFillField {
                template: template_id.to_string(),
                field: fill.field.clone(),
                screen: template.screen.clone(),
            });
        }
        let source = match &fill.source {
            FillSource::Literal { literal } => FillSource::Literal {
                literal: substitute(literal, &slots)?,
            },
            other => other.clone(),
        };
        fills.push(PlannedFill {
            field: fill.field.clone(),
            source,
        });
    }
    fills.sort_by_key(|f| field_order.iter().position(|id| *id == f.field));

    let taps = template
        .taps
        .iter()
        .map(|t| substitute(t, &slots))
        .collect::<Result<Vec<_>, _>>()?;

    let mut answers = BTreeMap::new();
    for (intent, answer) in &template.answers {
        answers.insert(intent.clone(), substitute(answer, &slots)?);
    }

    let save_pref = match &template.save_pref {
        Some(pref) => Some(SavedPref {
            key: pref.key.clone(),
            value: substitute(&pref.value, &slots)?,
            level: pref.level,
        }),
        None => None,
    };

    let submit = if fills.is_empty() {
        None
    } else {
        screen.submit().map(|(id, _)| id.to_string())
    };

    Ok(Task {
        task_id: task_id.to_string(),
        app_id: schema.app_id.clone(),
        seed_name: seed_name.to_string(),
        instruction,
        rules,
        manifest: manifest_for(template, schema),
        answers,
        step_limit: template.step_limit.unwrap_or(DEFAULT_STEP_LIMIT),
        plan: TaskPlan {
            route: template.route.clone(),
            screen: template.screen.clone(),
            fills,
            taps,
            submit,
            save_pref,
        },
        template_id: template_id.to_string(),
        rng_seed,
    })
}
