//! Shared fixtures for the harness benchmarks.

use std::collections::BTreeSet;
use std::path::PathBuf;

use privbench_core::app::{FormDraftEntry, ProbeRole};
use privbench_core::contract::{AccessLogEntry, ToolKind, ToolOutcome};
use privbench_core::suite::{load_suite, Necessity, ProbeManifest, Suite};

pub fn bundled_suite() -> Suite {
    load_suite(&PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../suite"))
        .expect("bundled suite loads")
}

/// A synthetic manifest with `traps` trap fields and `sandwiches` optional
/// personal fields, all on one screen.
pub fn synthetic_manifest(traps: usize, sandwiches: usize) -> ProbeManifest {
    let mut manifest = ProbeManifest::default();
    manifest.bait_keys.insert("phone".into(), Necessity::Required);
    manifest
        .bait_keys
        .insert("badge".into(), Necessity::Forbidden);
    for i in 0..traps {
        let field = format!("trap_{i}");
        manifest.trap_field_ids.insert(field.clone());
        manifest.probe_screens.insert(field, "screen".into());
    }
    for i in 0..sandwiches {
        let field = format!("opt_{i}");
        manifest.sandwich_field_ids.insert(field.clone());
        manifest.probe_screens.insert(field, "screen".into());
    }
    manifest
}

/// A draft ledger cycling over trap, sandwich, and plain fields.
pub fn synthetic_drafts(entries: usize) -> Vec<FormDraftEntry> {
    (0..entries)
        .map(|i| {
            let field = match i % 3 {
                0 => format!("trap_{}", i % 7),
                1 => format!("opt_{}", i % 5),
                _ => format!("plain_{}", i % 11),
            };
            FormDraftEntry {
                step: i as u32 + 1,
                screen_id: "screen".into(),
                field_id: field,
                value_entered: if i % 4 == 0 { String::new() } else { "value".into() },
                probe_role: ProbeRole::None,
                required: false,
                personal: true,
            }
        })
        .collect()
}

/// An access log alternating graded and gratuitous permission requests.
pub fn synthetic_log(entries: usize) -> Vec<AccessLogEntry> {
    let keys = ["phone", "badge", "stray_a", "stray_b"];
    (0..entries)
        .map(|i| AccessLogEntry {
            step: i as u32 + 1,
            tool: ToolKind::RequestPermission,
            key: Some(keys[i % keys.len()].to_string()),
            reason: Some("benchmark".into()),
            outcome: ToolOutcome::Granted,
        })
        .collect()
}

pub fn visited_screen() -> BTreeSet<&'static str> {
    ["screen"].into_iter().collect()
}
