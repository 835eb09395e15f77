//! Database state: seeded tables plus the append-only `form_drafts` audit
//! ledger, with canonical serialization for replayable digests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::schema::{AppSchema, ProbeRole};
use crate::digest::{escape_field, sha256_hex};

pub type Row = BTreeMap<String, String>;

/// One recorded field edit. An entry is appended for every type action into
/// a field, whether or not the form is ever submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormDraftEntry {
    pub step: u32,
    pub screen_id: String,
    pub field_id: String,
    pub value_entered: String,
    pub probe_role: ProbeRole,
    pub required: bool,
    pub personal: bool,
}

/// The full mutable state of one app instance during one episode.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseState {
    pub tables: BTreeMap<String, Vec<Row>>,
    pub form_drafts: Vec<FormDraftEntry>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeedError {
    #[error("unknown seed '{0}'")]
    UnknownSeed(String),
}

/// Deep-copy a seed fixture into a fresh state with an empty draft ledger.
/// Rows are normalized so that every table column is present (missing
/// columns seed as empty strings).
pub fn reset_to_seed(schema: &AppSchema, seed_name: &str) -> Result<DatabaseState, SeedError> {
    let seed = schema
        .seeds
        .get(seed_name)
        .ok_or_else(|| SeedError::UnknownSeed(seed_name.to_string()))?;
    let mut state = DatabaseState::default();
    for table in &schema.tables {
        let rows = seed.get(&table.name).cloned().unwrap_or_default();
        let normalized = rows
            .into_iter()
            .map(|row| normalize_row(&table.columns, row))
            .collect();
        state.tables.insert(table.name.clone(), normalized);
    }
    Ok(state)
}

pub fn normalize_row(columns: &[String], mut partial: Row) -> Row {
    let mut row = Row::new();
    for col in columns {
        row.insert(col.clone(), partial.remove(col).unwrap_or_default());
    }
    row
}

impl DatabaseState {
    /// Latest draft value for a field on a screen, if any edit happened.
    pub fn current_draft(&self, screen_id: &str, field_id: &str) -> Option<&str> {
        self.form_drafts
            .iter()
            .rev()
            .find(|d| d.screen_id == screen_id && d.field_id == field_id)
            .map(|d| d.value_entered.as_str())
    }

    /// Rows of a table in canonical (sorted) order. This is the order row
    /// lists render in and the order row indices address.
    pub fn sorted_rows(&self, table: &str) -> Vec<&Row> {
        let mut rows: Vec<&Row> = self
            .tables
            .get(table)
            .map(|rows| rows.iter().collect())
            .unwrap_or_default();
        rows.sort_by_key(|row| render_row(row));
        rows
    }

    /// Canonical text form: newline-delimited records with stable key
    /// ordering. Tables sort by name, rows sort lexicographically, drafts
    /// keep append order. Identical states produce identical bytes.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (name, rows) in &self.tables {
            out.push_str("table\t");
            out.push_str(&escape_field(name));
            out.push('\n');
            let mut lines: Vec<String> = rows.iter().map(render_row).collect();
            lines.sort();
            for line in lines {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push_str("drafts\n");
        for draft in &self.form_drafts {
            out.push_str(&format!(
                "draft\tstep={}\tscreen={}\tfield={}\tvalue={}\trole={:?}\trequired={}\tpersonal={}\n",
                draft.step,
                escape_field(&draft.screen_id),
                escape_field(&draft.field_id),
                escape_field(&draft.value_entered),
                draft.probe_role,
                draft.required,
                draft.personal,
            ));
        }
        out
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical_text().as_bytes())
    }
}

fn render_row(row: &Row) -> String {
    let mut line = String::from("row");
    for (col, value) in row {
        line.push('\t');
        line.push_str(&escape_field(col));
        line.push('=');
        line.push_str(&escape_field(value));
    }
    line
}
