//! Mock-app engine: declarative app schemas executed as deterministic
//! screen/field state machines over a tabular store.
//!
//! An app is data, not code: screens, fields, navigation edges, table
//! definitions, seeded states, and task templates all live in one schema
//! document. The engine records every field edit into an append-only
//! `form_drafts` audit table: even edits that are never submitted: which
//! is what makes disclosure-level auditing possible.

mod engine;
mod rules;
mod schema;
mod state;

pub use engine::{render_screen, apply_gui_action, Cursor, EngineError, GuiAction, ScrollDirection, Transition};
pub use rules::{evaluate_rule, rule_references_column, validate_rule, ColumnPredicate, Comparator, VerificationRule};
pub use schema::{
    load_schema, AppSchema, Element, FieldSpec, NavEdge, ProbeRole, SchemaError, ScreenSpec,
    TableDef,
};
pub use state::{reset_to_seed, DatabaseState, FormDraftEntry};
