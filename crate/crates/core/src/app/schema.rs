//! App schema documents: parsing and load-time invariant checking.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::rules::{rule_references_column, validate_rule};
use crate::profile::Level;
use crate::suite::TaskTemplate;

/// Why the agent-facing role of a field matters to the auditor. The role is
/// schema metadata only: it is validated at load and copied into probe
/// manifests, but is never exposed in any rendered observation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeRole {
    #[default]
    None,
    /// Optional HIGH-bound entry placed immediately after a required LOW
    /// entry; scored by over-permissioning.
    BaitHigh,
    /// Plausible but task-irrelevant re-collection widget; scored by trap
    /// resistance.
    Trap,
    /// Optional personal entry between required entries; scored by form
    /// minimization.
    SandwichOptional,
}

/// One form entry on a screen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub id: String,
    pub label: String,
    pub required: bool,
    pub personal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_key: Option<String>,
    #[serde(default)]
    pub probe_role: ProbeRole,
    #[serde(default)]
    pub page: u32,
}

/// Screen elements in display order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Element {
    Field(FieldSpec),
    Button {
        id: String,
        label: String,
        #[serde(default)]
        page: u32,
    },
    Submit {
        id: String,
        label: String,
        target_table: String,
        #[serde(default)]
        page: u32,
    },
    /// Live listing of a table's rows; tapping a row removes it (used for
    /// cancellation flows). Only the named columns are displayed.
    Rows {
        id: String,
        label: String,
        table: String,
        columns: Vec<String>,
        #[serde(default)]
        page: u32,
    },
}

impl Element {
    pub fn id(&self) -> &str {
        match self {
            Element::Field(f) => &f.id,
            Element::Button { id, .. } => id,
            Element::Submit { id, .. } => id,
            Element::Rows { id, .. } => id,
        }
    }

    pub fn page(&self) -> u32 {
        match self {
            Element::Field(f) => f.page,
            Element::Button { page, .. } => *page,
            Element::Submit { page, .. } => *page,
            Element::Rows { page, .. } => *page,
        }
    }

    pub fn as_field(&self) -> Option<&FieldSpec> {
        match self {
            Element::Field(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub id: String,
    #[serde(default = "default_scroll_pages")]
    pub scroll_pages: u32,
    pub elements: Vec<Element>,
}

fn default_scroll_pages() -> u32 {
    1
}

impl ScreenSpec {
    pub fn field(&self, id: &str) -> Option<&FieldSpec> {
        self.elements.iter().find_map(|e| match e {
            Element::Field(f) if f.id == id => Some(f),
            _ => None,
        })
    }

    pub fn fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.elements.iter().filter_map(Element::as_field)
    }

    pub fn submit(&self) -> Option<(&str, &str)> {
        self.elements.iter().find_map(|e| match e {
            Element::Submit {
                id, target_table, ..
            } => Some((id.as_str(), target_table.as_str())),
            _ => None,
        })
    }

    fn is_form(&self) -> bool {
        self.fields().next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<String>,
}

/// Element-triggered navigation edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavEdge {
    pub screen: String,
    pub element: String,
    pub target: String,
}

pub type SeedTables = BTreeMap<String, Vec<BTreeMap<String, String>>>;

/// A complete mock-app definition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSchema {
    pub app_id: String,
    pub entry_screen: String,
    pub tables: Vec<TableDef>,
    pub screens: Vec<ScreenSpec>,
    #[serde(default)]
    pub navigation: Vec<NavEdge>,
    pub seeds: BTreeMap<String, SeedTables>,
    #[serde(default)]
    pub templates: Vec<TaskTemplate>,
}

impl AppSchema {
    pub fn screen(&self, id: &str) -> Option<&ScreenSpec> {
        self.screens.iter().find(|s| s.id == id)
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn nav_target(&self, screen: &str, element: &str) -> Option<&str> {
        self.navigation
            .iter()
            .find(|e| e.screen == screen && e.element == element)
            .map(|e| e.target.as_str())
    }

    pub fn template(&self, template_id: &str) -> Option<&TaskTemplate> {
        self.templates.iter().find(|t| t.template_id == template_id)
    }

    /// All fields with the given probe role, as (screen id, field) pairs.
    pub fn probe_fields(&self, role: ProbeRole) -> Vec<(&str, &FieldSpec)> {
        let mut out = Vec::new();
        for screen in &self.screens {
            for field in screen.fields() {
                if field.probe_role == role {
                    out.push((screen.id.as_str(), field));
                }
            }
        }
        out
    }

    /// Screen that hosts a given field id (field ids are app-unique).
    pub fn screen_of_field(&self, field_id: &str) -> Option<&str> {
        for screen in &self.screens {
            if screen.field(field_id).is_some() {
                return Some(screen.id.as_str());
            }
        }
        None
    }
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("schema parse error: {0}")]
    Parse(String),
    #[error("schema invariant violated at {path}: {detail}")]
    InvariantViolation { path: String, detail: String },
}

fn violation(path: impl Into<String>, detail: impl Into<String>) -> SchemaError {
    SchemaError::InvariantViolation {
        path: path.into(),
        detail: detail.into(),
    }
}

/// Parse and fully validate a schema document.
///
/// `profile_levels` supplies the sensitivity level of each profile key so
/// that field/probe bindings can be checked at load (probe invariants are
/// level-dependent).
pub fn load_schema(
    document: &str,
    profile_levels: &BTreeMap<String, Level>,
) -> Result<AppSchema, SchemaError> {
    let schema: AppSchema =
        serde_json::from_str(document).map_err(|e| SchemaError::Parse(e.to_string()))?;
    validate_schema(&schema, profile_levels)?;
    Ok(schema)
}

pub fn validate_schema(
    schema: &AppSchema,
    profile_levels: &BTreeMap<String, Level>,
) -> Result<(), SchemaError> {
    if schema.app_id.is_empty() {
        return Err(violation("app_id", "must not be empty"));
    }

    // Unique table names; columns unique per table.
    let mut table_names = BTreeSet::new();
    for table in &schema.tables {
        if !table_names.insert(table.name.as_str()) {
            return Err(violation(
                format!("tables.{}", table.name),
                "duplicate table name",
            ));
        }
        let mut cols = BTreeSet::new();
        for col in &table.columns {
            if !cols.insert(col.as_str()) {
                return Err(violation(
                    format!("tables.{}.{col}", table.name),
                    "duplicate column",
                ));
            }
        }
    }

    // Unique screen ids; element ids unique across the whole app so that
    // audit records and probe manifests can reference fields by id alone.
    let mut screen_ids = BTreeSet::new();
    let mut element_ids: BTreeSet<&str> = BTreeSet::new();
    for screen in &schema.screens {
        if !screen_ids.insert(screen.id.as_str()) {
            return Err(violation(
                format!("screens.{}", screen.id),
                "duplicate screen id",
            ));
        }
        if screen.scroll_pages < 1 {
            return Err(violation(
                format!("screens.{}.scroll_pages", screen.id),
                "must be >= 1",
            ));
        }
        let mut submits = 0usize;
        for element in &screen.elements {
            if !element_ids.insert(element.id()) {
                return Err(violation(
                    format!("screens.{}.elements.{}", screen.id, element.id()),
                    "duplicate element id",
                ));
            }
            if element.page() >= screen.scroll_pages {
                return Err(violation(
                    format!("screens.{}.elements.{}", screen.id, element.id()),
                    format!(
                        "page {} out of range (scroll_pages = {})",
                        element.page(),
                        screen.scroll_pages
                    ),
                ));
            }
            match element {
                Element::Submit { target_table, .. } => {
                    submits += 1;
                    if schema.table(target_table).is_none() {
                        return Err(violation(
                            format!("screens.{}.elements.{}", screen.id, element.id()),
                            format!("submit targets unknown table '{target_table}'"),
                        ));
                    }
                }
                Element::Rows { table, columns, .. } => {
                    let Some(def) = schema.table(table) else {
                        return Err(violation(
                            format!("screens.{}.elements.{}", screen.id, element.id()),
                            format!("row list references unknown table '{table}'"),
                        ));
                    };
                    for col in columns {
                        if !def.columns.contains(col) {
                            return Err(violation(
                                format!("screens.{}.elements.{}", screen.id, element.id()),
                                format!("row list shows unknown column '{col}'"),
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        if screen.is_form() {
            if submits != 1 {
                return Err(violation(
                    format!("screens.{}", screen.id),
                    format!("form screen must have exactly one submit element, found {submits}"),
                ));
            }
            // Every field must map onto a column of the submit target.
            let (_, target) = screen.submit().expect("submit checked above");
            let table = schema.table(target).expect("target checked above");
            for field in screen.fields() {
                if !table.columns.contains(&field.id) {
                    return Err(violation(
                        format!("screens.{}.elements.{}", screen.id, field.id),
                        format!("field has no column in submit target '{target}'"),
                    ));
                }
            }
        } else if submits > 0 {
            return Err(violation(
                format!("screens.{}", screen.id),
                "submit element on a screen without fields",
            ));
        }
    }

    if schema.screen(&schema.entry_screen).is_none() {
        return Err(violation(
            "entry_screen",
            format!("unknown screen '{}'", schema.entry_screen),
        ));
    }

    // Navigation edges: source screen, button element, and target must all
    // exist; buttons are the only navigation triggers.
    let mut edge_sources: BTreeSet<(&str, &str)> = BTreeSet::new();
    for edge in &schema.navigation {
        let path = format!("navigation.{}.{}", edge.screen, edge.element);
        let Some(screen) = schema.screen(&edge.screen) else {
            return Err(violation(path, "unknown source screen"));
        };
        let element = screen.elements.iter().find(|e| e.id() == edge.element);
        match element {
            Some(Element::Button { .. }) => {}
            Some(_) => return Err(violation(path, "navigation source must be a button")),
            None => return Err(violation(path, "unknown source element")),
        }
        if schema.screen(&edge.target).is_none() {
            return Err(violation(path, format!("unknown target '{}'", edge.target)));
        }
        if !edge_sources.insert((edge.screen.as_str(), edge.element.as_str())) {
            return Err(violation(path, "duplicate navigation edge for element"));
        }
    }
    for screen in &schema.screens {
        for element in &screen.elements {
            if matches!(element, Element::Button { .. })
                && schema.nav_target(&screen.id, element.id()).is_none()
            {
                return Err(violation(
                    format!("screens.{}.elements.{}", screen.id, element.id()),
                    "button has no navigation edge",
                ));
            }
        }
    }

    // Seed fixtures must conform to the table definitions.
    for (seed_name, tables) in &schema.seeds {
        for (table_name, rows) in tables {
            let Some(def) = schema.table(table_name) else {
                return Err(violation(
                    format!("seeds.{seed_name}.{table_name}"),
                    "unknown table",
                ));
            };
            for (i, row) in rows.iter().enumerate() {
                for col in row.keys() {
                    if !def.columns.contains(col) {
                        return Err(violation(
                            format!("seeds.{seed_name}.{table_name}[{i}]"),
                            format!("unknown column '{col}'"),
                        ));
                    }
                }
            }
        }
    }

    validate_probe_placement(schema, profile_levels)?;
    validate_templates(schema, profile_levels)?;
    Ok(())
}

/// Field-level probe invariants.
fn validate_probe_placement(
    schema: &AppSchema,
    profile_levels: &BTreeMap<String, Level>,
) -> Result<(), SchemaError> {
    // A field counts as LOW for bait-adjacency purposes when it is not
    // bound to a HIGH profile key.
    let is_low_field = |field: &FieldSpec| {
        field
            .profile_key
            .as_ref()
            .map(|k| profile_levels.get(k) != Some(&Level::High))
            .unwrap_or(true)
    };

    // Required bindings anywhere in the app, for the trap re-solicitation
    // check.
    let mut required_keys: BTreeSet<&str> = BTreeSet::new();
    for screen in &schema.screens {
        for field in screen.fields() {
            if field.required {
                if let Some(key) = &field.profile_key {
                    required_keys.insert(key);
                }
            }
        }
    }

    for screen in &schema.screens {
        let fields: Vec<&FieldSpec> = screen.fields().collect();
        for (idx, field) in fields.iter().enumerate() {
            let path = format!("screens.{}.elements.{}", screen.id, field.id);
            match field.probe_role {
                ProbeRole::None => {}
                ProbeRole::BaitHigh => {
                    if field.required {
                        return Err(violation(path, "bait field must be optional"));
                    }
                    let Some(key) = &field.profile_key else {
                        return Err(violation(path, "bait field must bind a profile key"));
                    };
                    if profile_levels.get(key) != Some(&Level::High) {
                        return Err(violation(
                            path,
                            format!("bait field must bind a HIGH key, '{key}' is not"),
                        ));
                    }
                    let preceding = idx.checked_sub(1).map(|i| fields[i]);
                    match preceding {
                        Some(prev) if prev.required && is_low_field(prev) => {}
                        _ => {
                            return Err(violation(
                                path,
                                "bait field must immediately follow a required LOW field",
                            ))
                        }
                    }
                }
                ProbeRole::Trap => {
                    if field.required {
                        return Err(violation(path, "trap field must be optional"));
                    }
                    let Some(key) = &field.profile_key else {
                        return Err(violation(
                            path,
                            "trap field must re-solicit a bound profile key",
                        ));
                    };
                    if !required_keys.contains(key.as_str()) {
                        return Err(violation(
                            path,
                            format!(
                                "trap field must re-solicit a value the app already collects; \
                                 '{key}' is not bound to any required field"
                            ),
                        ));
                    }
                }
                ProbeRole::SandwichOptional => {
                    if field.required {
                        return Err(violation(path, "sandwich field must be optional"));
                    }
                    if !field.personal {
                        return Err(violation(path, "sandwich field must be personal"));
                    }
                    let Some(key) = &field.profile_key else {
                        return Err(violation(path, "sandwich field must bind a profile key"));
                    };
                    if profile_levels.get(key) != Some(&Level::Low) {
                        return Err(violation(
                            path,
                            format!("sandwich field must bind a LOW key, '{key}' is not"),
                        ));
                    }
                    let before_required = idx.checked_sub(1).map(|i| fields[i].required);
                    let after_required = fields.get(idx + 1).map(|f| f.required);
                    if before_required != Some(true) || after_required != Some(true) {
                        return Err(violation(
                            path,
                            "sandwich field must sit between two required fields",
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Static checks on the task templates shipped with the schema.
fn validate_templates(
    schema: &AppSchema,
    profile_levels: &BTreeMap<String, Level>,
) -> Result<(), SchemaError> {
    let mut ids = BTreeSet::new();
    for template in &schema.templates {
        let path = format!("templates.{}", template.template_id);
        if !ids.insert(template.template_id.as_str()) {
            return Err(violation(path, "duplicate template id"));
        }
        if template.variants.is_empty() {
            return Err(violation(path, "template needs at least one variant"));
        }
        if schema.screen(&template.screen).is_none() {
            return Err(violation(
                path,
                format!("unknown target screen '{}'", template.screen),
            ));
        }
        if !schema.seeds.contains_key(&template.seed_name) {
            return Err(violation(
                path,
                format!("unknown seed '{}'", template.seed_name),
            ));
        }
        for rule in &template.rules {
            validate_rule(rule, schema)
                .map_err(|detail| violation(format!("{path}.rules"), detail))?;
            // Rules must never touch trap fields: traps are task-irrelevant
            // by construction.
            for (_, trap) in schema.probe_fields(ProbeRole::Trap) {
                let Some(screen_id) = schema.screen_of_field(&trap.id) else {
                    continue;
                };
                let screen = schema.screen(screen_id).expect("screen exists");
                if let Some((_, table)) = screen.submit() {
                    if rule_references_column(rule, table, &trap.id) {
                        return Err(violation(
                            format!("{path}.rules"),
                            format!("rule references trap field '{}'", trap.id),
                        ));
                    }
                }
            }
        }
        for key in template.bait_keys.keys() {
            if profile_levels.get(key) != Some(&Level::High) {
                return Err(violation(
                    format!("{path}.bait_keys.{key}"),
                    "graded keys must be HIGH profile keys",
                ));
            }
        }
        for key in &template.forbidden_keys {
            if profile_levels.get(key) != Some(&Level::High) {
                return Err(violation(
                    format!("{path}.forbidden_keys.{key}"),
                    "forbidden keys must be HIGH profile keys",
                ));
            }
        }
    }
    Ok(())
}
