//! The interactive surface: cursor movement, screen rendering, and GUI
//! action semantics.
//!
//! Rendering is a pure function of (schema, state, cursor); all mutation
//! happens in [`apply_gui_action`]. Personal fields render a filled/empty
//! marker instead of their draft value so that sensitive strings can never
//! surface in an observation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::app::schema::{AppSchema, Element, FieldSpec};
use crate::app::state::{normalize_row, DatabaseState, FormDraftEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDirection {
    Up,
    Down,
    Left,
    Right,
}

/// Where the agent currently is: home (no app open) or a (screen, page)
/// within the app, plus the back stack and a transient error banner.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cursor {
    pub screen: Option<String>,
    pub page: u32,
    history: Vec<(String, u32)>,
    banner: Option<String>,
}

impl Cursor {
    pub fn home() -> Self {
        Self::default()
    }

    pub fn banner(&self) -> Option<&str> {
        self.banner.as_deref()
    }
}

/// GUI-only action subset understood by the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GuiAction<'a> {
    Tap { element: &'a str },
    LongPress { element: &'a str },
    Type { element: &'a str, text: &'a str },
    Scroll(ScrollDirection),
    Open { app: &'a str },
    NavigateHome,
    NavigateBack,
    Wait,
}

/// What an applied action did, for trajectory outcome records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transition {
    Opened(String),
    Navigated(String),
    Scrolled(u32),
    Focused(String),
    Typed(String),
    Submitted { table: String },
    RowRemoved { table: String },
    WentBack(Option<String>),
    WentHome,
    Waited,
    NoEffect,
}

impl Transition {
    pub fn summary(&self) -> String {
        match self {
            Transition::Opened(screen) => format!("opened app at screen '{screen}'"),
            Transition::Navigated(screen) => format!("navigated to screen '{screen}'"),
            Transition::Scrolled(page) => format!("scrolled to page {page}"),
            Transition::Focused(id) => format!("focused element '{id}'"),
            Transition::Typed(field) => format!("draft recorded for '{field}'"),
            Transition::Submitted { table } => format!("form submitted, row added to '{table}'"),
            Transition::RowRemoved { table } => format!("row removed from '{table}'"),
            Transition::WentBack(Some(screen)) => format!("back to screen '{screen}'"),
            Transition::WentBack(None) => "back to home".to_string(),
            Transition::WentHome => "home".to_string(),
            Transition::Waited => "waited".to_string(),
            Transition::NoEffect => "no effect".to_string(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("no element '{0}' on the current screen")]
    UnknownElement(String),
    #[error("required field '{0}' is empty")]
    RequiredMissing(String),
    #[error("unknown app '{0}'")]
    UnknownApp(String),
}

/// Apply one GUI action. Typing appends exactly one draft entry; a submit
/// commits exactly one row or nothing. `RequiredMissing` leaves the state
/// untouched apart from the error banner shown by the next render.
pub fn apply_gui_action(
    schema: &AppSchema,
    state: &mut DatabaseState,
    cursor: &mut Cursor,
    action: &GuiAction<'_>,
    step: u32,
) -> Result<Transition, EngineError> {
    cursor.banner = None;
    match action {
        GuiAction::Wait => Ok(Transition::Waited),
        GuiAction::Open { app } => {
            if *app != schema.app_id {
                return Err(EngineError::UnknownApp(app.to_string()));
            }
            cursor.screen = Some(schema.entry_screen.clone());
            cursor.page = 0;
            cursor.history.clear();
            Ok(Transition::Opened(schema.entry_screen.clone()))
        }
        GuiAction::NavigateHome => {
            cursor.screen = None;
            cursor.page = 0;
            cursor.history.clear();
            Ok(Transition::WentHome)
        }
        GuiAction::NavigateBack => {
            match cursor.history.pop() {
                Some((screen, page)) => {
                    cursor.screen = Some(screen.clone());
                    cursor.page = page;
                    Ok(Transition::WentBack(Some(screen)))
                }
                None => {
                    cursor.screen = None;
                    cursor.page = 0;
                    Ok(Transition::WentBack(None))
                }
            }
        }
        GuiAction::Scroll(direction) => {
            let Some(screen_id) = cursor.screen.clone() else {
                return Ok(Transition::NoEffect);
            };
            let screen = schema.screen(&screen_id).expect("cursor screen exists");
            match direction {
                ScrollDirection::Down => {
                    cursor.page = (cursor.page + 1).min(screen.scroll_pages - 1);
                }
                ScrollDirection::Up => {
                    cursor.page = cursor.page.saturating_sub(1);
                }
                ScrollDirection::Left | ScrollDirection::Right => return Ok(Transition::NoEffect),
            }
            Ok(Transition::Scrolled(cursor.page))
        }
        GuiAction::Type { element, text } => {
            let field = current_field(schema, cursor, element)?.clone();
            let screen_id = cursor.screen.clone().expect("field lookup implies screen");
            state.form_drafts.push(FormDraftEntry {
                step,
                screen_id,
                field_id: field.id.clone(),
                value_entered: text.to_string(),
                probe_role: field.probe_role,
                required: field.required,
                personal: field.personal,
            });
            Ok(Transition::Typed(field.id))
        }
        GuiAction::LongPress { element } => {
            current_element(schema, cursor, element)?;
            Ok(Transition::NoEffect)
        }
        GuiAction::Tap { element } => tap(schema, state, cursor, element),
    }
}

fn tap(
    schema: &AppSchema,
    state: &mut DatabaseState,
    cursor: &mut Cursor,
    element: &str,
) -> Result<Transition, EngineError> {
    // Row sub-elements are addressed as "<list id>:<index>" over the
    // canonical row order.
    if let Some((list_id, index)) = element.split_once(':') {
        let screen = current_screen(schema, cursor)
            .ok_or_else(|| EngineError::UnknownElement(element.to_string()))?;
        if let Some(Element::Rows { table, .. }) =
            screen.elements.iter().find(|e| e.id() == list_id)
        {
            let idx: usize = index
                .parse()
                .map_err(|_| EngineError::UnknownElement(element.to_string()))?;
            let sorted = state.sorted_rows(table);
            let Some(target_row) = sorted.get(idx).map(|r| (*r).clone()) else {
                return Err(EngineError::UnknownElement(element.to_string()));
            };
            let rows = state.tables.get_mut(table).expect("table exists");
            let pos = rows
                .iter()
                .position(|r| *r == target_row)
                .expect("row came from this table");
            rows.remove(pos);
            return Ok(Transition::RowRemoved {
                table: table.clone(),
            });
        }
        return Err(EngineError::UnknownElement(element.to_string()));
    }

    let found = current_element(schema, cursor, element)?.clone();
    let screen_id = cursor.screen.clone().expect("element lookup implies screen");
    match found {
        Element::Button { id, .. } => {
            let target = schema
                .nav_target(&screen_id, &id)
                .expect("validated buttons always navigate")
                .to_string();
            cursor.history.push((screen_id, cursor.page));
            cursor.screen = Some(target.clone());
            cursor.page = 0;
            Ok(Transition::Navigated(target))
        }
        Element::Submit {
            target_table, ..
        } => {
            let screen = schema.screen(&screen_id).expect("cursor screen exists");
            for field in screen.fields() {
                if field.required {
                    let filled = state
                        .current_draft(&screen_id, &field.id)
                        .map(|v| !v.is_empty())
                        .unwrap_or(false);
                    if !filled {
                        let message = format!("required field '{}' is empty", field.label);
                        cursor.banner = Some(message);
                        return Err(EngineError::RequiredMissing(field.label.clone()));
                    }
                }
            }
            let table = schema.table(&target_table).expect("validated target");
            let mut partial = std::collections::BTreeMap::new();
            for field in screen.fields() {
                if let Some(value) = state.current_draft(&screen_id, &field.id) {
                    partial.insert(field.id.clone(), value.to_string());
                }
            }
            let row = normalize_row(&table.columns, partial);
            state
                .tables
                .get_mut(&target_table)
                .expect("table exists")
                .push(row);
            Ok(Transition::Submitted {
                table: target_table,
            })
        }
        Element::Field(field) => Ok(Transition::Focused(field.id)),
        Element::Rows { .. } => Ok(Transition::NoEffect),
    }
}

fn current_screen<'a>(schema: &'a AppSchema, cursor: &Cursor) -> Option<&'a crate::app::schema::ScreenSpec> {
    cursor.screen.as_deref().and_then(|id| schema.screen(id))
}

fn current_element<'a>(
    schema: &'a AppSchema,
    cursor: &Cursor,
    id: &str,
) -> Result<&'a Element, EngineError> {
    current_screen(schema, cursor)
        .and_then(|screen| screen.elements.iter().find(|e| e.id() == id))
        .ok_or_else(|| EngineError::UnknownElement(id.to_string()))
}

fn current_field<'a>(
    schema: &'a AppSchema,
    cursor: &Cursor,
    id: &str,
) -> Result<&'a FieldSpec, EngineError> {
    match current_element(schema, cursor, id)? {
        Element::Field(field) => Ok(field),
        _ => Err(EngineError::UnknownElement(id.to_string())),
    }
}

/// Deterministic textual rendering of the visible screen page.
///
/// Element ids, labels, and required markers are always shown; draft values
/// are shown literally for non-personal fields and as a `[filled]` marker
/// for personal ones. Probe roles never appear.
pub fn render_screen(schema: &AppSchema, state: &DatabaseState, cursor: &Cursor) -> String {
    let mut out = String::new();
    let Some(screen_id) = cursor.screen.as_deref() else {
        out.push_str("home screen\n");
        out.push_str(&format!("- app {} (open to use)\n", schema.app_id));
        return out;
    };
    let screen = schema.screen(screen_id).expect("cursor screen exists");
    out.push_str(&format!(
        "app {} | screen {} | page {}/{}\n",
        schema.app_id,
        screen.id,
        cursor.page + 1,
        screen.scroll_pages
    ));
    if let Some(banner) = cursor.banner() {
        out.push_str(&format!("error: {banner}\n"));
    }
    for element in &screen.elements {
        if element.page() != cursor.page {
            continue;
        }
        match element {
            Element::Field(field) => {
                let marker = if field.required { " (required)" } else { "" };
                let draft = state.current_draft(&screen.id, &field.id);
                let value = match (field.personal, draft) {
                    (_, None) => "(empty)".to_string(),
                    (true, Some("")) => "(empty)".to_string(),
                    (true, Some(_)) => "[filled]".to_string(),
                    (false, Some(v)) => format!("\"{v}\""),
                };
                out.push_str(&format!(
                    "- field {} \"{}\"{} = {}\n",
                    field.id, field.label, marker, value
                ));
            }
            Element::Button { id, label, .. } => {
                out.push_str(&format!("- button {id} \"{label}\"\n"));
            }
            Element::Submit { id, label, .. } => {
                out.push_str(&format!("- submit {id} \"{label}\"\n"));
            }
            Element::Rows {
                id,
                label,
                table,
                columns,
                ..
            } => {
                out.push_str(&format!("- list {id} \"{label}\"\n"));
                for (i, row) in state.sorted_rows(table).iter().enumerate() {
                    let cells: Vec<String> = columns
                        .iter()
                        .map(|c| format!("{c}={}", row.get(c).map(String::as_str).unwrap_or("")))
                        .collect();
                    out.push_str(&format!("  - row {id}:{i} {{{}}}\n", cells.join(", ")));
                }
            }
        }
    }
    out
}
