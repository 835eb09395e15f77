//! The closed verification-rule grammar and its evaluator.
//!
//! Rules are pure predicates over a [`DatabaseState`]; a task succeeds when
//! the conjunction of its rules holds over the final state. The grammar is
//! deliberately small: existence, absence, counting, and column equality
//! under `=` / `≠` predicates.

use serde::{Deserialize, Serialize};

use crate::app::schema::AppSchema;
use crate::app::state::{DatabaseState, Row};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Eq,
    Ne,
}

/// One `column <cmp> literal` predicate, serialized as a
/// `[column, cmp, literal]` triple for compact rule documents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnPredicate {
    pub column: String,
    pub cmp: Comparator,
    pub value: String,
}

impl Serialize for ColumnPredicate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (&self.column, self.cmp, &self.value).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ColumnPredicate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let (column, cmp, value) = <(String, Comparator, String)>::deserialize(deserializer)?;
        Ok(Self { column, cmp, value })
    }
}

impl ColumnPredicate {
    fn matches(&self, row: &Row) -> bool {
        let cell = row.get(&self.column).map(String::as_str).unwrap_or("");
        match self.cmp {
            Comparator::Eq => cell == self.value,
            Comparator::Ne => cell != self.value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerificationRule {
    /// At least one row of `table` satisfies all predicates.
    RowExists {
        table: String,
        #[serde(rename = "where")]
        predicates: Vec<ColumnPredicate>,
    },
    /// No row of `table` satisfies all predicates.
    RowAbsent {
        table: String,
        #[serde(rename = "where")]
        predicates: Vec<ColumnPredicate>,
    },
    /// Exactly `expected` rows of `table` satisfy all predicates.
    RowCount {
        table: String,
        #[serde(rename = "where", default)]
        predicates: Vec<ColumnPredicate>,
        expected: usize,
    },
    /// At least one row matches the predicates, and every matching row has
    /// `column == value`.
    FieldEquals {
        table: String,
        #[serde(rename = "where")]
        predicates: Vec<ColumnPredicate>,
        column: String,
        value: String,
    },
}

impl VerificationRule {
    pub fn table(&self) -> &str {
        match self {
            VerificationRule::RowExists { table, .. }
            | VerificationRule::RowAbsent { table, .. }
            | VerificationRule::RowCount { table, .. }
            | VerificationRule::FieldEquals { table, .. } => table,
        }
    }

    pub fn predicates(&self) -> &[ColumnPredicate] {
        match self {
            VerificationRule::RowExists { predicates, .. }
            | VerificationRule::RowAbsent { predicates, .. }
            | VerificationRule::RowCount { predicates, .. }
            | VerificationRule::FieldEquals { predicates, .. } => predicates,
        }
    }
}

fn matching_rows<'a>(
    state: &'a DatabaseState,
    table: &str,
    predicates: &[ColumnPredicate],
) -> Vec<&'a Row> {
    state
        .tables
        .get(table)
        .map(|rows| {
            rows.iter()
                .filter(|row| predicates.iter().all(|p| p.matches(row)))
                .collect()
        })
        .unwrap_or_default()
}

/// Pure rule evaluation over a database state.
pub fn evaluate_rule(rule: &VerificationRule, state: &DatabaseState) -> bool {
    match rule {
        VerificationRule::RowExists { table, predicates } => {
            !matching_rows(state, table, predicates).is_empty()
        }
        VerificationRule::RowAbsent { table, predicates } => {
            matching_rows(state, table, predicates).is_empty()
        }
        VerificationRule::RowCount {
            table,
            predicates,
            expected,
        } => matching_rows(state, table, predicates).len() == *expected,
        VerificationRule::FieldEquals {
            table,
            predicates,
            column,
            value,
        } => {
            let rows = matching_rows(state, table, predicates);
            !rows.is_empty()
                && rows
                    .iter()
                    .all(|row| row.get(column).map(String::as_str).unwrap_or("") == value)
        }
    }
}

/// Whether a rule reads the given column of the given table, either in a
/// predicate or as a field-equality target. Used to keep probe fields out
/// of verification logic.
pub fn rule_references_column(rule: &VerificationRule, table: &str, column: &str) -> bool {
    if rule.table() != table {
        return false;
    }
    if rule.predicates().iter().any(|p| p.column == column) {
        return true;
    }
    matches!(rule, VerificationRule::FieldEquals { column: c, .. } if c == column)
}

/// Structural validity against a schema: the table and every referenced
/// column must exist.
pub fn validate_rule(rule: &VerificationRule, schema: &AppSchema) -> Result<(), String> {
    let Some(table) = schema.table(rule.table()) else {
        return Err(format!("rule references unknown table '{}'", rule.table()));
    };
    for pred in rule.predicates() {
        if !table.columns.contains(&pred.column) {
            return Err(format!(
                "rule references unknown column '{}' of '{}'",
                pred.column,
                table.name
            ));
        }
    }
    if let VerificationRule::FieldEquals { column, .. } = rule {
        if !table.columns.contains(column) {
            return Err(format!(
                "rule targets unknown column '{column}' of '{}'",
                table.name
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pred(column: &str, cmp: Comparator, value: &str) -> ColumnPredicate {
        ColumnPredicate {
            column: column.into(),
            cmp,
            value: value.into(),
        }
    }

    fn state_with(rows: Vec<Vec<(&str, &str)>>) -> DatabaseState {
        let mut state = DatabaseState::default();
        state.tables.insert(
            "appointments".into(),
            rows.into_iter()
                .map(|cols| {
                    cols.into_iter()
                        .map(|(k, v)| (k.to_string(), v.to_string()))
                        .collect()
                })
                .collect(),
        );
        state
    }

    #[test]
    fn exists_and_absent_are_duals() {
        let state = state_with(vec![vec![("doctor", "Lee"), ("time", "09:00")]]);
        let exists = VerificationRule::RowExists {
            table: "appointments".into(),
            predicates: vec![
                pred("doctor", Comparator::Eq, "Lee"),
                pred("time", Comparator::Eq, "09:00"),
            ],
        };
        let absent = VerificationRule::RowAbsent {
            table: "appointments".into(),
            predicates: vec![
                pred("doctor", Comparator::Eq, "Lee"),
                pred("time", Comparator::Eq, "09:00"),
            ],
        };
        assert!(evaluate_rule(&exists, &state));
        assert!(!evaluate_rule(&absent, &state));
    }

    #[test]
    fn ne_comparator_and_missing_table() {
        let state = state_with(vec![vec![("doctor", "Lee")]]);
        let ne = VerificationRule::RowExists {
            table: "appointments".into(),
            predicates: vec![pred("doctor", Comparator::Ne, "Chen")],
        };
        assert!(evaluate_rule(&ne, &state));
        let missing = VerificationRule::RowExists {
            table: "orders".into(),
            predicates: vec![],
        };
        assert!(!evaluate_rule(&missing, &state));
    }

    #[test]
    fn field_equals_requires_match_and_uniform_value() {
        let state = state_with(vec![
            vec![("doctor", "Lee"), ("time", "09:00")],
            vec![("doctor", "Lee"), ("time", "09:00")],
            vec![("doctor", "Kim"), ("time", "11:00")],
        ]);
        let ok = VerificationRule::FieldEquals {
            table: "appointments".into(),
            predicates: vec![pred("doctor", Comparator::Eq, "Lee")],
            column: "time".into(),
            value: "09:00".into(),
        };
        assert!(evaluate_rule(&ok, &state));
        let no_match = VerificationRule::FieldEquals {
            table: "appointments".into(),
            predicates: vec![pred("doctor", Comparator::Eq, "Nobody")],
            column: "time".into(),
            value: "09:00".into(),
        };
        assert!(!evaluate_rule(&no_match, &state));
        let mixed = VerificationRule::FieldEquals {
            table: "appointments".into(),
            predicates: vec![],
            column: "time".into(),
            value: "09:00".into(),
        };
        assert!(!evaluate_rule(&mixed, &state));
    }

    // row_count must agree with an independent full scan over randomized
    // states.
    #[test]
    fn row_count_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let doctors = ["Lee", "Kim", "Chen"];
        for _ in 0..200 {
            let n = rng.gen_range(0..12);
            let rows: Vec<Vec<(&str, &str)>> = (0..n)
                .map(|_| vec![("doctor", doctors[rng.gen_range(0..doctors.len())])])
                .collect();
            let expected_count = rows.iter().filter(|r| r[0].1 == "Lee").count();
            let state = state_with(rows);
            let rule = VerificationRule::RowCount {
                table: "appointments".into(),
                predicates: vec![pred("doctor", Comparator::Eq, "Lee")],
                expected: expected_count,
            };
            assert!(evaluate_rule(&rule, &state));
            let off_by_one = VerificationRule::RowCount {
                table: "appointments".into(),
                predicates: vec![pred("doctor", Comparator::Eq, "Lee")],
                expected: expected_count + 1,
            };
            assert!(!evaluate_rule(&off_by_one, &state));
        }
    }

    #[test]
    fn rule_reference_detection() {
        let rule = VerificationRule::FieldEquals {
            table: "appointments".into(),
            predicates: vec![pred("doctor", Comparator::Eq, "Lee")],
            column: "time".into(),
            value: "09:00".into(),
        };
        assert!(rule_references_column(&rule, "appointments", "doctor"));
        assert!(rule_references_column(&rule, "appointments", "time"));
        assert!(!rule_references_column(&rule, "appointments", "phone"));
        assert!(!rule_references_column(&rule, "orders", "doctor"));
    }

    #[test]
    fn rule_document_round_trip() {
        let doc = r#"{"kind":"row_exists","table":"appointments",
                        "where":[["doctor","eq","Lee"],["time","ne","10:00"]]}"#;
        let rule: VerificationRule = serde_json::from_str(doc).unwrap();
        assert_eq!(rule.predicates().len(), 2);
        let back = serde_json::to_string(&rule).unwrap();
        let again: VerificationRule = serde_json::from_str(&back).unwrap();
        assert_eq!(rule, again);
    }
}
