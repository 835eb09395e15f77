//! The simulated user's profile: data items, sensitivity levels, and
//! session-scoped permission grants.
//!
//! Items are pair-scoped (they survive `end_session`, so a preference saved
//! in one session is visible in the next); grants are session-scoped (every
//! session starts with an empty grant set). Agents may create and overwrite
//! items but may never change an existing item's level: only the user can,
//! through the profile editing surface.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sensitivity level of a profile item.
///
/// `Low` items are usable by default; `High` items require an explicit,
/// granted `request_permission` before their value can be read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    High,
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Level::Low => write!(f, "low"),
            Level::High => write!(f, "high"),
        }
    }
}

/// Who wrote the current value of an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Seeded,
    AgentSaved,
}

/// One user data item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileItem {
    pub key: String,
    pub value: String,
    pub level: Level,
    pub source: Source,
    /// Episode step at which an agent saved this item, absent for seeded
    /// items and user edits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_step: Option<u32>,
}

/// A granted permission for one HIGH key, valid for the current session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermissionGrant {
    pub key: String,
    pub granted_at_step: u32,
    /// Agent-supplied justification, kept for the audit trail.
    pub reason: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProfileError {
    #[error("item key must not be empty")]
    EmptyKey,
    #[error("agents may not change the level of existing item '{key}' ({existing} -> {requested})")]
    LevelConflict {
        key: String,
        existing: Level,
        requested: Level,
    },
    #[error("no profile item named '{0}'")]
    NotFound(String),
}

/// The full profile: items plus the current session's grants.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    items: BTreeMap<String, ProfileItem>,
    #[serde(default)]
    grants: BTreeMap<String, PermissionGrant>,
}

impl UserProfile {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a profile from seed items (used for fixture files).
    pub fn from_items(items: impl IntoIterator<Item = ProfileItem>) -> Self {
        let mut profile = Self::new();
        for item in items {
            profile.items.insert(item.key.clone(), item);
        }
        profile
    }

    /// Insert or replace an item.
    ///
    /// When `source` is `AgentSaved` and the key already exists, the level
    /// must match the existing item's level: agents may never upgrade or
    /// downgrade an item. Seeded/user writes are unrestricted.
    pub fn upsert_item(
        &mut self,
        key: &str,
        value: &str,
        level: Level,
        source: Source,
        created_step: Option<u32>,
    ) -> Result<(), ProfileError> {
        if key.is_empty() {
            return Err(ProfileError::EmptyKey);
        }
        if source == Source::AgentSaved {
            if let Some(existing) = self.items.get(key) {
                if existing.level != level {
                    return Err(ProfileError::LevelConflict {
                        key: key.to_string(),
                        existing: existing.level,
                        requested: level,
                    });
                }
            }
        }
        self.items.insert(
            key.to_string(),
            ProfileItem {
                key: key.to_string(),
                value: value.to_string(),
                level,
                source,
                created_step,
            },
        );
        Ok(())
    }

    /// User-side edit of an item's value (key must exist).
    pub fn user_edit_value(&mut self, key: &str, value: &str) -> Result<(), ProfileError> {
        match self.items.get_mut(key) {
            Some(item) => {
                item.value = value.to_string();
                Ok(())
            }
            None => Err(ProfileError::NotFound(key.to_string())),
        }
    }

    /// User-side edit of an item's level. Unlike agents, the user may move
    /// an item between LOW and HIGH; a now-LOW key keeps no grant.
    pub fn user_edit_level(&mut self, key: &str, level: Level) -> Result<(), ProfileError> {
        match self.items.get_mut(key) {
            Some(item) => {
                item.level = level;
                if level == Level::Low {
                    self.grants.remove(key);
                }
                Ok(())
            }
            None => Err(ProfileError::NotFound(key.to_string())),
        }
    }

    pub fn get_item(&self, key: &str) -> Option<&ProfileItem> {
        self.items.get(key)
    }

    /// Remove an item and any grant that referenced it.
    pub fn delete_item(&mut self, key: &str) -> Result<(), ProfileError> {
        if self.items.remove(key).is_none() {
            return Err(ProfileError::NotFound(key.to_string()));
        }
        self.grants.remove(key);
        Ok(())
    }

    /// All items in key order. Agent-saved memory is always listed; nothing
    /// in the profile is hidden from the user.
    pub fn list_items(&self) -> Vec<&ProfileItem> {
        self.items.values().collect()
    }

    /// Record a grant for a HIGH key. At most one grant per key per session;
    /// a repeated grant keeps the first record.
    pub fn record_grant(&mut self, key: &str, granted_at_step: u32, reason: &str) {
        self.grants.entry(key.to_string()).or_insert(PermissionGrant {
            key: key.to_string(),
            granted_at_step,
            reason: reason.to_string(),
        });
    }

    pub fn grant_for(&self, key: &str) -> Option<&PermissionGrant> {
        self.grants.get(key)
    }

    pub fn grants(&self) -> impl Iterator<Item = &PermissionGrant> {
        self.grants.values()
    }

    pub fn grant_count(&self) -> usize {
        self.grants.len()
    }

    /// Session boundary: grants are cleared, items (including agent-saved
    /// preferences) survive. Idempotent.
    pub fn end_session(&mut self) {
        self.grants.clear();
    }

    /// Map of key -> level for every item, used by scoring and policies.
    pub fn levels(&self) -> BTreeMap<String, Level> {
        self.items
            .iter()
            .map(|(k, item)| (k.clone(), item.level))
            .collect()
    }
}

/// On-disk profile seed document: a flat list of items.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSeed {
    pub items: Vec<SeedItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedItem {
    pub key: String,
    pub value: String,
    pub level: Level,
}

impl ProfileSeed {
    pub fn into_profile(self) -> UserProfile {
        UserProfile::from_items(self.items.into_iter().map(|seed| ProfileItem {
            key: seed.key,
            value: seed.value,
            level: seed.level,
            source: Source::Seeded,
            created_step: None,
        }))
    }

    pub fn from_profile(profile: &UserProfile) -> Self {
        Self {
            items: profile
                .list_items()
                .into_iter()
                .map(|item| SeedItem {
                    key: item.key.clone(),
                    value: item.value.clone(),
                    level: item.level,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded() -> UserProfile {
        UserProfile::from_items([
            ProfileItem {
                key: "name".into(),
                value: "John Doe".into(),
                level: Level::Low,
                source: Source::Seeded,
                created_step: None,
            },
            ProfileItem {
                key: "phone".into(),
                value: "555-0100".into(),
                level: Level::High,
                source: Source::Seeded,
                created_step: None,
            },
            ProfileItem {
                key: "dob".into(),
                value: "1990-01-01".into(),
                level: Level::Low,
                source: Source::Seeded,
                created_step: None,
            },
        ])
    }

    #[test]
    fn upsert_new_item_is_listed_and_deletable() {
        let mut profile = seeded();
        profile
            .upsert_item(
                "preferred_cuisine",
                "vegetarian",
                Level::Low,
                Source::AgentSaved,
                Some(4),
            )
            .unwrap();
        let keys: Vec<_> = profile.list_items().iter().map(|i| i.key.clone()).collect();
        assert!(keys.contains(&"preferred_cuisine".to_string()));
        profile.user_edit_value("preferred_cuisine", "thai").unwrap();
        assert_eq!(profile.get_item("preferred_cuisine").unwrap().value, "thai");
        profile.delete_item("preferred_cuisine").unwrap();
        assert!(profile.get_item("preferred_cuisine").is_none());
    }

    #[test]
    fn upsert_same_key_replaces_value_once() {
        let mut profile = seeded();
        let count_before = profile.list_items().len();
        profile
            .upsert_item("name", "Jane Doe", Level::Low, Source::AgentSaved, Some(2))
            .unwrap();
        assert_eq!(profile.list_items().len(), count_before);
        assert_eq!(profile.get_item("name").unwrap().value, "Jane Doe");
    }

    #[test]
    fn empty_key_rejected() {
        let mut profile = seeded();
        assert_eq!(
            profile.upsert_item("", "x", Level::Low, Source::AgentSaved, None),
            Err(ProfileError::EmptyKey)
        );
    }

    // Enumerates the full (existing level, requested level) matrix for agent
    // writes: any level change is a conflict, same level is a replace.
    #[test]
    fn agent_level_change_matrix() {
        for existing in [Level::Low, Level::High] {
            for requested in [Level::Low, Level::High] {
                let mut profile = UserProfile::new();
                profile
                    .upsert_item("k", "v0", existing, Source::Seeded, None)
                    .unwrap();
                let result = profile.upsert_item("k", "v1", requested, Source::AgentSaved, None);
                if existing == requested {
                    assert!(result.is_ok(), "{existing:?}->{requested:?} should replace");
                    assert_eq!(profile.get_item("k").unwrap().value, "v1");
                } else {
                    assert_eq!(
                        result,
                        Err(ProfileError::LevelConflict {
                            key: "k".into(),
                            existing,
                            requested,
                        })
                    );
                    assert_eq!(profile.get_item("k").unwrap().value, "v0");
                }
            }
        }
    }

    #[test]
    fn user_may_change_level() {
        let mut profile = seeded();
        profile.user_edit_level("phone", Level::Low).unwrap();
        assert_eq!(profile.get_item("phone").unwrap().level, Level::Low);
        assert_eq!(
            profile.user_edit_level("ghost", Level::Low),
            Err(ProfileError::NotFound("ghost".into()))
        );
    }

    #[test]
    fn delete_removes_grant_too() {
        let mut profile = seeded();
        profile.record_grant("phone", 3, "needed for booking");
        assert!(profile.grant_for("phone").is_some());
        profile.delete_item("phone").unwrap();
        assert!(profile.grant_for("phone").is_none());
        assert_eq!(
            profile.delete_item("ghost"),
            Err(ProfileError::NotFound("ghost".into()))
        );
    }

    #[test]
    fn get_after_delete_is_absent() {
        let mut profile = seeded();
        profile.delete_item("dob").unwrap();
        assert!(profile.get_item("dob").is_none());
    }

    #[test]
    fn repeated_grant_keeps_first_record() {
        let mut profile = seeded();
        profile.record_grant("phone", 3, "first");
        profile.record_grant("phone", 9, "second");
        assert_eq!(profile.grant_count(), 1);
        let grant = profile.grant_for("phone").unwrap();
        assert_eq!(grant.granted_at_step, 3);
        assert_eq!(grant.reason, "first");
    }

    #[test]
    fn end_session_clears_grants_keeps_items_idempotently() {
        let mut profile = seeded();
        profile.record_grant("phone", 1, "r");
        profile
            .upsert_item("pref", "x", Level::Low, Source::AgentSaved, Some(2))
            .unwrap();
        let items_before: Vec<ProfileItem> =
            profile.list_items().into_iter().cloned().collect();
        profile.end_session();
        assert_eq!(profile.grant_count(), 0);
        let items_after: Vec<ProfileItem> = profile.list_items().into_iter().cloned().collect();
        assert_eq!(items_before, items_after);
        profile.end_session();
        let items_twice: Vec<ProfileItem> = profile.list_items().into_iter().cloned().collect();
        assert_eq!(items_after, items_twice);
    }

    #[test]
    fn list_is_deterministic_and_key_ordered() {
        let profile = seeded();
        let first: Vec<String> = profile.list_items().iter().map(|i| i.key.clone()).collect();
        let second: Vec<String> = profile.list_items().iter().map(|i| i.key.clone()).collect();
        assert_eq!(first, second);
        let mut sorted = first.clone();
        sorted.sort();
        assert_eq!(first, sorted);
    }

    #[test]
    fn seed_document_round_trips() {
        let doc = r#"{"items":[{"key":"name","value":"John Doe","level":"low"},
                                {"key":"phone","value":"555-0100","level":"high"}]}"#;
        let seed: ProfileSeed = serde_json::from_str(doc).unwrap();
        let profile = seed.into_profile();
        assert_eq!(profile.get_item("name").unwrap().value, "John Doe");
        assert_eq!(profile.get_item("phone").unwrap().level, Level::High);
        assert_eq!(profile.get_item("name").unwrap().source, Source::Seeded);
    }
}
