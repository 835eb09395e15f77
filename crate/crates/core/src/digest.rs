//! Canonical hashing helpers shared by the whole harness.
//!
//! Every digest in the artifact set (database states, observations,
//! trajectory files) is a lowercase hex SHA-256 over a canonical byte
//! string, so digests are comparable across runs and platforms.

use sha2::{Digest, Sha256};

/// Hex-encoded SHA-256 of the given bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in out {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Escape a value for use inside a newline/tab-delimited canonical record.
///
/// The canonical text format uses `\t` between fields and `\n` between
/// records; values must not be able to forge either.
pub fn escape_field(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_matches_known_vector() {
        // Empty-input SHA-256 is a published constant.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn escaping_is_injective_on_delimiters() {
        assert_eq!(escape_field("a\tb"), "a\\tb");
        assert_eq!(escape_field("a\\tb"), "a\\\\tb");
        assert_ne!(escape_field("a\tb"), escape_field("a\\tb"));
        assert_eq!(escape_field("line1\nline2"), "line1\\nline2");
    }
}
