use serde::{Deserialize, Serialize};

/// Maximum number of characters kept from a captured runtime value.
pub const VALUE_CHAR_CAP: usize = 2000;

/// Textual rendering of a runtime value as produced by the emitting component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SerializedValue {
    pub text: String,
    pub total_length: u64,
    pub truncated: bool,
}

impl SerializedValue {
    /// Character count of the stored text (not bytes).
    pub fn stored_chars(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks the truncation invariants; returns a reason on violation.
    pub fn check(&self) -> Result<(), String> {
        let stored = self.stored_chars();
        if stored > VALUE_CHAR_CAP {
            return Err(format!(
                "value text has {stored} chars, cap is {VALUE_CHAR_CAP}"
            ));
        }
        if (stored as u64) > self.total_length {
            return Err(format!(
                "total_length {} is smaller than stored text ({stored} chars)",
                self.total_length
            ));
        }
        if self.truncated != (self.total_length > stored as u64) {
            return Err(format!(
                "truncated flag {} inconsistent with total_length {} and {stored} stored chars",
                self.truncated, self.total_length
            ));
        }
        Ok(())
    }
}

/// Captures `raw`, keeping at most [`VALUE_CHAR_CAP`] characters.
pub fn truncate_value(raw: &str) -> SerializedValue {
    match raw.char_indices().nth(VALUE_CHAR_CAP) {
        None => SerializedValue {
            text: raw.to_owned(),
            total_length: raw.chars().count() as u64,
            truncated: false,
        },
        Some((cut, _)) => SerializedValue {
            text: raw[..cut].to_owned(),
            total_length: raw.chars().count() as u64,
            truncated: true,
        },
    }
}

impl From<&str> for SerializedValue {
    fn from(raw: &str) -> Self {
        truncate_value(raw)
    }
}
