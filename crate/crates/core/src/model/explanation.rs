use serde::{Deserialize, Serialize};

use super::time::Timestamp;

/// Generated text for one call plus what it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub call_id: String,
    pub config_hash: String,
    pub text: String,
    /// The exact prompt sent to the provider; absent in template mode.
    #[serde(default)]
    pub prompt: Option<String>,
    /// Direct children whose explanations were aggregated, in tree order.
    #[serde(default)]
    pub child_call_ids: Vec<String>,
    pub generated_at: Timestamp,
    /// Set when the value was served from the cache. Never persisted.
    #[serde(default)]
    pub from_cache: bool,
}
