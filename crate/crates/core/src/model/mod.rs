//! Canonical data model: call records, captured values, generation settings
//! and explanations.

mod config;
mod explanation;
mod hash;
mod record;
mod time;
mod value;

pub use config::{canonical_config_string, config_hash, ConfigError, GenerationConfig, GenerationMode};
pub use explanation::Explanation;
pub use hash::{fnv1a_64, fnv1a_64_hex};
pub use record::{
    CallInput, CallOutput, MethodCallRecord, ValidationError, MAX_CALL_ID_CHARS, SCHEMA_VERSION,
};
pub use time::Timestamp;
pub use value::{truncate_value, SerializedValue, VALUE_CHAR_CAP};
