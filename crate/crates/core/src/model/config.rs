use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hash::fnv1a_64_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenerationMode {
    Template,
    Llm,
}

impl GenerationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GenerationMode::Template => "template",
            GenerationMode::Llm => "llm",
        }
    }
}

/// User-selected explanation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub mode: GenerationMode,
    pub provider_id: Option<String>,
    pub model_id: Option<String>,
    pub temperature: f64,
    pub include_docstring: bool,
    /// Per-child cap on sub-call explanation text inside aggregates.
    pub max_child_chars: usize,
    pub max_prompt_chars: usize,
    /// Relative depth below the explained call; 0 means unlimited.
    pub max_depth: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            mode: GenerationMode::Template,
            provider_id: None,
            model_id: None,
            temperature: 0.0,
            include_docstring: false,
            max_child_chars: 500,
            max_prompt_chars: 12_000,
            max_depth: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("temperature must be within [0, 2], got {0}")]
    Temperature(f64),
    #[error("{0} is required in llm mode")]
    Missing(&'static str),
    #[error("{0} must not contain `;`")]
    ReservedChar(&'static str),
    #[error("{0} must be positive")]
    ZeroBudget(&'static str),
    #[error("max_child_chars ({child}) must be smaller than max_prompt_chars ({prompt})")]
    ChildCapTooLarge { child: usize, prompt: usize },
}

impl GenerationConfig {
    pub fn template() -> Self {
        Self::default()
    }

    pub fn llm(provider_id: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            mode: GenerationMode::Llm,
            provider_id: Some(provider_id.into()),
            model_id: Some(model_id.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ConfigError::Temperature(self.temperature));
        }
        if self.mode == GenerationMode::Llm {
            for (name, value) in [("provider_id", &self.provider_id), ("model_id", &self.model_id)] {
                match value.as_deref() {
                    None | Some("") => return Err(ConfigError::Missing(name)),
                    // `;` separates fields in the canonical string.
                    Some(v) if v.contains(';') => return Err(ConfigError::ReservedChar(name)),
                    Some(_) => {}
                }
            }
        }
        if self.max_child_chars == 0 {
            return Err(ConfigError::ZeroBudget("max_child_chars"));
        }
        if self.max_prompt_chars == 0 {
            return Err(ConfigError::ZeroBudget("max_prompt_chars"));
        }
        if self.max_child_chars >= self.max_prompt_chars {
            return Err(ConfigError::ChildCapTooLarge {
                child: self.max_child_chars,
                prompt: self.max_prompt_chars,
            });
        }
        Ok(())
    }

    /// Fixed-order `;`-joined rendering of every field that can influence output.
    ///
    /// Template mode blanks the provider, model and temperature fields since
    /// they cannot change template text.
    pub fn canonical_string(&self) -> String {
        let (provider, model, temperature) = match self.mode {
            GenerationMode::Template => ("", "", 0.0),
            GenerationMode::Llm => (
                self.provider_id.as_deref().unwrap_or(""),
                self.model_id.as_deref().unwrap_or(""),
                self.temperature,
            ),
        };
        format!(
            "{};{};{};{:.4};{};{};{};{}",
            self.mode.as_str(),
            provider,
            model,
            temperature,
            self.include_docstring,
            self.max_child_chars,
            self.max_prompt_chars,
            self.max_depth,
        )
    }

    /// FNV-1a 64 of [`Self::canonical_string`], as 16 lower-case hex chars.
    pub fn hash(&self) -> String {
        fnv1a_64_hex(self.canonical_string().as_bytes())
    }
}

pub fn canonical_config_string(config: &GenerationConfig) -> String {
    config.canonical_string()
}

pub fn config_hash(config: &GenerationConfig) -> String {
    config.hash()
}
