//! Text generators behind one interface: a deterministic mock and a remote
//! OpenAI-compatible chat-completions backend.

mod mock;
mod remote;

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mock::{MockProvider, MOCK_PROVIDER_ID};
pub use remote::{RemoteChatProvider, KEY_ENV, MODELS_ENV, REMOTE_PROVIDER_ID, URL_ENV};

pub const DEFAULT_TIMEOUT_SECS: u64 = 60;
/// Slack on top of the request timeout before `complete` gives up.
const TIMEOUT_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Mock,
    RemoteChat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub provider_id: String,
    pub display_name: String,
    pub model_ids: Vec<String>,
    pub kind: ProviderKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub timeout_seconds: u64,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            timeout_seconds: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.timeout_seconds)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("unknown provider `{0}`")]
    UnknownProvider(String),
    #[error("provider `{provider}` has no model `{model}`")]
    UnknownModel { provider: String, model: String },
    #[error("provider `{0}` is registered twice")]
    DuplicateProvider(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("remote returned HTTP {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider configuration: {0}")]
    Config(String),
}

#[async_trait]
pub trait CompletionProvider: Send + Sync {
    fn descriptor(&self) -> &ProviderDescriptor;

    async fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError>;
}

/// The set of providers a user can pick from.
#[derive(Clone, Default)]
pub struct ProviderRegistry {
    providers: Vec<Arc<dyn CompletionProvider>>,
}

impl std::fmt::Debug for ProviderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.providers.iter().map(|p| &p.descriptor().provider_id))
            .finish()
    }
}

impl ProviderRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry with only the given mock.
    pub fn with_mock(mock: Arc<MockProvider>) -> Self {
        let mut r = Self::empty();
        r.register(mock).expect("empty registry");
        r
    }

    /// Mock provider plus the remote backend when `PROCSIGHT_LLM_URL` is set.
    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let mut r = Self::with_mock(Arc::new(MockProvider::new()));
        if let Some(remote) = RemoteChatProvider::from_lookup(lookup)? {
            r.register(Arc::new(remote))?;
        }
        Ok(r)
    }

    pub fn register(&mut self, provider: Arc<dyn CompletionProvider>) -> Result<(), LlmError> {
        let d = provider.descriptor();
        if d.model_ids.is_empty() {
            return Err(LlmError::Config(format!("provider `{}` lists no models", d.provider_id)));
        }
        if self.get(&d.provider_id).is_some() {
            return Err(LlmError::DuplicateProvider(d.provider_id.clone()));
        }
        self.providers.push(provider);
        Ok(())
    }

    pub fn list_providers(&self) -> Vec<ProviderDescriptor> {
        self.providers.iter().map(|p| p.descriptor().clone()).collect()
    }

    pub fn get(&self, provider_id: &str) -> Option<&Arc<dyn CompletionProvider>> {
        self.providers
            .iter()
            .find(|p| p.descriptor().provider_id == provider_id)
    }

    /// Checks that `model_id` is offered by `provider_id`.
    pub fn check(&self, provider_id: &str, model_id: &str) -> Result<(), LlmError> {
        let provider = self
            .get(provider_id)
            .ok_or_else(|| LlmError::UnknownProvider(provider_id.to_owned()))?;
        if !provider.descriptor().model_ids.iter().any(|m| m == model_id) {
            return Err(LlmError::UnknownModel {
                provider: provider_id.to_owned(),
                model: model_id.to_owned(),
            });
        }
        Ok(())
    }

    pub async fn complete(
        &self,
        provider_id: &str,
        request: &CompletionRequest,
    ) -> Result<String, LlmError> {
        self.check(provider_id, &request.model_id)?;
        if request.prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let provider = self.get(provider_id).expect("checked above");
        let limit = request.timeout() + TIMEOUT_GRACE;
        match tokio::time::timeout(limit, provider.complete(request)).await {
            Ok(result) => result,
            Err(_) => Err(LlmError::Timeout(request.timeout())),
        }
    }
}
