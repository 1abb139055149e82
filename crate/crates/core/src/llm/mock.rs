use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use async_trait::async_trait;

use super::{CompletionProvider, CompletionRequest, LlmError, ProviderDescriptor, ProviderKind};
use crate::model::fnv1a_64_hex;

pub const MOCK_PROVIDER_ID: &str = "mock";
pub const DEFAULT_MOCK_MODEL: &str = "mock-1";

/// Deterministic provider: answers `MOCK-EXPLANATION[<fnv1a-64 of prompt>]`.
///
/// Counts every call so tests can assert on generation work.
#[derive(Debug)]
pub struct MockProvider {
    descriptor: ProviderDescriptor,
    calls: AtomicU64,
    latency: Option<Duration>,
    fail_marker: Option<String>,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new()
    }
}

impl MockProvider {
    pub fn new() -> Self {
        Self {
            descriptor: ProviderDescriptor {
                provider_id: MOCK_PROVIDER_ID.into(),
                display_name: "Mock (deterministic digest)".into(),
                model_ids: vec![DEFAULT_MOCK_MODEL.into()],
                kind: ProviderKind::Mock,
            },
            calls: AtomicU64::new(0),
            latency: None,
            fail_marker: None,
        }
    }

    pub fn with_models(mut self, models: &[&str]) -> Self {
        self.descriptor.model_ids = models.iter().map(|m| m.to_string()).collect();
        self
    }

    /// Sleeps before answering.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Fails with HTTP 500 whenever the prompt contains `marker`.
    pub fn failing_on(mut self, marker: impl Into<String>) -> Self {
        self.fail_marker = Some(marker.into());
        self
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn answer_for(prompt: &str) -> String {
        format!("MOCK-EXPLANATION[{}]", fnv1a_64_hex(prompt.as_bytes()))
    }
}

#[async_trait]
impl CompletionProvider for MockProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(latency) = self.latency {
            tokio::time::sleep(latency).await;
        }
        if let Some(marker) = &self.fail_marker {
            if request.prompt.contains(marker.as_str()) {
                return Err(LlmError::Remote { status: 500, body: "injected mock failure".into() });
            }
        }
        Ok(Self::answer_for(&request.prompt))
    }
}
