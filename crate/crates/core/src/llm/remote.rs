use std::error::Error as _;
use std::io;

use async_trait::async_trait;
use reqwest::{Client, StatusCode};
use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionRequest, LlmError, ProviderDescriptor, ProviderKind};

pub const REMOTE_PROVIDER_ID: &str = "openai-compatible";
pub const URL_ENV: &str = "PROCSIGHT_LLM_URL";
pub const KEY_ENV: &str = "PROCSIGHT_LLM_KEY";
pub const MODELS_ENV: &str = "PROCSIGHT_LLM_MODELS";

const COMPLETIONS_PATH: &str = "/v1/chat/completions";
const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: [ChatMessage<'a>; 1],
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Client for any server speaking the OpenAI chat-completions shape.
#[derive(Debug, Clone)]
pub struct RemoteChatProvider {
    descriptor: ProviderDescriptor,
    endpoint: String,
    api_key: Option<String>,
    client: Client,
}

impl RemoteChatProvider {
    pub fn new(base_url: &str, api_key: Option<String>, models: Vec<String>) -> Result<Self, LlmError> {
        if models.is_empty() {
            return Err(LlmError::Config(format!("{MODELS_ENV} must list at least one model")));
        }
        let base = base_url.trim_end_matches('/');
        let client = Client::builder()
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self {
            descriptor: ProviderDescriptor {
                provider_id: REMOTE_PROVIDER_ID.into(),
                display_name: format!("OpenAI-compatible ({base})"),
                model_ids: models,
                kind: ProviderKind::RemoteChat,
            },
            endpoint: format!("{base}{COMPLETIONS_PATH}"),
            api_key,
            client,
        })
    }

    /// Reads `PROCSIGHT_LLM_URL`, `PROCSIGHT_LLM_KEY` and
    /// `PROCSIGHT_LLM_MODELS` (comma list) through `lookup`. Returns `None`
    /// when no URL is configured.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Option<Self>, LlmError> {
        let Some(url) = lookup(URL_ENV).filter(|u| !u.trim().is_empty()) else {
            return Ok(None);
        };
        let models = lookup(MODELS_ENV)
            .unwrap_or_default()
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(str::to_owned)
            .collect();
        let key = lookup(KEY_ENV).filter(|k| !k.is_empty());
        Self::new(url.trim(), key, models).map(Some)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    async fn send_once(&self, request: &CompletionRequest) -> Result<reqwest::Response, reqwest::Error> {
        let body = ChatRequest {
            model: &request.model_id,
            temperature: request.temperature,
            messages: [ChatMessage { role: "user", content: &request.prompt }],
        };
        let mut builder = self
            .client
            .post(&self.endpoint)
            .timeout(request.timeout())
            .json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        builder.send().await
    }
}

fn is_connection_reset(err: &reqwest::Error) -> bool {
    let mut source = err.source();
    while let Some(e) = source {
        if let Some(io) = e.downcast_ref::<io::Error>() {
            if io.kind() == io::ErrorKind::ConnectionReset {
                return true;
            }
        }
        source = e.source();
    }
    false
}

fn map_transport(err: reqwest::Error, request: &CompletionRequest) -> LlmError {
    if err.is_timeout() {
        LlmError::Timeout(request.timeout())
    } else {
        LlmError::Transport(err.to_string())
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT_CHARS).collect()
}

#[async_trait]
impl CompletionProvider for RemoteChatProvider {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let response = match self.send_once(request).await {
            Ok(r) => r,
            Err(e) if is_connection_reset(&e) => {
                tracing::debug!(endpoint = %self.endpoint, "connection reset, retrying once");
                self.send_once(request)
                    .await
                    .map_err(|e| map_transport(e, request))?
            }
            Err(e) => return Err(map_transport(e, request)),
        };

        let status = response.status();
        let body = response.text().await.map_err(|e| map_transport(e, request))?;
        if status != StatusCode::OK {
            return Err(LlmError::Remote { status: status.as_u16(), body: excerpt(&body) });
        }
        let parsed: ChatResponse = serde_json::from_str(&body)
            .map_err(|e| LlmError::MalformedResponse(format!("{e}: {}", excerpt(&body))))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .map(|text| text.trim().to_owned())
            .ok_or_else(|| LlmError::MalformedResponse("no choices[0].message.content".into()))
    }
}
