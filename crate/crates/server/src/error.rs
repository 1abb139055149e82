use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use procsight_core::store::StoreError;
use procsight_core::ExplainError;
use serde::Serialize;

/// Every non-2xx response carries this body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_call_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody { error, detail: detail.into(), failing_call_id: None, provider_error: None },
        }
    }

    pub fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", detail)
    }

    pub fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }

    pub fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UnknownProcess(_) => Self::new(StatusCode::NOT_FOUND, "unknown_process", e.to_string()),
            other => {
                tracing::error!(error = %other, "store failure");
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", other.to_string())
            }
        }
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        let detail = e.to_string();
        let failing = e.failing_call_id().map(str::to_owned);
        let mut err = match e {
            ExplainError::InvalidConfig(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", detail),
            ExplainError::UnavailableModel(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unavailable_model", detail)
            }
            ExplainError::UnknownCallId(_) => Self::new(StatusCode::NOT_FOUND, "unknown_call_id", detail),
            ExplainError::Tree(_) => Self::new(StatusCode::CONFLICT, "inconsistent_trace", detail),
            ExplainError::Store(s) => return s.into(),
            ExplainError::Prompt { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "prompt_impossible", detail)
            }
            ExplainError::Provider { ref source, .. } => {
                let mut err = Self::new(StatusCode::BAD_GATEWAY, "provider_failure", detail.clone());
                err.body.provider_error = Some(source.to_string());
                err
            }
        };
        err.body.failing_call_id = failing;
        err
    }
}
