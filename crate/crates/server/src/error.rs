use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use geobench_core::corpus::CorpusError;
use geobench_core::experiment::ExperimentError;
use geobench_core::store::StoreError;
use serde::Serialize;
use serde_json::{json, Value};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), detail: None }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::Conflict { .. } => Self::new(StatusCode::CONFLICT, "conflict", err.to_string()),
            other => {
                tracing::error!("store failure: {other}");
                Self::internal(other.to_string())
            }
        }
    }
}

impl From<CorpusError> for ApiError {
    fn from(err: CorpusError) -> Self {
        let detail = match &err {
            CorpusError::Xml { line, column, .. } | CorpusError::Schema { line, column, .. } => {
                json!({ "line": line, "column": column })
            }
            CorpusError::DuplicateEntryId(entry_id) => json!({ "entry_id": entry_id }),
            CorpusError::SpanOutOfBounds { entry_id, start, end, .. }
            | CorpusError::PhraseMismatch { entry_id, start, end, .. }
            | CorpusError::Coordinates { entry_id, start, end, .. } => {
                json!({ "entry_id": entry_id, "start": start, "end": end })
            }
        };
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_corpus", err.to_string()).with_detail(detail)
    }
}

impl From<ExperimentError> for ApiError {
    fn from(err: ExperimentError) -> Self {
        match err {
            ExperimentError::MalformedId(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "malformed_id", err.to_string())
            }
            ExperimentError::Store(store) => store.into(),
            other => Self::invalid(other.to_string()),
        }
    }
}
