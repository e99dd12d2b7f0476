use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rise_core::report::ReportError;
use rise_core::store::{QueryError, StoreError};
use serde::Serialize;

/// JSON error body: `{"status", "code", "message", "reason"?, "line"?}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                status: status.as_u16(),
                code,
                message: message.into(),
                reason: None,
                line: None,
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::UnknownRun(_) => Self::new(StatusCode::NOT_FOUND, "unknown_run", message),
            StoreError::UnknownAttribute { .. } => Self::new(StatusCode::NOT_FOUND, "unknown_attribute", message),
            StoreError::UnknownEnvironment { .. } => Self::new(StatusCode::NOT_FOUND, "unknown_environment", message),
            StoreError::DuplicateRun(_) => Self::new(StatusCode::CONFLICT, "duplicate_run", message),
            StoreError::InvalidRunId(_) => Self::new(StatusCode::BAD_REQUEST, "invalid_run_id", message),
            StoreError::Ingest(ref ie) => {
                let mut err = Self::new(StatusCode::BAD_REQUEST, "invalid_predictions", message.clone());
                err.body.line = ie.line();
                err
            }
            StoreError::Corrupt(_) | StoreError::MissingRoot(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_corrupt", message)
            }
            StoreError::Io(_) => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_io", message),
        }
    }
}

impl From<ReportError> for ApiError {
    fn from(e: ReportError) -> Self {
        match e.missing_group() {
            Some(g) => {
                let mut err = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "missing_group", e.to_string());
                err.body.reason = Some(format!("missing group {}", g.index()));
                err
            }
            None => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "analysis_failed", e.to_string()),
        }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Selection(s) => s.into(),
            QueryError::Report(r) => r.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
