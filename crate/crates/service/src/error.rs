use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;

/// Error body `{"error": category, "message": ...}` with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub category: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, category: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            category: category.to_string(),
            message: message.into(),
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn not_ready(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, "not_ready", what)
    }

    pub fn invalid(e: gcxgc_core::Error) -> Self {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            e.category(),
            e.to_string(),
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<gcxgc_core::Error> for ApiError {
    fn from(e: gcxgc_core::Error) -> Self {
        match e {
            gcxgc_core::Error::Io { .. } => ApiError::internal(e.to_string()),
            other => ApiError::invalid(other),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.category, "message": self.message})),
        )
            .into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
