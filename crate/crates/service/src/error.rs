use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::{json, Value};

use crate::api::ApiError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{message}")]
    NotFound { message: String, detail: Value },
    #[error("{message}")]
    Conflict { message: String, detail: Value },
    #[error("{message}")]
    Invalid { code: &'static str, message: String, detail: Value },
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn not_found(what: &str, id: &str) -> Self {
        ServiceError::NotFound {
            message: format!("unknown {what} `{id}`"),
            detail: json!({ what: id }),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::Conflict { .. } => StatusCode::CONFLICT,
            ServiceError::Invalid { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ApiError {
        let (code, detail) = match self {
            ServiceError::NotFound { detail, .. } => ("not_found", detail.clone()),
            ServiceError::Conflict { detail, .. } => ("conflict", detail.clone()),
            ServiceError::Invalid { code, detail, .. } => (*code, detail.clone()),
            ServiceError::Internal(_) => ("internal", Value::Null),
        };
        ApiError {
            code: code.to_string(),
            message: self.to_string(),
            detail,
        }
    }
}

impl From<modn::Error> for ServiceError {
    fn from(e: modn::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if let ServiceError::Internal(msg) = &self {
            log::error!("{msg}");
        }
        (self.status(), Json(self.body())).into_response()
    }
}
