use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use cubelens_core::cube::CubeError;
use cubelens_core::detect::DetectError;
use cubelens_core::estimator::EstimatorError;
use serde_json::json;

/// Error reply: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn not_loaded(what: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "not_loaded", format!("no {what} loaded"))
    }

    pub fn body(&self) -> String {
        json!({"error": {"code": self.code, "message": self.message}}).to_string()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            self.body(),
        )
            .into_response()
    }
}

impl From<CubeError> for ApiError {
    fn from(e: CubeError) -> Self {
        let code = match e {
            CubeError::UnknownDimension(_) => "unknown_dimension",
            _ => "invalid_cube_operation",
        };
        Self::new(StatusCode::BAD_REQUEST, code, e.to_string())
    }
}

impl From<EstimatorError> for ApiError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Cube(c) => c.into(),
            EstimatorError::EmptyCube => Self::new(StatusCode::CONFLICT, "empty", e.to_string()),
            EstimatorError::Parse(_) => Self::new(StatusCode::BAD_REQUEST, "malformed_spec", e.to_string()),
            _ => Self::new(StatusCode::BAD_REQUEST, "invalid_estimator", e.to_string()),
        }
    }
}

impl From<DetectError> for ApiError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::Cube(c) => c.into(),
            DetectError::Estimator(x) => x.into(),
            DetectError::UnknownEntity { .. } => Self::not_found("unknown_entity", e.to_string()),
            DetectError::EventNotInData | DetectError::InactiveAuthor(_) => {
                Self::new(StatusCode::CONFLICT, "no_activity", e.to_string())
            }
            DetectError::UnorderedDay(_) | DetectError::MissingDimension(_) => {
                Self::new(StatusCode::CONFLICT, "unsuitable_dataset", e.to_string())
            }
            DetectError::InvalidHour(_) | DetectError::EmptyEvent | DetectError::TopicSize { .. } => {
                Self::bad_request(e.to_string())
            }
        }
    }
}
