use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use gramforge::report::ErrorBody;
use gramforge::Error;

use crate::json_response;

/// An engine or protocol error with its HTTP status.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: code.to_owned(),
                message: message.into(),
            },
        }
    }

    pub fn model_not_built() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "model_not_built",
            "no model has been built yet; POST /model first",
        )
    }

    pub fn build_in_progress(job: u64) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "build_in_progress",
            format!("build job {job} is still running"),
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_argument", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

pub fn status_of(error: &Error) -> StatusCode {
    match error {
        Error::DocumentNotFound(_) => StatusCode::NOT_FOUND,
        Error::ModelEmpty | Error::ConfigLocked { .. } => StatusCode::CONFLICT,
        Error::EmptyDocument { .. }
        | Error::InsufficientContext { .. }
        | Error::NoScoreableTokens { .. }
        | Error::MeasurementUnreliable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Io { .. } | Error::Stream(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Error> for ApiError {
    fn from(error: Error) -> Self {
        ApiError {
            status: status_of(&error),
            body: ErrorBody::from(&error),
        }
    }
}

impl From<QueryRejection> for ApiError {
    fn from(rejection: QueryRejection) -> Self {
        ApiError::bad_request(rejection.body_text())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(rejection: JsonRejection) -> Self {
        ApiError::new(
            rejection.status(),
            "invalid_argument",
            rejection.body_text(),
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.status, &self.body)
    }
}
