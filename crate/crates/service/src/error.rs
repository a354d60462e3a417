use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hodgeflow_core::Error;
use serde::Serialize;

/// Error envelope returned by every endpoint: `{"error": class, "message": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub class: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct Body<'a> {
    error: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, class: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            class,
            message: message.into(),
        }
    }

    pub fn not_found(class: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, class, message)
    }

    pub fn conflict(class: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, class, message)
    }

    pub fn bad_request(class: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, class, message)
    }

    pub fn unprocessable(class: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, class, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            // payloads that do not parse
            Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::BadDimensions(_)
            | Error::TruncatedFile { .. }
            | Error::LengthMismatch { .. }
            | Error::NonFinite { .. }
            | Error::Parse { .. } => StatusCode::BAD_REQUEST,
            Error::GridTooSmall { .. }
            | Error::DegenerateField(_)
            | Error::DimensionMismatch { .. }
            | Error::RegionOutOfBounds(..)
            | Error::RegionTooSmall(_)
            | Error::EmptyMask
            | Error::EmptySketch
            | Error::InvalidParameter(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::NotConverged(_) | Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.class(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Body {
            error: self.class,
            message: &self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
