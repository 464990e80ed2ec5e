use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use nmx_core::error::Error;
use nmx_core::model::ValidationReport;
use serde::Serialize;

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error,
                message: message.into(),
                report: None,
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "schema", message)
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("unknown {}", what.into()))
    }

    pub fn conflict(base: &str, head: &str) -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "stale-version",
            format!("base version {base} is stale, current is {head}"),
        )
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "domain", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Input(_) | Error::Parse { .. } | Error::Schema { .. } | Error::Parameter(_) => {
                Self::new(StatusCode::BAD_REQUEST, "schema", message)
            }
            Error::Invalid(report) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody {
                    error: "invalid",
                    message,
                    report: Some(report),
                },
            },
            Error::Cycle(_) | Error::Inconsistent | Error::EmptyView | Error::Extraction(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "domain", message)
            }
            Error::Version { .. } => Self::new(StatusCode::CONFLICT, "stale-version", message),
            Error::Capacity { .. } => Self::new(StatusCode::INSUFFICIENT_STORAGE, "capacity", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
