use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use cascade_core::{Error, ValidationIssue};
use serde::{Deserialize, Serialize};

/// Machine-readable error body returned by every endpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub details: Vec<ValidationIssue>,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("simulation {0:?} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str, Vec<ValidationIssue>) {
        match self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", Vec::new()),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict", Vec::new()),
            ApiError::Unprocessable(_) => (StatusCode::UNPROCESSABLE_ENTITY, "malformed_strategy", Vec::new()),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request", Vec::new()),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", Vec::new()),
            ApiError::Core(e) => match e {
                Error::Validation(issues) => (StatusCode::BAD_REQUEST, "invalid_scenario", issues.clone()),
                Error::Parse { line, column, message } => (
                    StatusCode::BAD_REQUEST,
                    "invalid_scenario",
                    vec![ValidationIssue::new(
                        format!("line {line}, column {column}"),
                        message.clone(),
                    )],
                ),
                Error::UnknownAgents(ids) => (
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "unknown_agents",
                    ids.iter()
                        .map(|id| ValidationIssue::new("targets", format!("unknown agent {id:?}")))
                        .collect(),
                ),
                Error::Config(_) => (StatusCode::UNPROCESSABLE_ENTITY, "configuration", Vec::new()),
                Error::Precondition(_) => (StatusCode::CONFLICT, "precondition", Vec::new()),
                Error::Provider(_) => (StatusCode::BAD_GATEWAY, "provider_error", Vec::new()),
                Error::UndefinedCorrelation(_) => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "undefined_correlation", Vec::new())
                }
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "simulation_error", Vec::new()),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, details) = self.parts();
        let body = ErrorEnvelope {
            code: code.to_string(),
            message: self.to_string(),
            details,
        };
        (status, Json(body)).into_response()
    }
}
