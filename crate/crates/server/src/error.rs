use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use gems_core::llm::LlmError;
use gems_core::scoring::FieldError;
use gems_core::session::{SessionError, SCHEMA_VERSION};
use serde_json::json;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: serde_json::Value,
}

impl ApiError {
    pub fn not_found(what: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            body: json!({ "kind": "not_found", "message": format!("{what} not found") }),
        }
    }

    pub fn bad_request(fields: Vec<FieldError>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "kind": "validation_failed", "message": "invalid request", "fields": fields }),
        }
    }

    pub fn conflict(kind: &str, message: &str) -> Self {
        ApiError {
            status: StatusCode::CONFLICT,
            body: json!({ "kind": kind, "message": message }),
        }
    }

    pub fn internal(message: impl ToString) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: json!({ "kind": "internal", "message": message.to_string() }),
        }
    }
}

fn status_of(e: &SessionError) -> StatusCode {
    use SessionError::*;
    match e {
        UnknownSample { .. } | UnknownKey { .. } | UnknownGeneration { .. } => StatusCode::NOT_FOUND,
        DatasetTooSmall { .. } | ValidationFailed { .. } | InvalidEdit { .. } | OperatorRejected => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        DatasetAlreadyLoaded | NoDataset | AlreadyRunning | Busy | Tombstoned { .. } | PopulationCollapse => {
            StatusCode::CONFLICT
        }
        Llm { error: LlmError::EndpointUnavailable { .. } } => StatusCode::BAD_GATEWAY,
        Llm { error: LlmError::Timeout } => StatusCode::GATEWAY_TIMEOUT,
        Llm { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Storage { .. } => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let mut body = serde_json::to_value(&e).unwrap_or_else(|_| json!({}));
        if let Some(obj) = body.as_object_mut() {
            obj.insert("message".into(), json!(e.to_string()));
        }
        ApiError {
            status: status_of(&e),
            body,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "schema_version": SCHEMA_VERSION, "error": self.body });
        (self.status, Json(body)).into_response()
    }
}
