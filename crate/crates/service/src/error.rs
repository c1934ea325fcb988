use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use subtab_core::Error;

/// An error response: status code plus a JSON body
/// `{"error": kind, "message": text, "line"?: n}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
    pub line: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self { status, kind, message: message.into(), line: None }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("no {what} {id:?}"))
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Parse { line, .. } => Self { line: Some(line), ..Self::new(StatusCode::BAD_REQUEST, "parse", message) },
            Error::EmptyTable => Self::new(StatusCode::BAD_REQUEST, "parse", message),
            Error::Query(_) => Self::new(StatusCode::BAD_REQUEST, "query", message),
            Error::NotPreprocessed(_) => Self::conflict(message),
            Error::Config(_)
            | Error::Parameter(_)
            | Error::TooLarge(_)
            | Error::Selection(_)
            | Error::Binning(_)
            | Error::DegenerateVocabulary(_) => Self::invalid(message),
            Error::MissingVector(_) | Error::SessionLog(_) | Error::Format(_) | Error::Io(_) | Error::Json(_) => {
                Self::internal(message)
            }
        }
    }
}

/// Classifies a JSON body error: malformed JSON is a 400, well-formed JSON
/// of the wrong shape a 422.
pub fn body_error(e: serde_json::Error) -> ApiError {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => ApiError::invalid(format!("invalid request body: {e}")),
        _ => ApiError::bad_request(format!("malformed JSON body: {e}")),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.kind, "message": self.message });
        if let Some(line) = self.line {
            body["line"] = json!(line);
        }
        (self.status, Json(body)).into_response()
    }
}

pub type ApiResult<T> = std::result::Result<T, ApiError>;
