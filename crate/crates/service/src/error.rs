use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use meshmotion::pipeline::PipelineError;
use meshmotion::MoCapError;
use serde_json::json;

/// Error answer: `{"error": message, "code": short name}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        use PipelineError as P;
        let (status, code) = match &e {
            P::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            P::InvalidId(_) => (StatusCode::BAD_REQUEST, "invalid_id"),
            P::FrameOutOfRange { .. } => (StatusCode::NOT_FOUND, "frame_out_of_range"),
            P::LabelOutOfRange { .. } => (StatusCode::BAD_REQUEST, "label_out_of_range"),
            P::NoClip | P::NoResults | P::Stage { .. } | P::CaptureAfterPoseEdits(_) => (StatusCode::CONFLICT, "stage"),
            P::MoCap(MoCapError::NotFound(_)) => (StatusCode::NOT_FOUND, "capture_not_found"),
            P::MoCap(MoCapError::DurationExceeded { .. } | MoCapError::InvalidDuration(_)) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "video_duration")
            }
            P::MoCap(_) => (StatusCode::BAD_GATEWAY, "capture_service"),
            P::Io { .. } | P::Corrupt { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_input"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        (self.status, Json(json!({"error": self.message, "code": self.code}))).into_response()
    }
}
