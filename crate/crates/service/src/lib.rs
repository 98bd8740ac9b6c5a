//! HTTP API over meshmotion projects and an HTTP client for a remote
//! capture service.

pub mod api;
pub mod error;
pub mod mocap_http;

pub use api::{correspondence_json, frame_json, labels_json, router, App, Job, ProjectSummary};
pub use error::ApiError;
pub use mocap_http::HttpMoCapClient;

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: App) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(app)).await
}
