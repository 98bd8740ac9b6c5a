#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use meshmotion::anim::mocap::write_bundle;
use meshmotion::fixtures;
use meshmotion::mesh;
use meshmotion::pipeline::store::ProjectStore;
use meshmotion::{MoCapRequest, MockMoCapClient};
use meshmotion_service::{router, App};
use serde_json::Value;
use tower::ServiceExt;

pub const BOUNDARY: &str = "meshmotion-test-boundary";

pub fn multipart(fields: &[(&str, String)]) -> Body {
    let mut body = String::new();
    for (name, value) in fields {
        body += &format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n");
    }
    body += &format!("--{BOUNDARY}--\r\n");
    Body::from(body)
}

pub fn target_fields() -> Vec<(&'static str, String)> {
    let target = fixtures::stylized_target();
    vec![
        ("target_mesh", mesh::serialize_obj(&target.mesh)),
        ("target_weights", target.weights.to_json().unwrap()),
    ]
}

pub fn clip_fields(frames: usize) -> Vec<(&'static str, String)> {
    let human = fixtures::human(frames);
    let mut fields = vec![
        ("source_mesh", mesh::serialize_obj(&human.mesh)),
        ("source_weights", human.skeletal_weights.to_json().unwrap()),
        ("source_part_weights", human.part_weights.to_json().unwrap()),
        ("clip", human.clip.to_json()),
    ];
    fields.extend(target_fields());
    fields
}

/// A service over a fresh store whose mock capture client knows
/// `dance.mp4`.
pub struct TestService {
    pub store_dir: tempfile::TempDir,
    pub fixtures_dir: tempfile::TempDir,
    pub router: Router,
}

pub fn service(token: Option<&str>) -> TestService {
    let store_dir = tempfile::tempdir().unwrap();
    let fixtures_dir = tempfile::tempdir().unwrap();
    let router = build(store_dir.path(), fixtures_dir.path(), token);
    let client = MockMoCapClient::new(fixtures_dir.path());
    write_bundle(&client.bundle_dir(&MoCapRequest::new("dance.mp4", 1.0)), &fixtures::human(16).mocap_result()).unwrap();
    TestService {
        store_dir,
        fixtures_dir,
        router,
    }
}

pub fn build(store: &Path, fixtures: &Path, token: Option<&str>) -> Router {
    let app = App::new(ProjectStore::open(store).unwrap(), Arc::new(MockMoCapClient::new(fixtures)))
        .with_token(token.map(str::to_string));
    router(app)
}

pub struct Answer {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

impl Answer {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn send(router: &Router, req: Request<Body>) -> Answer {
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let content_type = res
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Answer {
        status,
        content_type,
        body,
    }
}

pub async fn get(router: &Router, uri: &str) -> Answer {
    send(router, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(router: &Router, uri: &str, body: &str) -> Answer {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(router, req).await
}

pub async fn create(router: &Router, fields: &[(&str, String)]) -> Answer {
    let req = Request::post("/projects")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(multipart(fields))
        .unwrap();
    send(router, req).await
}

/// Starts or reuses a transfer and polls until it settles.
pub async fn run_motrans(router: &Router, id: &str) -> Value {
    let started = post_json(router, &format!("/projects/{id}/motrans"), "").await;
    assert!(
        started.status == StatusCode::OK || started.status == StatusCode::ACCEPTED,
        "{}",
        started.text()
    );
    for _ in 0..600 {
        let status = get(router, &format!("/projects/{id}/motrans")).await.json();
        if status["status"] != "running" {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("transfer did not finish");
}
