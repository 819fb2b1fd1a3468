//! Drives the HTTP API in-process: submit a generation job, poll it, fetch
//! the scene record and one part mesh.

mod common;

use std::time::Duration;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use partgen::pipeline::GenerateOptions;
use partgen::server::{router, JobRecord, ServerState};
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (u16, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let body = body.map_or_else(Body::empty, |v| Body::from(v.to_string()));
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::main]
async fn main() {
    let store = tempfile::tempdir().unwrap();
    let opts = GenerateOptions {
        steps: 10,
        kmax: 8,
        ..GenerateOptions::default()
    };
    let app = router(ServerState::new(common::models(), store.path().into(), opts, 1));

    let body = json!({"category": "chair", "sample_seed": 3, "seed": 7, "gt_boxes": true});
    let (status, bytes) = call(&app, "POST", "/api/generate", Some(body)).await;
    let mut job: JobRecord = serde_json::from_slice(&bytes).unwrap();
    println!("POST /api/generate -> {status} {}", job.job_id);
    while !job.status.is_terminal() {
        tokio::time::sleep(Duration::from_millis(100)).await;
        let (_, bytes) = call(&app, "GET", &format!("/api/jobs/{}", job.job_id), None).await;
        job = serde_json::from_slice(&bytes).unwrap();
    }
    let id = job.scene_id.expect("scene id");
    let (_, bytes) = call(&app, "GET", &format!("/api/scenes/{id}"), None).await;
    let scene: Value = serde_json::from_slice(&bytes).unwrap();
    println!("scene {id}: {} parts", scene["parts"].as_array().unwrap().len());
    let (status, mesh) = call(&app, "GET", &format!("/api/scenes/{id}/parts/1/mesh"), None).await;
    println!("part 1 mesh -> {status}, {} bytes", mesh.len());
}
