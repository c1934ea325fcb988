#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use subtab_service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

pub const BOUNDARY: &str = "XsubtabBoundaryX";

pub fn app(dir: &Path) -> Router {
    app_with(ServiceConfig::new(dir))
}

pub fn app_with(cfg: ServiceConfig) -> Router {
    router(AppState::open(cfg).unwrap())
}

pub fn multipart(csv: &[u8], options: Option<&str>) -> Vec<u8> {
    let mut body = Vec::new();
    if let Some(o) = options {
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"options\"\r\n\r\n{o}\r\n").as_bytes(),
        );
    }
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"t.csv\"\r\nContent-Type: text/csv\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(csv);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    body
}

pub async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into())) };
    (status, v)
}

pub async fn upload(app: &Router, csv: &[u8]) -> (StatusCode, Value) {
    let req = Request::post("/tables")
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(multipart(csv, None)))
        .unwrap();
    send(app, req).await
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

pub async fn post_json(app: &Router, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    send(app, req).await
}

/// Uploads `csv` and returns the table id.
pub async fn upload_ok(app: &Router, csv: &[u8]) -> String {
    let (s, v) = upload(app, csv).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["tableId"].as_str().unwrap().to_string()
}

/// Polls a job until it leaves the running state.
pub async fn wait_job(app: &Router, job: &str) -> Value {
    for _ in 0..6000 {
        let (s, v) = get(app, &format!("/jobs/{job}")).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        if v["status"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job {job} did not finish");
}

/// Starts preprocessing and waits for it; returns the finished job.
pub async fn preprocess(app: &Router, table: &str, body: &str) -> Value {
    let (s, v) = post_json(app, &format!("/tables/{table}/preprocess"), body).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    wait_job(app, v["jobId"].as_str().unwrap()).await
}

/// Exhaustive mining with CANCELLED as the consequent and at least two
/// matching rows, on a small embedding.
pub const FIXTURE_PREPROCESS: &str = r#"{"dim": 8, "epochs": 2, "ruleParams": {"mode": "exhaustive", "targets": ["CANCELLED"], "support": 0.25, "confidence": 0.0, "minRuleSize": 3}}"#;

/// Deterministic numeric table big enough that preprocessing takes a while.
pub fn numeric_csv(n: usize, m: usize) -> Vec<u8> {
    let mut s = (0..m).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    let mut state = 0x2545F4914F6CDD1Du64;
    for _ in 0..n {
        let row: Vec<String> = (0..m)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                format!("{}", (state % 1000) as f64 / 10.0)
            })
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s.into_bytes()
}
