//! The labeling HTTP API, exercised in-process without opening a socket.
//!
//! Run `al serve --addr 127.0.0.1:8080 --store sessions/` for a real server;
//! the requests below work the same against it.

use std::sync::Arc;

use al_core::oracle::SessionStore;
use al_core::service::router;
use al_core::synthetic::{class_names, generate, write_jsonl, SyntheticConfig};
use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (u16, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .expect("valid request");
    let response = app.clone().oneshot(request).await.expect("infallible");
    let status = response.status().as_u16();
    let bytes = response.into_body().collect().await.expect("body").to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::main]
async fn main() -> al_core::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let data = generate(&SyntheticConfig {
        num_instances: 300,
        ..Default::default()
    })?;
    let pool = dir.path().join("pool.jsonl");
    write_jsonl(&data, &pool)?;
    let app = router(Arc::new(SessionStore::open(dir.path().join("sessions"))?));

    let config = json!({
        "dataset": {"path": pool, "class_names": class_names(4), "test_fraction": 0.2},
        "loop": {"num_iterations": 2}
    });
    let (status, created) = call(&app, Method::POST, "/sessions", Some(config)).await;
    println!("POST /sessions → {status} {created}");
    let id = created["session_id"].as_str().expect("id").to_string();

    let (_, batch) = call(&app, Method::GET, &format!("/sessions/{id}/batch"), None).await;
    let instances = batch["instances"].as_array().expect("instances");
    println!(
        "batch {} with {} instances, first: {}",
        batch["batch_id"],
        instances.len(),
        instances[0]["text"]
    );

    // Labels by class name; every instance gets "c0" here.
    let labels: Vec<Value> = instances
        .iter()
        .map(|i| json!({"id": i["id"], "label": "c0"}))
        .collect();
    let uri = format!("/sessions/{id}/labels");
    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"batch_id": 0, "labels": labels[..24]})),
    )
    .await;
    println!("24 of 25 labels → {status} {body}");
    let mut mixed = labels.clone();
    mixed[0]["label"] = json!("c1");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"batch_id": 0, "labels": mixed}))).await;
    println!("complete batch → {status} {body}");
    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"batch_id": 7, "labels": mixed}))).await;
    println!("wrong batch id → {status} {body}");

    loop {
        let (_, progress) = call(&app, Method::GET, &format!("/sessions/{id}/progress"), None).await;
        if progress["status"] != "training" {
            println!("progress → {progress}");
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    Ok(())
}
