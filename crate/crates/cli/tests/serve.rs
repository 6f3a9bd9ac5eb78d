mod common;

use std::sync::Arc;

use acttopo_cli::serve::{router, Registry};
use acttopo_core::LabeledPointCloud;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use common::*;
use http_body_util::BodyExt;
use tower::ServiceExt;

fn registry() -> Arc<Registry> {
    let mut reg = Registry::default();
    reg.insert("circles", nested_circles(), true);
    let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 * 0.05, (i % 2) as f64 * 0.01]).collect();
    reg.insert("line", LabeledPointCloud::from_rows(&rows, vec![4; 60]).unwrap(), true);
    Arc::new(reg)
}

async fn call(method: &str, uri: &str, body: &str) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = router(registry()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn health_and_cloud_listing() {
    assert_eq!(call("GET", "/health", "").await, (StatusCode::OK, r#"{"status":"ok"}"#.into()));
    let (status, body) = call("GET", "/clouds", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        body,
        r#"[{"id":"circles","num_points":400,"dim":2,"labeled":true},{"id":"line","num_points":60,"dim":2,"labeled":true}]"#
    );
}

#[tokio::test]
async fn mapper_response_matches_cli_output() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = write_cloud(dir.path(), "circles.csv", &nested_circles());
    for (cli_extra, body) in [
        (vec![], r#"{"cloud_id":"circles"}"#),
        (
            vec!["--num-intervals", "5", "--filter", "coord:1"],
            r#"{"cloud_id":"circles","num_intervals":5,"filter":"coord:1","eps":"auto"}"#,
        ),
        (
            vec!["--num-intervals", "7", "--overlap", "0.4", "--eps", "0.3", "--min-samples", "3", "--no-members"],
            r#"{"cloud_id":"circles","num_intervals":7,"overlap":0.4,"eps":0.3,"min_samples":3,"include_members":false}"#,
        ),
    ] {
        let out = dir.path().join("g.json");
        let mut args = vec!["mapper", "--cloud", p(&cloud), "-o", p(&out)];
        args.extend(cli_extra);
        ok(&args);
        let (status, served) = call("POST", "/mapper", body).await;
        assert_eq!(status, StatusCode::OK, "{served}");
        assert_eq!(served.as_bytes(), std::fs::read(&out).unwrap().as_slice(), "{body}");
    }
}

#[tokio::test]
async fn purity_of_a_served_graph() {
    let (_, graph) = call("POST", "/mapper", r#"{"cloud_id":"line","num_intervals":4,"eps":0.2,"filter":"coord:0"}"#).await;
    let body = format!(r#"{{"cloud_id":"line","graph":{graph}}}"#);
    let (status, summary) = call("POST", "/purity", &body).await;
    assert_eq!(status, StatusCode::OK, "{summary}");
    assert_eq!(summary, r#"{"mean_node_purity":1.0,"per_class":{"4":1.0},"noise_count":0}"#);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let (status, body) = call("POST", "/mapper", r#"{"cloud_id":"nope"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body.contains("nope"));
    for req in [
        r#"{"cloud_id":"circles","eps":-1}"#,
        r#"{"cloud_id":"circles","eps":"tiny"}"#,
        r#"{"cloud_id":"circles","overlap":1.5}"#,
        r#"{"cloud_id":"circles","num_intervals":0}"#,
        r#"{"cloud_id":"circles","filter":"coord:9"}"#,
        r#"{"cloud_id":"circles","colour":"red"}"#,
        r#"not json"#,
    ] {
        let (status, body) = call("POST", "/mapper", req).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{req}");
        assert!(body.starts_with(r#"{"error":"#), "{body}");
    }
    let (_, slim) = call("POST", "/mapper", r#"{"cloud_id":"line","num_intervals":4,"include_members":false,"eps":0.2}"#).await;
    let (status, _) = call("POST", "/purity", &format!(r#"{{"cloud_id":"line","graph":{slim}}}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call("POST", "/purity", r#"{"cloud_id":"ghost","graph":{}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn graphs_from_another_cloud_are_rejected() {
    let (_, graph) = call("POST", "/mapper", r#"{"cloud_id":"line","num_intervals":4,"eps":0.2}"#).await;
    let (status, body) = call("POST", "/purity", &format!(r#"{{"cloud_id":"circles","graph":{graph}}}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body.contains("points"));
}
