//! Read-only HTTP service over clouds registered at startup.
//!
//! `GET /health`, `GET /clouds`, `POST /mapper`, `POST /purity`. Every
//! request recomputes from the registered cloud through the same functions
//! the CLI uses, so responses match CLI output byte for byte.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use acttopo_core::mapper::{EpsChoice, GraphDocument, DEFAULT_MIN_SAMPLES, DEFAULT_NUM_INTERVALS, DEFAULT_OVERLAP};
use acttopo_core::LabeledPointCloud;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use crate::{decode_cloud, mapper_json, mapper_params, purity_report, CliError, ServeArgs};

pub struct RegisteredCloud {
    pub cloud: LabeledPointCloud,
    pub labeled: bool,
}

/// Clouds by id; immutable once the server starts.
#[derive(Default)]
pub struct Registry {
    clouds: BTreeMap<String, RegisteredCloud>,
}

impl Registry {
    pub fn insert(&mut self, id: impl Into<String>, cloud: LabeledPointCloud, labeled: bool) {
        self.clouds.insert(id.into(), RegisteredCloud { cloud, labeled });
    }

    /// Loads `id=path` or `path` specs (the id defaults to the file stem).
    pub fn load(specs: &[String], no_labels: bool) -> Result<Self, CliError> {
        let mut reg = Self::default();
        for spec in specs {
            let (id, path) = match spec.split_once('=') {
                Some((id, path)) => (id.to_string(), PathBuf::from(path)),
                None => {
                    let path = PathBuf::from(spec);
                    let id = path
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| spec.clone());
                    (id, path)
                }
            };
            if reg.clouds.contains_key(&id) {
                return Err(CliError::validation(format!("cloud id {id:?} registered twice")));
            }
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let (cloud, labeled) = decode_cloud(&text, no_labels)?;
            reg.insert(id, cloud, labeled);
        }
        Ok(reg)
    }
}

#[derive(Serialize)]
struct CloudInfo<'a> {
    id: &'a str,
    num_points: usize,
    dim: usize,
    labeled: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MapperRequest {
    cloud_id: String,
    #[serde(default = "default_intervals")]
    num_intervals: usize,
    #[serde(default = "default_overlap")]
    overlap: f64,
    #[serde(default = "default_eps")]
    eps: serde_json::Value,
    #[serde(default = "default_min_samples")]
    min_samples: usize,
    #[serde(default = "default_filter")]
    filter: String,
    #[serde(default = "default_members")]
    include_members: bool,
}

fn default_intervals() -> usize {
    DEFAULT_NUM_INTERVALS
}
fn default_overlap() -> f64 {
    DEFAULT_OVERLAP
}
fn default_eps() -> serde_json::Value {
    serde_json::Value::String("auto".into())
}
fn default_min_samples() -> usize {
    DEFAULT_MIN_SAMPLES
}
fn default_filter() -> String {
    "l2".into()
}
fn default_members() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PurityRequest {
    cloud_id: String,
    graph: GraphDocument,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    let body = serde_json::json!({ "error": message.into() }).to_string();
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn json(body: String) -> Response {
    (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

type Failure = (StatusCode, String);

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Failure> {
    serde_json::from_slice(body).map_err(|e| (StatusCode::BAD_REQUEST, format!("invalid request: {e}")))
}

fn lookup<'a>(reg: &'a Registry, id: &str) -> Result<&'a RegisteredCloud, Failure> {
    reg.clouds
        .get(id)
        .ok_or_else(|| (StatusCode::NOT_FOUND, format!("unknown cloud {id:?}")))
}

fn bad_request(e: CliError) -> Failure {
    (StatusCode::BAD_REQUEST, e.message)
}

fn eps_choice(value: &serde_json::Value) -> Result<EpsChoice, Failure> {
    match value {
        serde_json::Value::String(s) if s.eq_ignore_ascii_case("auto") => Ok(EpsChoice::Auto),
        serde_json::Value::Number(n) => n
            .as_f64()
            .map(EpsChoice::Value)
            .ok_or_else(|| (StatusCode::BAD_REQUEST, "eps out of range".into())),
        other => Err((StatusCode::BAD_REQUEST, format!("eps must be a number or \"auto\", got {other}"))),
    }
}

fn handle_mapper(reg: &Registry, body: &[u8]) -> Result<String, Failure> {
    let req: MapperRequest = parse_body(body)?;
    let entry = lookup(reg, &req.cloud_id)?;
    let eps = eps_choice(&req.eps)?;
    let params = mapper_params(req.num_intervals, req.overlap, eps, req.min_samples, &req.filter).map_err(bad_request)?;
    mapper_json(&entry.cloud, &params, req.include_members).map_err(bad_request)
}

fn handle_purity(reg: &Registry, body: &[u8]) -> Result<String, Failure> {
    let req: PurityRequest = parse_body(body)?;
    let entry = lookup(reg, &req.cloud_id)?;
    let report = purity_report(&req.graph, &entry.cloud, entry.labeled).map_err(bad_request)?;
    Ok(serde_json::to_string(&report.summary()).expect("summary serializes"))
}

type Handler = fn(&Registry, &[u8]) -> Result<String, Failure>;

async fn blocking(reg: Arc<Registry>, body: Bytes, f: Handler) -> Response {
    match tokio::task::spawn_blocking(move || f(&reg, &body)).await {
        Ok(Ok(body)) => json(body),
        Ok(Err((status, message))) => error(status, message),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")),
    }
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/health", get(|| async { json(r#"{"status":"ok"}"#.to_string()) }))
        .route(
            "/clouds",
            get(|State(reg): State<Arc<Registry>>| async move {
                let infos: Vec<CloudInfo> = reg
                    .clouds
                    .iter()
                    .map(|(id, c)| CloudInfo {
                        id,
                        num_points: c.cloud.len(),
                        dim: c.cloud.dim(),
                        labeled: c.labeled,
                    })
                    .collect();
                json(serde_json::to_string(&infos).expect("cloud list serializes"))
            }),
        )
        .route(
            "/mapper",
            post(|State(reg): State<Arc<Registry>>, body: Bytes| blocking(reg, body, handle_mapper)),
        )
        .route(
            "/purity",
            post(|State(reg): State<Arc<Registry>>, body: Bytes| blocking(reg, body, handle_purity)),
        )
        .with_state(registry)
}

pub fn run(args: &ServeArgs) -> Result<(), CliError> {
    let registry = Arc::new(Registry::load(&args.clouds, args.no_labels)?);
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&PathBuf::from("<runtime>"), e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::io(&PathBuf::from(&addr), e))?;
        eprintln!("serving {} cloud(s) on http://{addr}", registry.clouds.len());
        axum::serve(listener, router(registry))
            .await
            .map_err(|e| CliError::io(&PathBuf::from(&addr), e))
    })
}
