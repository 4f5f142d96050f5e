//! The HTTP query endpoint and admin API.

use std::net::{SocketAddr, TcpListener as StdListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use polygate_core::catalog::Status;
use polygate_core::config::ClusterConfig;
use polygate_core::gen::GenSpec;
use polygate_core::loader::{load, Placement};
use polygate_core::{Cluster, Error, ResultSet, Value};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};
use tokio::sync::oneshot;
use tower_http::cors::CorsLayer;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(Error),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("startup failed: {0}")]
    Startup(Error),
}

impl ServeError {
    /// Process exit code for `polygate serve`.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServeError::Config(_) => 1,
            ServeError::Bind { .. } | ServeError::Startup(_) => 2,
        }
    }
}

fn start_cluster(config: &ClusterConfig) -> Result<Cluster, ServeError> {
    config.validate().map_err(ServeError::Config)?;
    Cluster::start(config).map_err(|e| match e {
        e @ Error::Config(_) => ServeError::Config(e),
        e => ServeError::Startup(e),
    })
}

fn bind(addr: &str) -> Result<StdListener, ServeError> {
    let bind_err = |source| ServeError::Bind {
        addr: addr.to_string(),
        source,
    };
    let listener = StdListener::bind(addr).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    Ok(listener)
}

type Shared = Arc<Cluster>;

pub fn router(cluster: Shared) -> Router {
    Router::new()
        .route("/bigdawg/query", post(query))
        .route("/bigdawg/explain", post(explain))
        .route("/status", get(status))
        .route("/admin/engine/{name}/stop", post(stop_engine))
        .route("/admin/engine/{name}/start", post(start_engine))
        .route("/admin/load", post(load_data))
        .route("/catalog/objects", get(objects))
        .route("/catalog/engines", get(engines))
        // Handlers that ignore the body still drain it so the connection stays usable.
        .fallback(|_: Bytes| async { error_json(StatusCode::NOT_FOUND, "no such endpoint") })
        .method_not_allowed_fallback(|_: Bytes| async {
            error_json(StatusCode::METHOD_NOT_ALLOWED, "method not allowed")
        })
        .layer(CorsLayer::permissive())
        .with_state(cluster)
}

fn error_json(code: StatusCode, msg: &str) -> Response {
    (code, Json(json!({ "error": msg }))).into_response()
}

/// Maps a core error onto a status code and JSON body.
pub fn error_response(err: &Error) -> Response {
    let msg = err.to_string();
    let (code, body) = match err.root() {
        Error::Parse(p) => (StatusCode::BAD_REQUEST, json!({ "error": msg, "position": p.position })),
        Error::EngineUnavailable { engine } => {
            (StatusCode::SERVICE_UNAVAILABLE, json!({ "error": msg, "engine": engine }))
        }
        Error::NoUpEngineForIsland { engine, .. } => {
            (StatusCode::SERVICE_UNAVAILABLE, json!({ "error": msg, "engine": engine }))
        }
        Error::NoSuchEngine(_) => (StatusCode::NOT_FOUND, json!({ "error": msg })),
        Error::DuplicateObject(_) | Error::Refused(_) => (StatusCode::CONFLICT, json!({ "error": msg })),
        Error::Io(_) | Error::Snapshot { .. } => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg })),
        _ => (StatusCode::BAD_REQUEST, json!({ "error": msg, "position": null })),
    };
    let mut body = body;
    if let Some(step) = err.step() {
        body["step"] = json!(step);
    }
    (code, Json(body)).into_response()
}

/// Runs blocking engine work off the async workers.
async fn blocking<T, F>(cluster: Shared, f: F) -> Result<T, Response>
where
    F: FnOnce(&Cluster) -> polygate_core::Result<T> + Send + 'static,
    T: Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&cluster)).await {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(error_response(&e)),
        Err(_) => Err(error_json(StatusCode::INTERNAL_SERVER_ERROR, "request handler panicked")),
    }
}

#[allow(clippy::result_large_err)]
fn text_body(body: &Bytes) -> Result<String, Response> {
    String::from_utf8(body.to_vec()).map_err(|_| error_json(StatusCode::BAD_REQUEST, "body is not valid UTF-8"))
}

fn json_value(v: &Value) -> JsonValue {
    match v {
        Value::Null => JsonValue::Null,
        Value::Int(i) => json!(i),
        // Non-finite floats have no JSON form; they go out as their CSV text.
        Value::Float(f) if f.is_finite() => json!(f),
        Value::Float(f) => json!(format!("{f:?}")),
        Value::Text(s) => json!(s),
    }
}

pub fn result_json(rs: &ResultSet) -> JsonValue {
    let rows: Vec<JsonValue> = rs
        .rows
        .iter()
        .map(|r| JsonValue::Array(r.iter().map(json_value).collect()))
        .collect();
    json!({ "schema": rs.schema.fields(), "rows": rows })
}

fn wants_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.contains("application/json"))
}

async fn query(State(c): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let text = match text_body(&body) {
        Ok(t) => t,
        Err(r) => return r,
    };
    match blocking(c, move |c| c.query(&text)).await {
        Ok(rs) if wants_json(&headers) => Json(result_json(&rs)).into_response(),
        Ok(rs) => (
            [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
            polygate_core::csv::render_csv(&rs),
        )
            .into_response(),
        Err(r) => r,
    }
}

async fn explain(State(c): State<Shared>, body: Bytes) -> Response {
    let text = match text_body(&body) {
        Ok(t) => t,
        Err(r) => return r,
    };
    match blocking(c, move |c| c.explain(&text)).await {
        Ok(j) => Json(j).into_response(),
        Err(r) => r,
    }
}

async fn status(State(c): State<Shared>) -> Response {
    match blocking(c, |c| c.status()).await {
        Ok(s) => Json(s).into_response(),
        Err(r) => r,
    }
}

async fn set_engine(c: Shared, name: String, up: bool) -> Response {
    let res = blocking(c, move |c| {
        let changed = if up { c.start_engine(&name)? } else { c.stop_engine(&name)? };
        let h = c.handle(&name)?;
        let status = if h.is_up() { Status::Up } else { Status::Down };
        Ok(json!({ "engine": h.name, "status": status, "changed": changed }))
    })
    .await;
    match res {
        Ok(j) => Json(j).into_response(),
        Err(r) => r,
    }
}

async fn stop_engine(State(c): State<Shared>, Path(name): Path<String>, _: Bytes) -> Response {
    set_engine(c, name, false).await
}

async fn start_engine(State(c): State<Shared>, Path(name): Path<String>, _: Bytes) -> Response {
    set_engine(c, name, true).await
}

#[derive(Debug, Deserialize)]
struct CatalogFilter {
    island: Option<String>,
    engine: Option<String>,
}

async fn objects(State(c): State<Shared>, Query(filter): Query<CatalogFilter>) -> Response {
    let res = blocking(c, move |c| {
        let engines = c.catalog().engines()?;
        let objects = c.catalog().objects()?;
        let out: Vec<JsonValue> = objects
            .into_iter()
            .filter_map(|o| {
                let engine = engines.iter().find(|e| e.eid == o.engine_id)?.name.clone();
                let keep = filter.island.as_deref().is_none_or(|i| o.island.name().eq_ignore_ascii_case(i))
                    && filter.engine.as_deref().is_none_or(|e| engine.eq_ignore_ascii_case(e));
                keep.then(|| {
                    let mut j = json!(o);
                    j["engine"] = json!(engine);
                    j
                })
            })
            .collect();
        Ok(out)
    })
    .await;
    match res {
        Ok(j) => Json(j).into_response(),
        Err(r) => r,
    }
}

async fn engines(State(c): State<Shared>) -> Response {
    match blocking(c, |c| c.catalog().engines()).await {
        Ok(e) => Json(e).into_response(),
        Err(r) => r,
    }
}

/// Body of `POST /admin/load`; absent fields take the demo values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadRequest {
    pub seed: Option<i64>,
    pub patients: Option<i64>,
    pub len: Option<i64>,
    pub notes: Option<i64>,
    #[serde(default)]
    pub replace: bool,
}

impl LoadRequest {
    pub fn spec(&self) -> GenSpec {
        let d = GenSpec::demo();
        GenSpec {
            seed: self.seed.unwrap_or(d.seed),
            n_patients: self.patients.unwrap_or(d.n_patients),
            waveform_len: self.len.unwrap_or(d.waveform_len),
            n_notes: self.notes.unwrap_or(d.n_notes),
        }
    }
}

/// Upper bound on generated cells so one request cannot exhaust memory.
const MAX_LOAD_CELLS: i64 = 50_000_000;

async fn load_data(State(c): State<Shared>, body: Bytes) -> Response {
    let req: LoadRequest = if body.iter().all(u8::is_ascii_whitespace) {
        LoadRequest::default()
    } else {
        match serde_json::from_slice(&body) {
            Ok(r) => r,
            Err(e) => return error_json(StatusCode::BAD_REQUEST, &format!("bad load request: {e}")),
        }
    };
    let spec = req.spec();
    if [spec.n_patients, spec.waveform_len, spec.n_notes].iter().any(|n| *n < 0) {
        return error_json(StatusCode::BAD_REQUEST, "counts must be non-negative");
    }
    if spec.n_patients.saturating_mul(spec.waveform_len) > MAX_LOAD_CELLS || spec.n_notes > MAX_LOAD_CELLS {
        return error_json(StatusCode::BAD_REQUEST, "dataset too large");
    }
    let replace = req.replace;
    match blocking(c, move |c| load(c, &spec, &Placement::single(c)?, replace)).await {
        Ok(s) => Json(s).into_response(),
        Err(r) => r,
    }
}

/// A server running on its own runtime thread. Dropping it shuts the
/// server down and flushes engine snapshots.
pub struct ServerHandle {
    addr: SocketAddr,
    cluster: Shared,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build()
}

/// Starts the cluster and serves on `config.listen` in a background thread.
pub fn spawn(config: &ClusterConfig) -> Result<ServerHandle, ServeError> {
    let cluster = Arc::new(start_cluster(config)?);
    let listener = bind(&config.listen)?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    let (tx, rx) = oneshot::channel();
    let app = router(cluster.clone());
    let flush_on_exit = cluster.clone();
    let rt = runtime().map_err(|e| ServeError::Startup(e.into()))?;
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).expect("listener from std");
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        if let Err(e) = flush_on_exit.flush() {
            log::error!("- flush_failed error={e}");
        }
    });
    log::info!("- listening addr={addr}");
    Ok(ServerHandle {
        addr,
        cluster,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Serves in the foreground until Ctrl-C, then flushes snapshots.
pub fn serve_forever(config: &ClusterConfig) -> Result<(), ServeError> {
    let cluster = Arc::new(start_cluster(config)?);
    let listener = bind(&config.listen)?;
    let rt = runtime().map_err(|e| ServeError::Startup(e.into()))?;
    let app = router(cluster.clone());
    let served: std::io::Result<()> = rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        log::info!("- listening addr={}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                log::info!("- shutdown");
            })
            .await
    });
    served.map_err(|e| ServeError::Startup(e.into()))?;
    cluster.flush().map_err(ServeError::Startup)
}
