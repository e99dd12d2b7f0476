//! HTTP front end for a run store.
//!
//! Routes under `/api/v1`:
//!
//! | method | path      | body / query                                   |
//! |--------|-----------|------------------------------------------------|
//! | GET    | `/runs`   | —                                              |
//! | POST   | `/runs`   | multipart `run_id`, `dataset`, `algorithm`, `attributes`, `file` |
//! | GET    | `/curve`  | `run`, `attribute`, `env` (default `all`), `threshold` |
//! | GET    | `/report` | same as `/curve`                               |
//!
//! Everything else is served from the UI bundle directory when one is
//! configured.

mod error;
mod payload;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::{Json, Router};
use rise_core::report::{Analysis, IndicatorReport, ReportOptions, Selection, ALL_ENVIRONMENTS};
use rise_core::store::{NewRun, RunManifest, Store};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;
use tower_http::services::{ServeDir, ServeFile};

pub use error::{ApiError, ErrorBody};
pub use payload::{CurvePayload, CurvePoint, KneeMarker};

/// Largest accepted upload.
pub const MAX_UPLOAD_BYTES: usize = 512 * 1024 * 1024;

pub struct AppState {
    pub store: Store,
}

type Shared = Arc<AppState>;

#[derive(Debug, Clone, Deserialize)]
pub struct SelectionQuery {
    pub run: String,
    pub attribute: String,
    #[serde(default = "all_envs")]
    pub env: String,
    pub threshold: Option<f64>,
}

fn all_envs() -> String {
    ALL_ENVIRONMENTS.to_string()
}

impl SelectionQuery {
    fn resolve(self) -> Result<(Selection, ReportOptions), ApiError> {
        let mut options = ReportOptions::default();
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(ApiError::bad_request(format!("threshold {t} is outside [0, 1]")));
            }
            options.threshold = t;
        }
        Ok((Selection::new(self.run, self.attribute, self.env), options))
    }
}

async fn run_analysis(state: Shared, query: Result<Query<SelectionQuery>, QueryRejection>) -> Result<Analysis, ApiError> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (selection, options) = q.resolve()?;
    tokio::task::spawn_blocking(move || {
        let snapshot = state.store.snapshot()?;
        snapshot.analyze(&selection, &options).map_err(ApiError::from)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn list_runs(State(state): State<Shared>) -> Result<Json<Vec<RunManifest>>, ApiError> {
    let snapshot = state.store.snapshot()?;
    Ok(Json(snapshot.runs().cloned().collect()))
}

async fn curve(
    State(state): State<Shared>,
    query: Result<Query<SelectionQuery>, QueryRejection>,
) -> Result<Json<CurvePayload>, ApiError> {
    run_analysis(state, query).await.map(|a| Json(a.into()))
}

async fn report(
    State(state): State<Shared>,
    query: Result<Query<SelectionQuery>, QueryRejection>,
) -> Result<Json<IndicatorReport>, ApiError> {
    run_analysis(state, query).await.map(|a| Json(a.report))
}

#[derive(Debug, Serialize)]
struct Created {
    run_id: String,
}

async fn upload(State(state): State<Shared>, mut form: Multipart) -> Result<impl IntoResponse, ApiError> {
    let mut fields = std::collections::HashMap::new();
    let mut file = None;
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        if name == "file" {
            file = Some(bytes);
        } else {
            let text = String::from_utf8(bytes.to_vec())
                .map_err(|_| ApiError::bad_request(format!("field `{name}` is not UTF-8")))?;
            fields.insert(name, text.trim().to_string());
        }
    }
    let file = file.ok_or_else(|| ApiError::bad_request("missing multipart field `file`"))?;
    let mut take = |k: &str| {
        fields
            .remove(k)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| ApiError::bad_request(format!("missing multipart field `{k}`")))
    };
    let new = NewRun {
        run_id: take("run_id")?,
        dataset: take("dataset")?,
        algorithm: take("algorithm")?,
        attributes: fields
            .remove("attributes")
            .map(|s| s.split(',').map(|a| a.trim().to_string()).filter(|a| !a.is_empty()).collect())
            .unwrap_or_default(),
    };

    let run_id = tokio::task::spawn_blocking(move || state.store.register_run(new, &file))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| match e {
            // a requested attribute absent from the file is a bad upload, not a lookup miss
            rise_core::store::StoreError::UnknownAttribute { .. } => {
                let mut err = ApiError::from(e);
                err.status = StatusCode::BAD_REQUEST;
                err.body.status = StatusCode::BAD_REQUEST.as_u16();
                err
            }
            other => other.into(),
        })?;
    Ok((StatusCode::CREATED, Json(Created { run_id })))
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>rise</title></head>
<body>
<p>The UI bundle is not installed. The API is available under <code>/api/v1</code>:</p>
<ul>
<li><a href=\"/api/v1/runs\">/api/v1/runs</a></li>
<li>/api/v1/curve?run=&hellip;&amp;attribute=&hellip;&amp;env=all</li>
<li>/api/v1/report?run=&hellip;&amp;attribute=&hellip;&amp;env=all</li>
</ul>
</body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER)
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

/// The full application. `ui_dir` holds a built UI bundle; without one a
/// placeholder page is served at `/`.
pub fn router(store: Store, ui_dir: Option<PathBuf>) -> Router {
    let state = Arc::new(AppState { store });
    let api = Router::new()
        .route("/runs", get(list_runs).post(upload))
        .route("/curve", get(curve))
        .route("/report", get(report))
        .fallback(api_not_found)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES));
    let app = Router::new().nest("/api/v1", api);
    let app = match ui_dir.filter(|d| d.is_dir()) {
        Some(dir) => {
            let index = dir.join("index.html");
            app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => app.route("/", get(placeholder)),
    };
    app.layer(CorsLayer::permissive()).with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub store_dir: PathBuf,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub enum ServeError {
    Store(rise_core::store::StoreError),
    Bind(std::io::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for ServeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServeError::Store(e) => write!(f, "{e}"),
            ServeError::Bind(e) => write!(f, "cannot bind: {e}"),
            ServeError::Io(e) => write!(f, "server i/o: {e}"),
        }
    }
}

impl std::error::Error for ServeError {}

/// Open the store and bind the listener; nothing is served yet.
pub async fn bind(config: &ServeConfig) -> Result<(TcpListener, Router), ServeError> {
    let store = Store::open(&config.store_dir).map_err(ServeError::Store)?;
    let listener = TcpListener::bind((config.host.as_str(), config.port))
        .await
        .map_err(ServeError::Bind)?;
    Ok((listener, router(store, config.ui_dir.clone())))
}

/// Serve until Ctrl-C.
pub async fn run(listener: TcpListener, app: Router) -> Result<(), ServeError> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServeError::Io)
}

pub fn local_addr(listener: &TcpListener) -> Option<SocketAddr> {
    listener.local_addr().ok()
}
