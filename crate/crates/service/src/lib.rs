//! HTTP/JSON API over one in-memory gramforge session.
//!
//! | route | purpose |
//! |---|---|
//! | `POST /corpus` | add a document (text body or multipart files) |
//! | `GET /corpus`, `DELETE /corpus`, `DELETE /corpus/{id}` | list, clear, remove |
//! | `POST /model`, `GET /model` | build (200 or 202 for background jobs), status |
//! | `POST /model/prune` | drop light contexts from the current model |
//! | `GET /predict`, `GET /perplexity` | query the current model |
//! | `GET /bench/throughput` | tokenizer throughput on synthetic text |

mod error;
mod session;

use std::future::Future;
use std::io;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use gramforge::report::to_json_line;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub use error::{status_of, ApiError};
pub use session::{
    perplexity_with, predict_with, BuildStart, BuildStatus, ModelParams, ModelView,
    PerplexityQuery, PredictQuery, ServiceConfig, Session,
};

type ApiResult = Result<Response, ApiError>;

/// Serializes with the shared report serializer so bodies match the CLI
/// `--json` output byte for byte.
pub fn json_response<T: Serialize>(status: StatusCode, value: &T) -> Response {
    (
        status,
        [(
            header::CONTENT_TYPE,
            HeaderValue::from_static("application/json"),
        )],
        to_json_line(value),
    )
        .into_response()
}

fn ok<T: Serialize>(value: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, value))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

pub fn router(session: Arc<Session>) -> Router {
    let limit = session.config().max_upload_bytes;
    Router::new()
        .route(
            "/corpus",
            post(add_corpus).get(list_corpus).delete(clear_corpus),
        )
        .route("/corpus/{id}", delete(remove_document))
        .route("/model", post(build_model).get(model_status))
        .route("/model/prune", post(prune_model))
        .route("/predict", get(predict))
        .route("/perplexity", get(perplexity))
        .route("/bench/throughput", get(throughput))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(session)
}

#[derive(Debug, Deserialize)]
struct UploadQuery {
    name: Option<String>,
}

async fn add_corpus(
    State(session): State<Arc<Session>>,
    query: Result<Query<UploadQuery>, QueryRejection>,
    request: Request,
) -> ApiResult {
    let Query(query) = query?;
    let is_multipart = request
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));

    if is_multipart {
        let mut multipart = Multipart::from_request(request, &())
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut added = Vec::new();
        while let Some(field) = multipart
            .next_field()
            .await
            .map_err(|e| ApiError::new(e.status(), "invalid_argument", e.body_text()))?
        {
            let name = field
                .file_name()
                .or(field.name())
                .map(str::to_owned)
                .unwrap_or_else(|| "upload".into());
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(e.status(), "invalid_argument", e.body_text()))?;
            let session = session.clone();
            added.push(blocking(move || session.add_document(&name, &bytes)).await?);
        }
        if added.is_empty() {
            return Err(ApiError::bad_request("multipart body has no parts"));
        }
        return Ok(json_response(StatusCode::CREATED, &added));
    }

    let bytes = Bytes::from_request(request, &())
        .await
        .map_err(|e| ApiError::new(e.status(), "invalid_argument", e.body_text()))?;
    let name = query.name.unwrap_or_else(|| "upload".into());
    let info = blocking(move || session.add_document(&name, &bytes)).await?;
    Ok(json_response(StatusCode::CREATED, &info))
}

async fn list_corpus(State(session): State<Arc<Session>>) -> ApiResult {
    ok(&session.listing())
}

async fn clear_corpus(State(session): State<Arc<Session>>) -> ApiResult {
    ok(&session.clear_corpus())
}

async fn remove_document(State(session): State<Arc<Session>>, Path(id): Path<String>) -> ApiResult {
    let id: u64 = id.parse().map_err(|_| {
        ApiError::bad_request(format!("document id must be an integer, got {id:?}"))
    })?;
    ok(&session.remove_document(id)?)
}

#[derive(Debug, Deserialize)]
struct BuildBody {
    n: usize,
    smoothing: Option<String>,
    k: Option<f64>,
}

async fn build_model(
    State(session): State<Arc<Session>>,
    body: Result<Json<BuildBody>, JsonRejection>,
) -> ApiResult {
    let Json(body) = body?;
    let worker = session.clone();
    let start =
        blocking(move || worker.start_build(body.n, body.smoothing.as_deref(), body.k)).await?;
    match start {
        BuildStart::Done(view) => ok(&view),
        BuildStart::Started { job, work } => {
            tokio::task::spawn_blocking(work);
            tracing::debug!(job, "build job accepted");
            let mut response = json_response(StatusCode::ACCEPTED, &session.model_view());
            response
                .headers_mut()
                .insert(header::LOCATION, HeaderValue::from_static("/model"));
            Ok(response)
        }
    }
}

async fn model_status(State(session): State<Arc<Session>>) -> ApiResult {
    ok(&session.model_view())
}

#[derive(Debug, Deserialize)]
struct PruneBody {
    threshold: i64,
}

async fn prune_model(
    State(session): State<Arc<Session>>,
    body: Result<Json<PruneBody>, JsonRejection>,
) -> ApiResult {
    let Json(body) = body?;
    ok(&blocking(move || session.prune(body.threshold)).await?)
}

async fn predict(
    State(session): State<Arc<Session>>,
    query: Result<Query<PredictQuery>, QueryRejection>,
) -> ApiResult {
    let Query(query) = query?;
    ok(&blocking(move || session.predict(&query)).await?)
}

async fn perplexity(
    State(session): State<Arc<Session>>,
    query: Result<Query<PerplexityQuery>, QueryRejection>,
) -> ApiResult {
    let Query(query) = query?;
    ok(&blocking(move || session.perplexity(&query)).await?)
}

#[derive(Debug, Deserialize)]
struct ThroughputQuery {
    bytes: Option<u64>,
}

async fn throughput(
    State(session): State<Arc<Session>>,
    query: Result<Query<ThroughputQuery>, QueryRejection>,
) -> ApiResult {
    let Query(query) = query?;
    ok(&blocking(move || session.throughput(query.bytes)).await?)
}

/// Serves until `shutdown` resolves, letting in-flight requests finish.
pub async fn serve_until(
    listener: TcpListener,
    session: Arc<Session>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(session))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `port` on all interfaces and serves until interrupted.
pub async fn serve(port: u16, session: Arc<Session>) -> io::Result<()> {
    let listener = TcpListener::bind(("0.0.0.0", port)).await?;
    serve_until(listener, session, shutdown_signal()).await
}

async fn shutdown_signal() {
    let interrupt = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut signal) => {
                signal.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = interrupt => {}
        _ = terminate => {}
    }
    tracing::info!("shutting down");
}
