use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use muit_core::codegen::escape_text;
use muit_core::wire::{SyncBatch, INSTANCE_HEADER, RESUME_TOKEN_HEADER};
use tokio::net::TcpListener;

use crate::engine::{ApiError, Engine, Reply, SoapOutcome};

type Shared = State<Arc<Engine>>;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/svc/{name}", post(soap).get(entry))
        .route("/task/{id}/ui", get(task_ui))
        .route("/task/{id}/result", post(result))
        .route("/sync", post(sync))
        .route("/metrics", get(metrics))
        .route("/bundle/{name}/{*asset}", get(asset))
        .with_state(engine)
}

fn status(code: u16) -> StatusCode {
    StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
}

fn xml(reply: Reply) -> Response {
    (status(reply.status), [(header::CONTENT_TYPE, "text/xml; charset=utf-8")], reply.body).into_response()
}

fn api_error(e: ApiError) -> Response {
    (status(e.status()), Json(e.body())).into_response()
}

fn header_value(s: &str) -> HeaderValue {
    HeaderValue::from_str(s).unwrap_or(HeaderValue::from_static(""))
}

async fn soap(State(engine): Shared, Path(name): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let token = headers.get(RESUME_TOKEN_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    match engine.handle_soap(&name, &body, token.as_deref()).await {
        SoapOutcome::Accepted { instance, body } => {
            let mut r = xml(Reply { status: 202, body });
            r.headers_mut().insert(INSTANCE_HEADER, header_value(&instance));
            r
        }
        SoapOutcome::Answered { instance, reply } => {
            let mut r = xml(reply);
            r.headers_mut().insert(INSTANCE_HEADER, header_value(&instance));
            r
        }
        SoapOutcome::Pending { instance, token } => {
            let mut r = StatusCode::ACCEPTED.into_response();
            r.headers_mut().insert(INSTANCE_HEADER, header_value(&instance));
            r.headers_mut().insert(RESUME_TOKEN_HEADER, header_value(&token));
            r
        }
        SoapOutcome::Rejected(reply) => xml(reply),
    }
}

/// The service address serves the bundle's entry page; a `.js` suffix on
/// the address is accepted too.
async fn entry(State(engine): Shared, Path(name): Path<String>) -> Response {
    let name = name.strip_suffix(".js").unwrap_or(&name);
    match engine.entry_page(name) {
        Some(html) => Html(html).into_response(),
        None => api_error(ApiError::NotFound(format!("service {name}"))),
    }
}

fn finished_page(id: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head><meta charset=\"utf-8\"><title>Task completed</title></head>\n<body>\n<h1>Task completed</h1>\n<p>Task {} has already been handled. There is nothing left to do here.</p>\n</body>\n</html>\n",
        escape_text(id)
    )
}

async fn task_ui(State(engine): Shared, Path(id): Path<String>) -> Response {
    match engine.task_page(&id) {
        Ok(p) => Html(p.html).into_response(),
        Err(ApiError::Gone(_)) => (StatusCode::GONE, Html(finished_page(&id))).into_response(),
        Err(e) => api_error(e),
    }
}

async fn result(State(engine): Shared, Path(id): Path<String>, body: Bytes) -> Response {
    match engine.submit_result(&id, &body).await {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => api_error(e),
    }
}

async fn sync(State(engine): Shared, body: Bytes) -> Response {
    let batch: SyncBatch = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return api_error(ApiError::BadRequest(format!("malformed batch: {e}"))),
    };
    match engine.sync(&batch).await {
        Ok(r) => Json(r).into_response(),
        Err(e) => api_error(e),
    }
}

async fn metrics(State(engine): Shared) -> Response {
    Json(engine.metrics()).into_response()
}

async fn asset(State(engine): Shared, Path((name, asset)): Path<(String, String)>) -> Response {
    match engine.asset(&name, &asset) {
        Some((media, bytes)) => ([(header::CONTENT_TYPE, media)], bytes).into_response(),
        None => api_error(ApiError::NotFound(format!("asset {asset}"))),
    }
}

/// Serves `engine` on `listener` until `shutdown` resolves, running the
/// passivation sweep in the background.
pub async fn serve(engine: Arc<Engine>, listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    let addr = listener.local_addr()?;
    engine.set_base_url(&format!("http://{addr}"));
    let sweeper = {
        let engine = engine.clone();
        let period = Duration::from_secs_f64(engine.config().sweep_interval_s.max(0.01));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                engine.tick();
            }
        })
    };
    let r = axum::serve(listener, router(engine)).with_graceful_shutdown(shutdown).await;
    sweeper.abort();
    r
}
