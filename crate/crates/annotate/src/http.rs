//! axum routes over [`Service`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{ExportKind, RejectCode, Rejection, Service};

impl RejectCode {
    fn status(self) -> StatusCode {
        match self {
            RejectCode::UnknownAnnotator => StatusCode::UNAUTHORIZED,
            RejectCode::NoOpenTask | RejectCode::NotFound => StatusCode::NOT_FOUND,
            RejectCode::Duplicate => StatusCode::CONFLICT,
            RejectCode::NotAssigned => StatusCode::FORBIDDEN,
            RejectCode::Storage => StatusCode::INTERNAL_SERVER_ERROR,
            RejectCode::ReplayLimit
            | RejectCode::Malformed
            | RejectCode::MissingCandidate
            | RejectCode::UnknownCandidate
            | RejectCode::InvalidTies => StatusCode::UNPROCESSABLE_ENTITY,
        }
    }
}

#[derive(Serialize)]
struct Refused<'a> {
    accepted: bool,
    code: RejectCode,
    reason: &'a str,
}

impl IntoResponse for Rejection {
    fn into_response(self) -> Response {
        let body = Refused { accepted: false, code: self.code, reason: &self.reason };
        (self.code.status(), Json(body)).into_response()
    }
}

#[derive(Serialize)]
struct Accepted {
    accepted: bool,
}

const ACCEPTED: Accepted = Accepted { accepted: true };

#[derive(Deserialize)]
struct WhoQuery {
    annotator: String,
    #[serde(default)]
    after: Option<String>,
}

fn parse_body<T: DeserializeOwned>(body: &str) -> Result<T, Rejection> {
    serde_json::from_str(body).map_err(|e| Rejection {
        code: RejectCode::Malformed,
        reason: e.to_string(),
    })
}

/// Blocking work (file appends, decoding) runs off the reactor.
async fn blocking<T, F>(f: F) -> Result<T, Rejection>
where
    F: FnOnce() -> Result<T, Rejection> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| {
        Err(Rejection { code: RejectCode::Storage, reason: e.to_string() })
    })
}

async fn session(State(svc): State<Arc<Service>>, Query(q): Query<WhoQuery>) -> Response {
    blocking(move || svc.session(&q.annotator)).await.map(Json).into_response()
}

async fn direction_next(State(svc): State<Arc<Service>>, Query(q): Query<WhoQuery>) -> Response {
    svc.next_direction(&q.annotator, q.after.as_deref()).map(Json).into_response()
}

async fn direction_judgment(State(svc): State<Arc<Service>>, body: String) -> Response {
    blocking(move || svc.submit_direction(parse_body(&body)?))
        .await
        .map(|_| Json(ACCEPTED))
        .into_response()
}

async fn ranking_next(State(svc): State<Arc<Service>>, Query(q): Query<WhoQuery>) -> Response {
    svc.next_ranking(&q.annotator).map(Json).into_response()
}

async fn ranking_submit(State(svc): State<Arc<Service>>, body: String) -> Response {
    blocking(move || svc.submit_ranking(parse_body(&body)?))
        .await
        .map(|_| Json(ACCEPTED))
        .into_response()
}

async fn export(State(svc): State<Arc<Service>>, Path(kind): Path<String>) -> Response {
    match kind.parse::<ExportKind>() {
        Ok(k) => ([(header::CONTENT_TYPE, "application/x-ndjson")], svc.export(k)).into_response(),
        Err(reason) => Rejection { code: RejectCode::NotFound, reason }.into_response(),
    }
}

async fn clip(State(svc): State<Arc<Service>>, Path(token): Path<String>) -> Response {
    blocking(move || svc.clip(&token)).await.map(Json).into_response()
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/api/session", get(session))
        .route("/api/direction/next", get(direction_next))
        .route("/api/direction/judgment", post(direction_judgment))
        .route("/api/ranking/next", get(ranking_next))
        .route("/api/ranking", post(ranking_submit))
        .route("/api/export/{kind}", get(export))
        .route("/clips/{token}", get(clip))
        .with_state(service)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, service: Arc<Service>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("annotation service listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service)).await
}
