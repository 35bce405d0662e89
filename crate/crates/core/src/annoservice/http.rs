use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::aggregate::aggregate;
use super::model::{PairInput, SessionSpec, VoteRecord};
use super::session::{create_session, SessionState};
use crate::error::{Error, Result};

pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0))
}

/// Shared service state; one lock guards every session.
pub struct Service {
    log_dir: PathBuf,
    asset_root: PathBuf,
    clock: Clock,
    sessions: Mutex<HashMap<String, SessionState>>,
}

impl Service {
    pub fn new(log_dir: impl Into<PathBuf>, asset_root: impl Into<PathBuf>, clock: Clock) -> Self {
        Self {
            log_dir: log_dir.into(),
            asset_root: asset_root.into(),
            clock,
            sessions: Mutex::new(HashMap::new()),
        }
    }

    fn asset_path(&self, rel: &str) -> Option<PathBuf> {
        let p = Path::new(rel);
        if p.components().all(|c| matches!(c, Component::Normal(_))) {
            Some(self.asset_root.join(p))
        } else {
            None
        }
    }

    pub fn log_path(&self, session_id: &str) -> PathBuf {
        self.log_dir.join(format!("{session_id}.jsonl"))
    }

    /// Creates (or resumes) a session and returns its task count and exclusions.
    pub fn create(&self, spec: SessionSpec, pairs: &[PairInput]) -> Result<(usize, Vec<String>)> {
        let id = spec.session_id.clone();
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return Err(Error::Config(format!("bad session id {id:?}")));
        }
        let session = create_session(spec, pairs, |rel| self.asset_path(rel).is_some_and(|p| p.is_file()))?;
        let out = (session.tasks.len(), session.excluded.clone());
        let state = SessionState::open(session, &self.log_path(&id))?;
        self.sessions.lock().expect("session lock").insert(id, state);
        Ok(out)
    }
}

#[derive(Deserialize)]
struct CreateBody {
    spec: SessionSpec,
    pairs: Vec<PairInput>,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    tasks: usize,
    excluded: Vec<String>,
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

async fn create(State(svc): State<Arc<Service>>, Json(body): Json<CreateBody>) -> Response {
    let id = body.spec.session_id.clone();
    match svc.create(body.spec, &body.pairs) {
        Ok((tasks, excluded)) => (StatusCode::CREATED, Json(Created { session_id: id, tasks, excluded })).into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, e),
    }
}

async fn next(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>, Query(q): Query<NextQuery>) -> Response {
    let now = (svc.clock)();
    let mut sessions = svc.sessions.lock().expect("session lock");
    let Some(state) = sessions.get_mut(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown_session");
    };
    match state.next_task(&q.annotator, now) {
        Some(task) => Json(task.view()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn vote(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>, Json(v): Json<VoteRecord>) -> Response {
    let now = (svc.clock)();
    let mut sessions = svc.sessions.lock().expect("session lock");
    let Some(state) = sessions.get_mut(&id) else {
        return error(StatusCode::NOT_FOUND, "unknown_session");
    };
    match state.submit(v, now) {
        Ok(Ok(accepted)) => Json(json!({ "accepted": accepted })).into_response(),
        Ok(Err(rejection)) => error(StatusCode::UNPROCESSABLE_ENTITY, rejection),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn results(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> Response {
    let sessions = svc.sessions.lock().expect("session lock");
    match sessions.get(&id) {
        Some(state) => Json(aggregate(&state.session, state.votes())).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown_session"),
    }
}

async fn asset(State(svc): State<Arc<Service>>, UrlPath(rel): UrlPath<String>) -> Response {
    let Some(path) = svc.asset_path(&rel) else {
        return error(StatusCode::BAD_REQUEST, "bad_path");
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => {
            let mime = match path.extension().and_then(|e| e.to_str()) {
                Some("png") => "image/png",
                Some("gif") => "image/gif",
                Some("json") => "application/json",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, mime)], bytes).into_response()
        }
        Err(_) => error(StatusCode::NOT_FOUND, "missing_asset"),
    }
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/votes", post(vote))
        .route("/sessions/{id}/aggregate", get(results))
        .route("/assets/{*path}", get(asset))
        .with_state(svc)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, svc: Arc<Service>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("annotation service on {}", listener.local_addr().map_err(|e| Error::io("listener", e))?);
    axum::serve(listener, router(svc))
        .await
        .map_err(|e| Error::io(addr.to_string(), e))
}
