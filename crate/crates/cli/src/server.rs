//! HTTP service for live episodes.
//!
//! Each episode steps on its own thread at a configurable multiple of real
//! time and publishes the latest [`Frame`] on a watch channel. Stream
//! consumers read frames at the sensing rate and never touch the episode.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::watch;

use semsafe_core::harness::{Episode, EpisodeError, EpisodeOptions, EpisodeRecord, Method};
use semsafe_core::language::{InstructionParser, ParseOutcome};
use semsafe_core::scenario::{load_manifest, Scenario};

use crate::frame::Frame;

pub const SCENARIOS_SCHEMA: &str = "semsafe.scenarios/1";
pub const EPISODE_HANDLE_SCHEMA: &str = "semsafe.episode_handle/1";
pub const PARSE_SCHEMA: &str = "semsafe.parse/1";
pub const ERROR_SCHEMA: &str = "semsafe.error/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub id: String,
    pub category: String,
    pub description: String,
    pub instructions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioList {
    pub schema: String,
    pub scenarios: Vec<ScenarioInfo>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartRequest {
    pub scenario: String,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Simulated seconds per wall-clock second.
    pub speed: Option<f64>,
    /// Deliver the scenario's scripted instructions.
    #[serde(default = "yes")]
    pub scripted: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeHandle {
    pub schema: String,
    pub id: u64,
    pub scenario: String,
    pub method: Method,
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRequest {
    pub text: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClarifyRequest {
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParseResponse {
    pub schema: String,
    pub episode: u64,
    pub t: f64,
    pub outcome: ParseOutcome,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Conflict(String),
    Invalid(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Conflict(m) => (StatusCode::CONFLICT, m),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (code, Json(json!({ "schema": ERROR_SCHEMA, "error": msg }))).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::Invalid(r.body_text())
    }
}

impl From<EpisodeError> for ApiError {
    fn from(e: EpisodeError) -> Self {
        ApiError::Conflict(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub speed: f64,
    /// Control ticks between published frames.
    pub frame_every: usize,
    pub options: EpisodeOptions,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { speed: 1.0, frame_every: 2, options: EpisodeOptions::default() }
    }
}

struct Session {
    id: u64,
    episode: Mutex<Episode>,
    frames: watch::Sender<Arc<Frame>>,
    seq: AtomicU64,
    stop: AtomicBool,
    record: Mutex<Option<EpisodeRecord>>,
}

impl Session {
    fn publish(&self, ep: &Episode) {
        let seq = self.seq.fetch_add(1, Ordering::SeqCst);
        self.frames.send_replace(Arc::new(Frame::capture(self.id, seq, ep)));
    }
}

pub struct AppState {
    scenarios: Vec<Arc<Scenario>>,
    sessions: RwLock<HashMap<u64, Arc<Session>>>,
    next_id: AtomicU64,
    parser: Arc<dyn InstructionParser>,
    config: ServerConfig,
}

impl AppState {
    pub fn new(scenarios: Vec<Arc<Scenario>>, parser: Arc<dyn InstructionParser>, config: ServerConfig) -> Self {
        Self { scenarios, sessions: RwLock::new(HashMap::new()), next_id: AtomicU64::new(1), parser, config }
    }

    /// Loads every scenario listed in a manifest.
    pub fn from_manifest(
        path: &Path,
        parser: Arc<dyn InstructionParser>,
        config: ServerConfig,
    ) -> semsafe_core::Result<Self> {
        let paths: Vec<PathBuf> = load_manifest(path)?;
        let scenarios =
            paths.iter().map(|p| Scenario::load(p).map(Arc::new)).collect::<semsafe_core::Result<Vec<_>>>()?;
        Ok(Self::new(scenarios, parser, config))
    }

    fn session(&self, id: u64) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown episode {id}")))
    }

    /// Stops every stepping thread.
    pub fn shutdown(&self) {
        for s in self.sessions.read().unwrap().values() {
            s.stop.store(true, Ordering::SeqCst);
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/episodes", post(start_episode))
        .route("/episodes/{id}", get(episode_record))
        .route("/episodes/{id}/instruction", post(post_instruction))
        .route("/episodes/{id}/clarify", post(post_clarify))
        .route("/episodes/{id}/stream", get(stream))
        .with_state(state)
}

async fn list_scenarios(State(st): State<Arc<AppState>>) -> Json<ScenarioList> {
    let scenarios = st
        .scenarios
        .iter()
        .map(|s| ScenarioInfo {
            id: s.id.clone(),
            category: s.category.clone(),
            description: s.description.clone(),
            instructions: s.instructions.iter().map(|e| e.text.clone()).collect(),
        })
        .collect();
    Json(ScenarioList { schema: SCENARIOS_SCHEMA.to_string(), scenarios })
}

fn run_session(session: Arc<Session>, speed: f64, frame_every: usize) {
    let dt = session.episode.lock().unwrap().scenario.dynamics.dt;
    let tick = if speed.is_finite() && speed > 0.0 { Duration::from_secs_f64(dt / speed) } else { Duration::ZERO };
    let mut deadline = Instant::now();
    let mut k = 0usize;
    loop {
        if session.stop.load(Ordering::SeqCst) {
            break;
        }
        {
            let mut ep = session.episode.lock().unwrap();
            let more = ep.step();
            k += 1;
            if !more {
                ep.run_to_end();
                let rec = ep.record();
                session.publish(&ep);
                *session.record.lock().unwrap() = Some(rec);
                break;
            }
            if k.is_multiple_of(frame_every.max(1)) {
                session.publish(&ep);
            }
        }
        deadline += tick;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else {
            deadline = now;
        }
    }
}

async fn start_episode(
    State(st): State<Arc<AppState>>,
    body: Result<Json<StartRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<EpisodeHandle>), ApiError> {
    let Json(req) = body?;
    if let Some(s) = req.speed {
        if !(s.is_finite() && s > 0.0) {
            return Err(ApiError::Invalid("speed must be positive".into()));
        }
    }
    let scenario = st
        .scenarios
        .iter()
        .find(|s| s.id == req.scenario)
        .cloned()
        .ok_or_else(|| ApiError::NotFound(format!("unknown scenario {}", req.scenario)))?;
    let id = st.next_id.fetch_add(1, Ordering::SeqCst);
    let mut ep = Episode::new(scenario, req.method, req.seed, st.config.options.clone(), st.parser.clone());
    if !req.scripted {
        ep.clear_script();
    }
    let (tx, _) = watch::channel(Arc::new(Frame::capture(id, 0, &ep)));
    let session = Arc::new(Session {
        id,
        episode: Mutex::new(ep),
        frames: tx,
        seq: AtomicU64::new(1),
        stop: AtomicBool::new(false),
        record: Mutex::new(None),
    });
    st.sessions.write().unwrap().insert(id, session.clone());
    let speed = req.speed.unwrap_or(st.config.speed);
    let frame_every = st.config.frame_every;
    std::thread::Builder::new()
        .name(format!("episode-{id}"))
        .spawn(move || run_session(session, speed, frame_every))
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let h = EpisodeHandle {
        schema: EPISODE_HANDLE_SCHEMA.to_string(),
        id,
        scenario: req.scenario,
        method: req.method,
        seed: req.seed,
    };
    Ok((StatusCode::CREATED, Json(h)))
}

async fn episode_record(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
) -> Result<Json<EpisodeRecord>, ApiError> {
    let s = st.session(id)?;
    let rec = s.record.lock().unwrap().clone();
    match rec {
        Some(r) => Ok(Json(r)),
        None => Ok(Json(s.episode.lock().unwrap().record())),
    }
}

async fn with_episode(
    st: Arc<AppState>,
    id: u64,
    f: impl FnOnce(&mut Episode) -> Result<ParseOutcome, EpisodeError> + Send + 'static,
) -> Result<Json<ParseResponse>, ApiError> {
    let s = st.session(id)?;
    // parsers may block on the network
    tokio::task::spawn_blocking(move || {
        let mut ep = s.episode.lock().unwrap();
        let outcome = f(&mut ep)?;
        s.publish(&ep);
        Ok(Json(ParseResponse { schema: PARSE_SCHEMA.to_string(), episode: id, t: ep.time(), outcome }))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn post_instruction(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    body: Result<Json<InstructionRequest>, JsonRejection>,
) -> Result<Json<ParseResponse>, ApiError> {
    st.session(id)?;
    let Json(req) = body?;
    if req.text.trim().is_empty() {
        return Err(ApiError::Invalid("text must be nonempty".into()));
    }
    with_episode(st, id, move |ep| ep.submit_instruction(&req.text)).await
}

async fn post_clarify(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    body: Result<Json<ClarifyRequest>, JsonRejection>,
) -> Result<Json<ParseResponse>, ApiError> {
    st.session(id)?;
    let Json(req) = body?;
    if req.answer.trim().is_empty() {
        return Err(ApiError::Invalid("answer must be nonempty".into()));
    }
    with_episode(st, id, move |ep| ep.clarify(&req.answer)).await
}

async fn stream(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let s = st.session(id)?;
    let rx = s.frames.subscribe();
    // (receiver, first, finished)
    let events = stream::unfold((rx, true, false), |(mut rx, first, finished)| async move {
        if finished {
            return None;
        }
        if !first && rx.changed().await.is_err() {
            return None;
        }
        let frame = rx.borrow_and_update().clone();
        let ev =
            Event::default().event("frame").id(frame.seq.to_string()).json_data(&*frame).expect("frame serializes");
        Some((Ok(ev), (rx, false, frame.done)))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}
