//! REST routes, per-session runner tasks and the live stream.

use std::collections::HashMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event as SseEvent, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{watch, Notify};
use tokio::time::Instant;

use evtwin_core::config::{ScenarioConfig, Violation};
use evtwin_core::sim::resolve_site;
use evtwin_core::site::SiteGraph;
use evtwin_core::weather::resolve_weather;

use crate::session::{Command, EventPage, LoggedCommand, Mode, Session, SessionError};
use crate::snapshot::{Delta, Snapshot, PAYLOAD_SCHEMA_VERSION};

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Sessions with no requests and no subscribers for this long are dropped.
    pub idle_timeout: Duration,
    /// Minimum spacing between stream messages.
    pub min_frame_interval: Duration,
    /// Heartbeat period on a stream that has nothing new to send.
    pub heartbeat: Duration,
    /// Directory that relative weather and site paths resolve against.
    pub base_dir: Option<PathBuf>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            idle_timeout: Duration::from_secs(30 * 60),
            min_frame_interval: Duration::from_millis(100),
            heartbeat: Duration::from_secs(5),
            base_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Frame {
    Snapshot(Arc<Snapshot>),
    End,
}

struct Handle {
    id: String,
    session: Mutex<Session>,
    frames: watch::Sender<Frame>,
    subscribers: AtomicUsize,
    last_activity: Mutex<Instant>,
    wake: Notify,
}

impl Handle {
    fn touch(&self) {
        *self.last_activity.lock().unwrap() = Instant::now();
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn publish(&self, s: &Session) {
        self.frames.send_replace(Frame::Snapshot(s.snapshot()));
    }

    fn status(&self) -> Status {
        let s = self.lock();
        let snap = s.snapshot();
        Status {
            schema_version: PAYLOAD_SCHEMA_VERSION,
            id: self.id.clone(),
            mode: s.mode(),
            tick: s.tick(),
            day: snap.day,
            sim_time: snap.sim_time.clone(),
            finished: s.is_finished(),
            subscribers: self.subscribers.load(Ordering::SeqCst),
            log_length: s.log().len(),
            event_count: snap.event_seq,
            scenario_hash: s.config().scenario_hash(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Status {
    pub schema_version: u32,
    pub id: String,
    pub mode: Mode,
    pub tick: u64,
    pub day: u32,
    pub sim_time: String,
    pub finished: bool,
    pub subscribers: usize,
    pub log_length: usize,
    pub event_count: u64,
    pub scenario_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    pub tick: u64,
    pub commands: Vec<LoggedCommand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub tick: u64,
    pub hash: String,
    pub replay_hash: String,
    /// Every per-tick hash of the replay equals the live one.
    pub matches: bool,
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Arc<Handle>>>>,
    opts: Arc<ServerOptions>,
}

impl AppState {
    pub fn new(opts: ServerOptions) -> Self {
        Self { sessions: Arc::default(), opts: Arc::new(opts) }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn get(&self, id: &str) -> Result<Arc<Handle>, ApiError> {
        let h = self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found(id))?;
        h.touch();
        Ok(h)
    }

    fn remove(&self, id: &str) -> Option<Arc<Handle>> {
        let h = self.sessions.lock().unwrap().remove(id)?;
        h.frames.send_replace(Frame::End);
        h.wake.notify_one();
        Some(h)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    violations: Vec<Violation>,
}

impl ApiError {
    fn bad_request(message: impl Into<String>, violations: Vec<Violation>) -> Self {
        Self { status: StatusCode::BAD_REQUEST, message: message.into(), violations }
    }

    fn not_found(id: &str) -> Self {
        Self { status: StatusCode::NOT_FOUND, message: format!("no session {id:?}"), violations: Vec::new() }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError::bad_request(e.to_string(), e.violations())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "violations": self.violations }))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/site", get(site))
        .route("/api/sessions", post(create).get(list))
        .route("/api/sessions/{id}", get(status).delete(delete))
        .route("/api/sessions/{id}/snapshot", get(snapshot))
        .route("/api/sessions/{id}/control", post(control))
        .route("/api/sessions/{id}/events", get(events))
        .route("/api/sessions/{id}/log", get(log))
        .route("/api/sessions/{id}/verify", get(verify))
        .route("/api/sessions/{id}/stream", get(stream))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, opts: ServerOptions) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(AppState::new(opts))).await
}

async fn site(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let cfg = ScenarioConfig::campus_baseline();
    let g = resolve_site(&cfg, state.opts.base_dir.as_deref())
        .map_err(|e| ApiError::bad_request(e.to_string(), Vec::new()))?;
    Ok(Json(g.geojson().clone()))
}

/// The body is a scenario document; an empty body means the campus baseline.
async fn create(State(state): State<AppState>, body: String) -> Result<(StatusCode, Json<Status>), ApiError> {
    let cfg = if body.trim().is_empty() {
        ScenarioConfig::campus_baseline()
    } else {
        ScenarioConfig::from_json_str(&body).map_err(|e| ApiError::bad_request(e.to_string(), e.violations().to_vec()))?
    };
    let base = state.opts.base_dir.clone();
    let built = tokio::task::spawn_blocking(move || -> Result<Session, ApiError> {
        let weather = resolve_weather(&cfg.weather_ref, base.as_deref(), cfg.horizon_days as usize)
            .map_err(|e| ApiError::bad_request(e.to_string(), vec![field("weather_ref", &e)]))?;
        let site: SiteGraph = resolve_site(&cfg, base.as_deref())
            .map_err(|e| ApiError::bad_request(e.to_string(), vec![field("site_ref", &e)]))?;
        Ok(Session::new(cfg, Arc::new(weather), Arc::new(site))?)
    })
    .await
    .expect("session construction does not panic")?;

    let id = uuid::Uuid::new_v4().to_string();
    let (frames, _) = watch::channel(Frame::Snapshot(built.snapshot()));
    let handle = Arc::new(Handle {
        id: id.clone(),
        session: Mutex::new(built),
        frames,
        subscribers: AtomicUsize::new(0),
        last_activity: Mutex::new(Instant::now()),
        wake: Notify::new(),
    });
    state.sessions.lock().unwrap().insert(id, handle.clone());
    tokio::spawn(run_session(state.clone(), handle.clone()));
    Ok((StatusCode::CREATED, Json(handle.status())))
}

fn field(name: &str, e: &dyn std::fmt::Display) -> Violation {
    Violation { field: name.to_string(), message: e.to_string() }
}

/// Ticks a running session at its speed and drops it once idle.
async fn run_session(state: AppState, h: Arc<Handle>) {
    let idle_check = state.opts.idle_timeout.min(Duration::from_secs(1));
    loop {
        if !state.sessions.lock().unwrap().contains_key(&h.id) {
            return;
        }
        let idle = *h.last_activity.lock().unwrap();
        if h.subscribers.load(Ordering::SeqCst) == 0 && idle.elapsed() >= state.opts.idle_timeout {
            state.remove(&h.id);
            return;
        }
        let mode = h.lock().mode();
        match mode {
            Mode::Paused => {
                let _ = tokio::time::timeout(idle_check, h.wake.notified()).await;
            }
            Mode::Running { speed } => {
                tokio::time::sleep(Duration::from_secs_f64(1.0 / f64::from(speed))).await;
                let mut s = h.lock();
                if matches!(s.mode(), Mode::Running { .. }) {
                    s.advance();
                    h.publish(&s);
                }
            }
        }
    }
}

async fn list(State(state): State<AppState>) -> Json<Vec<Status>> {
    let handles: Vec<Arc<Handle>> = state.sessions.lock().unwrap().values().cloned().collect();
    let mut out: Vec<Status> = handles.iter().map(|h| h.status()).collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Json(out)
}

async fn status(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Status>, ApiError> {
    Ok(Json(state.get(&id)?.status()))
}

async fn delete(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.remove(&id).map(|_| StatusCode::NO_CONTENT).ok_or_else(|| ApiError::not_found(&id))
}

async fn snapshot(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Snapshot>, ApiError> {
    let h = state.get(&id)?;
    let snap = h.lock().snapshot();
    Ok(Json((*snap).clone()))
}

async fn control(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> Result<Json<crate::session::Ack>, ApiError> {
    let h = state.get(&id)?;
    let command: Command = serde_json::from_str(&body)
        .map_err(|e| ApiError::bad_request(format!("bad command: {e}"), vec![field("type", &e)]))?;
    let worker = h.clone();
    let ack = tokio::task::spawn_blocking(move || {
        let mut s = worker.lock();
        let ack = s.control(command);
        worker.publish(&s);
        ack
    })
    .await
    .expect("control does not panic")?;
    h.wake.notify_one();
    Ok(Json(ack))
}

#[derive(Debug, Deserialize)]
struct EventQuery {
    since: Option<u64>,
    limit: Option<usize>,
}

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventQuery>,
) -> Result<Json<EventPage>, ApiError> {
    let h = state.get(&id)?;
    let page = h.lock().events_since(q.since.unwrap_or(0), q.limit.unwrap_or(1000).min(10_000));
    Ok(Json(page))
}

async fn log(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionLog>, ApiError> {
    let h = state.get(&id)?;
    let s = h.lock();
    Ok(Json(SessionLog {
        schema_version: PAYLOAD_SCHEMA_VERSION,
        scenario: s.config().clone(),
        tick: s.tick(),
        commands: s.log().to_vec(),
    }))
}

async fn verify(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Verification>, ApiError> {
    let h = state.get(&id)?;
    let (cfg, weather, site, log, tick, hashes) = {
        let s = h.lock();
        (s.config().clone(), s.world().weather().clone(), s.world().site().clone(), s.log().to_vec(), s.tick(), s.hashes().to_vec())
    };
    let replay = tokio::task::spawn_blocking(move || Session::replay(cfg, weather, site, &log, tick))
        .await
        .expect("replay does not panic")?;
    Ok(Json(Verification {
        tick,
        hash: hashes.last().cloned().unwrap_or_default(),
        replay_hash: replay.hashes().last().cloned().unwrap_or_default(),
        matches: replay.hashes() == hashes.as_slice(),
    }))
}

struct Subscription {
    handle: Arc<Handle>,
}

impl Subscription {
    fn new(handle: Arc<Handle>) -> Self {
        handle.subscribers.fetch_add(1, Ordering::SeqCst);
        Self { handle }
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.handle.subscribers.fetch_sub(1, Ordering::SeqCst);
        self.handle.touch();
    }
}

struct StreamState {
    rx: watch::Receiver<Frame>,
    last: Option<Arc<Snapshot>>,
    last_sent: Instant,
    done: bool,
    opts: Arc<ServerOptions>,
    _sub: Subscription,
}

fn sse_json(name: &str, value: &impl Serialize) -> SseEvent {
    SseEvent::default().event(name).data(serde_json::to_string(value).expect("payload serializes"))
}

/// First message is always a full snapshot; later ones are deltas against
/// what this subscriber last saw, at most one per `min_frame_interval`.
async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>, ApiError> {
    let h = state.get(&id)?;
    let mut rx = h.frames.subscribe();
    rx.mark_changed();
    let init = StreamState {
        rx,
        last: None,
        last_sent: Instant::now(),
        done: false,
        opts: state.opts.clone(),
        _sub: Subscription::new(h),
    };
    let events = stream::unfold(init, |mut st| async move {
        if st.done {
            return None;
        }
        if st.last.is_some() {
            let wait = st.opts.min_frame_interval.saturating_sub(st.last_sent.elapsed());
            tokio::time::sleep(wait).await;
        }
        let changed = tokio::time::timeout(st.opts.heartbeat, st.rx.changed()).await;
        let frame = match changed {
            Err(_) => {
                let tick = st.last.as_ref().map_or(0, |s| s.tick);
                return Some((Ok(sse_json("heartbeat", &json!({ "tick": tick }))), st));
            }
            Ok(Err(_)) => Frame::End,
            Ok(Ok(())) => st.rx.borrow_and_update().clone(),
        };
        st.last_sent = Instant::now();
        let event = match frame {
            Frame::End => {
                st.done = true;
                sse_json("end", &json!({ "reason": "session closed" }))
            }
            Frame::Snapshot(next) => {
                let ev = match &st.last {
                    None => sse_json("snapshot", &*next),
                    Some(prev) => sse_json("delta", &Delta::between(prev, &next)),
                };
                st.last = Some(next);
                ev
            }
        };
        Some((Ok(event), st))
    });
    Ok(Sse::new(events))
}
