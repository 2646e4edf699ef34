//! HTTP service that lets a person drive an episode step by step.
//!
//! Sessions reuse [`EpisodeState`], so a human run produces the same
//! trajectory records and metrics as an automated one. Responses never
//! carry the goal, the ground-truth path, node ids or coordinates.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path as UrlPath, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tower_http::cors::{Any, CorsLayer};

use crate::bench::Task;
use crate::episode::{Decision, Env, EpisodeConfig, EpisodeState, Phase, Status, Termination, Trajectory};
use crate::graph::{bfs_to, NavGraph};
use crate::metrics::{evaluate, EpisodeMetrics};
use crate::runner::log_lines;
use crate::synth::ObservationTable;

pub const SESSION_TTL: Duration = Duration::from_secs(60 * 60);
pub const SNAPSHOT_EVERY: Duration = Duration::from_secs(30);
const SNAPSHOT_FILE: &str = "sessions.json";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Where session snapshots and finished logs go; nothing is persisted
    /// when unset.
    pub data_dir: Option<PathBuf>,
    pub ttl: Duration,
    pub snapshot_every: Duration,
    pub max_steps: usize,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            ttl: SESSION_TTL,
            snapshot_every: SNAPSHOT_EVERY,
            max_steps: crate::episode::DEFAULT_MAX_STEPS,
            cors_origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub task: String,
    pub state: EpisodeState,
    pub config: EpisodeConfig,
    pub created_ms: u64,
    pub updated_ms: u64,
}

type SessionMap = HashMap<String, Arc<Mutex<Session>>>;

pub struct AppState {
    graph: NavGraph,
    tasks: Vec<Task>,
    task_index: HashMap<String, usize>,
    observations: Option<ObservationTable>,
    sessions: Mutex<SessionMap>,
    cfg: ServiceConfig,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// Build the shared state, resuming sessions from the snapshot in
    /// `cfg.data_dir` when one exists.
    pub fn new(graph: NavGraph, tasks: Vec<Task>, observations: Option<ObservationTable>, cfg: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let task_index = tasks.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();
        let mut sessions = SessionMap::new();
        if let Some(dir) = &cfg.data_dir {
            let path = dir.join(SNAPSHOT_FILE);
            if path.is_file() {
                let list: Vec<Session> = serde_json::from_slice(&std::fs::read(&path)?)?;
                for s in list {
                    sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
            }
        }
        Ok(Arc::new(Self {
            graph,
            tasks,
            task_index,
            observations,
            sessions: Mutex::new(sessions),
            cfg,
        }))
    }

    fn task(&self, id: &str) -> Option<&Task> {
        self.task_index.get(id).map(|&i| &self.tasks[i])
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    /// Write all sessions to the snapshot file.
    pub fn snapshot(&self) -> std::io::Result<()> {
        let Some(dir) = &self.cfg.data_dir else {
            return Ok(());
        };
        let handles: Vec<Arc<Mutex<Session>>> = self.sessions.lock().expect("session map lock").values().cloned().collect();
        let mut list: Vec<Session> = handles.iter().map(|s| s.lock().expect("session lock").clone()).collect();
        list.sort_by(|a, b| a.id.cmp(&b.id));
        std::fs::create_dir_all(dir)?;
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        std::fs::write(&tmp, serde_json::to_vec_pretty(&list)?)?;
        std::fs::rename(tmp, dir.join(SNAPSHOT_FILE))
    }

    /// Drop sessions idle for longer than the TTL; returns how many.
    pub fn expire(&self, now_ms: u64) -> usize {
        let ttl = self.cfg.ttl.as_millis() as u64;
        let mut map = self.sessions.lock().expect("session map lock");
        let before = map.len();
        map.retain(|_, s| now_ms.saturating_sub(s.lock().expect("session lock").updated_ms) <= ttl);
        before - map.len()
    }

    fn persist_log(&self, s: &Session, traj: &Trajectory) {
        if let Some(dir) = &self.cfg.data_dir {
            let path = dir.join("logs").join(format!("{}.jsonl", s.id));
            let res = std::fs::create_dir_all(dir.join("logs"))
                .and_then(|_| std::fs::write(&path, log_lines(std::slice::from_ref(traj), "human", "none")));
            if let Err(e) = res {
                tracing::warn!(error = %e, path = %path.display(), "could not write session log");
            }
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(m: String) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: m,
        }
    }
    fn bad_request(m: String) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: m,
        }
    }
    fn conflict(m: String) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            message: m,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Active => "active",
        Status::Done(Termination::Stopped) => "stopped",
        Status::Done(Termination::StepCap) => "capped",
        Status::Done(Termination::Error) => "error",
    }
}

/// Stable per-session token for the current position that does not reveal
/// the node id.
fn viewpoint_token(session: &str, node: &str) -> String {
    let h = Sha256::digest(format!("{session}\u{0}{node}").as_bytes());
    h.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn view(app: &AppState, s: &Session) -> Value {
    let task = app.task(&s.task);
    let st = &s.state;
    let mut out = json!({
        "session_id": s.id,
        "status": status_word(st.status),
        "instruction": task.map(|t| t.instruction.clone()).unwrap_or_default(),
        "steps_taken": st.moves,
        "steps_remaining": st.remaining(),
    });
    if st.is_active() {
        let env = match &app.observations {
            Some(t) => Env::with_observations(&app.graph, t),
            None => Env::new(&app.graph),
        };
        let v = st.node_idx(&app.graph);
        let persp: Vec<Value> = st
            .perspectives(&app.graph)
            .iter()
            .map(|p| {
                let o = env.observe(v, p.heading);
                let mut e = json!({
                    "action": p.index,
                    "direction": p.direction,
                    "heading": p.heading,
                    "observation": o.text,
                });
                if let Some(img) = o.image {
                    e["image"] = Value::String(img);
                }
                e
            })
            .collect();
        out["viewpoint"] = Value::String(viewpoint_token(&s.id, &st.node));
        out["perspectives"] = Value::Array(persp);
    }
    out
}

#[derive(Deserialize)]
struct CreateBody {
    task_id: String,
}

async fn list_tasks(State(app): State<Arc<AppState>>) -> Json<Value> {
    let list: Vec<Value> = app
        .tasks
        .iter()
        .map(|t| json!({"id": t.id, "instruction": t.instruction, "category": t.category}))
        .collect();
    Json(Value::Array(list))
}

fn new_id() -> String {
    let mut b = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut b);
    b.iter().map(|x| format!("{x:02x}")).collect()
}

async fn create_session(State(app): State<Arc<AppState>>, body: Option<Json<Value>>) -> ApiResult<(StatusCode, Json<Value>)> {
    let body: CreateBody = body
        .and_then(|Json(v)| serde_json::from_value(v).ok())
        .ok_or_else(|| ApiError::bad_request("body must be {\"task_id\": string}".into()))?;
    let task = app
        .task(&body.task_id)
        .ok_or_else(|| ApiError::not_found(format!("unknown task `{}`", body.task_id)))?;
    let config = EpisodeConfig {
        max_steps: app.cfg.max_steps,
        ..EpisodeConfig::default()
    };
    let state = EpisodeState::new(&app.graph, task, &config).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let now = now_ms();
    let s = Session {
        id: new_id(),
        task: task.id.clone(),
        state,
        config,
        created_ms: now,
        updated_ms: now,
    };
    let out = view(&app, &s);
    app.sessions
        .lock()
        .expect("session map lock")
        .insert(s.id.clone(), Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_state(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let s = app.session(&id)?;
    let s = s.lock().expect("session lock");
    Ok(Json(view(&app, &s)))
}

enum Action {
    Stop,
    Move(i64),
}

fn parse_action(v: &Value) -> Option<Action> {
    match v.get("action")? {
        Value::Number(n) => n.as_i64().map(Action::Move),
        Value::String(s) if s.eq_ignore_ascii_case("stop") => Some(Action::Stop),
        Value::String(s) => s.trim().parse().ok().map(Action::Move),
        _ => None,
    }
}

fn act(app: &AppState, id: &str, action: Action) -> ApiResult<Value> {
    let handle = app.session(id)?;
    let mut s = handle.lock().expect("session lock");
    if !s.state.is_active() {
        return Err(ApiError::conflict(format!("session is {}", status_word(s.state.status))));
    }
    let task = app
        .task(&s.task)
        .ok_or_else(|| ApiError::not_found(format!("task `{}` is no longer served", s.task)))?;
    let g = &app.graph;
    let goal = g.require(&task.goal).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let d = bfs_to(g, goal)[s.state.node_idx(g).index()];
    let human = |phase, action| Decision::new(phase, action, 1.0, "human");
    match action {
        Action::Stop => s.state.apply_stop(d, human(Phase::Stop, -1), 0.0),
        Action::Move(i) => {
            let n = s.state.perspectives(g).len();
            if i < 0 || i as usize >= n {
                return Err(ApiError::bad_request(format!("action {i} outside 0..{n}")));
            }
            s.state
                .apply_move(g, d, human(Phase::Stop, 0), human(Phase::Choice, i), 0.0)
                .map_err(|e| ApiError::bad_request(e.to_string()))?;
        }
    }
    s.updated_ms = now_ms();
    if !s.state.is_active() {
        let traj = s.state.clone().into_trajectory(&s.config);
        app.persist_log(&s, &traj);
    }
    Ok(view(app, &s))
}

async fn post_action(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<Value>>,
) -> ApiResult<Json<Value>> {
    let action = body
        .as_ref()
        .and_then(|Json(v)| parse_action(v))
        .ok_or_else(|| ApiError::bad_request("body must be {\"action\": index | \"stop\"}".into()))?;
    // validate the session before the body so unknown ids are 404
    app.session(&id)?;
    act(&app, &id, action).map(Json)
}

async fn post_stop(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    act(&app, &id, Action::Stop).map(Json)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub metrics: EpisodeMetrics,
    pub trajectory: Trajectory,
}

async fn get_report(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<SessionReport>> {
    let handle = app.session(&id)?;
    let s = handle.lock().expect("session lock").clone();
    if s.state.is_active() {
        return Err(ApiError::conflict("session is still active".into()));
    }
    let task = app
        .task(&s.task)
        .ok_or_else(|| ApiError::not_found(format!("task `{}` is no longer served", s.task)))?;
    let trajectory = s.state.into_trajectory(&s.config);
    let metrics = evaluate(&app.graph, &trajectory, task).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(SessionReport {
        session_id: s.id,
        metrics,
        trajectory,
    }))
}

pub fn router(app: Arc<AppState>) -> Router {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match app.cfg.cors_origin.as_deref().and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(origin) => cors.allow_origin(origin),
        None => cors.allow_origin(Any),
    };
    Router::new()
        .route("/tasks", get(list_tasks))
        .route("/sessions", post(create_session))
        .route("/sessions/:id/state", get(get_state))
        .route("/sessions/:id/action", post(post_action))
        .route("/sessions/:id/stop", post(post_stop))
        .route("/sessions/:id/report", get(get_report))
        .layer(cors)
        .with_state(app)
}

/// Periodic snapshot and expiry loop.
pub async fn maintenance(app: Arc<AppState>) {
    let mut tick = tokio::time::interval(app.cfg.snapshot_every);
    tick.tick().await;
    loop {
        tick.tick().await;
        let app = app.clone();
        let res = tokio::task::spawn_blocking(move || {
            let expired = app.expire(now_ms());
            app.snapshot().map(|_| expired)
        })
        .await;
        match res {
            Ok(Ok(n)) if n > 0 => tracing::info!(expired = n, "expired idle sessions"),
            Ok(Err(e)) => tracing::warn!(error = %e, "session snapshot failed"),
            _ => {}
        }
    }
}

/// Serve until `shutdown` resolves, then write a final snapshot.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let bg = tokio::spawn(maintenance(app.clone()));
    let res = axum::serve(listener, router(app.clone())).with_graceful_shutdown(shutdown).await;
    bg.abort();
    app.snapshot()?;
    res
}

/// A server running on its own thread and runtime.
pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl RunningServer {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_inner()
    }

    fn stop_inner(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.stop_inner();
    }
}

/// Bind `addr` and serve on a background thread.
pub fn spawn_server(app: Arc<AppState>, addr: SocketAddr) -> std::io::Result<RunningServer> {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(serve(listener, app, async {
            let _ = rx.await;
        }))
    });
    Ok(RunningServer {
        addr,
        stop: Some(tx),
        thread: Some(thread),
    })
}

/// Load graph, tasks and optional observations from files.
pub fn load_state(graph: &Path, tasks: &Path, observations: Option<&Path>, cfg: ServiceConfig) -> Result<Arc<AppState>, crate::error::RunError> {
    let g = crate::graph::load_graph(graph)?;
    let t = crate::bench::TaskFile::read(tasks)?.tasks;
    let o = observations.map(ObservationTable::read).transpose()?;
    let dir = cfg.data_dir.clone().unwrap_or_default();
    AppState::new(g, t, o, cfg).map_err(|e| crate::error::RunError::io(dir, e))
}
