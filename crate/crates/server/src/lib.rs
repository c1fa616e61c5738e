//! HTTP facade over a live run.
//!
//! One kernel thread owns the [`Kernel`] and is the only writer. Handlers send
//! it commands over a channel and read the immutable views it publishes after
//! every change, so read endpoints never reach the kernel at all.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use evolvesim_core::simkernel::{Command, CommandOutcome, Kernel, KernelError, LogRecord};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{oneshot, watch};

/// Pacing of unattended stepping after `POST /run/resume`.
#[derive(Debug, Clone, Copy)]
pub struct ServerOptions {
    pub tick_delay: Duration,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { tick_delay: Duration::from_millis(250) }
    }
}

/// What the kernel thread last published.
#[derive(Debug, Default)]
struct Published {
    snapshot: Value,
    agents: BTreeMap<String, Value>,
    records: Vec<LogRecord>,
    /// Set when unattended stepping hit an error and stopped.
    halted: Option<String>,
}

impl Published {
    fn since(&self, seq: u64) -> &[LogRecord] {
        let i = self.records.partition_point(|r| r.seq < seq);
        &self.records[i..]
    }
}

struct Job {
    command: Command,
    reply: oneshot::Sender<Result<CommandOutcome, KernelError>>,
}

/// Cheap to clone; shared by every handler.
#[derive(Clone)]
pub struct AppState {
    jobs: mpsc::Sender<Job>,
    published: Arc<RwLock<Published>>,
    /// Next sequence number not yet published.
    head: watch::Receiver<u64>,
}

impl AppState {
    /// Moves `kernel` onto its own thread and returns the handle handlers use.
    /// The thread exits once every handle is dropped.
    pub fn spawn(kernel: Kernel, options: ServerOptions) -> (Self, thread::JoinHandle<Kernel>) {
        let (jobs, rx) = mpsc::channel();
        let published = Arc::new(RwLock::new(Published::default()));
        let (head_tx, head) = watch::channel(0);
        let sent = publish(&kernel, &published, &head_tx, 0, None);
        let shared = Arc::clone(&published);
        let handle = thread::Builder::new()
            .name("kernel".into())
            .spawn(move || kernel_loop(kernel, rx, shared, head_tx, sent, options))
            .expect("spawn kernel thread");
        (Self { jobs, published, head }, handle)
    }

    async fn send(&self, command: Command) -> Result<CommandOutcome, ApiError> {
        let (reply, rx) = oneshot::channel();
        self.jobs.send(Job { command, reply }).map_err(|_| ApiError::gone())?;
        rx.await.map_err(|_| ApiError::gone())?.map_err(ApiError::from)
    }
}

fn kernel_loop(
    mut kernel: Kernel,
    rx: mpsc::Receiver<Job>,
    shared: Arc<RwLock<Published>>,
    head: watch::Sender<u64>,
    mut sent: u64,
    options: ServerOptions,
) -> Kernel {
    let mut halted: Option<String> = None;
    loop {
        let auto = halted.is_none() && !kernel.state().paused && !kernel.is_finished();
        let job = if auto {
            match rx.recv_timeout(options.tick_delay) {
                Ok(j) => Some(j),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            }
        } else {
            match rx.recv() {
                Ok(j) => Some(j),
                Err(_) => break,
            }
        };
        match job {
            Some(Job { command, reply }) => {
                if matches!(command, Command::Resume) {
                    halted = None;
                }
                let out = kernel.apply(command);
                let out = out.and_then(|o| kernel.flush_log().map(|()| o));
                sent = publish(&kernel, &shared, &head, sent, halted.clone());
                let _ = reply.send(out);
            }
            None => {
                if let Err(e) = kernel.step().and_then(|_| kernel.flush_log()) {
                    halted = Some(e.to_string());
                }
                sent = publish(&kernel, &shared, &head, sent, halted.clone());
            }
        }
    }
    let _ = kernel.flush_log();
    kernel
}

/// Copies new records and fresh views into the shared slot; returns the next
/// unpublished sequence number.
fn publish(kernel: &Kernel, shared: &RwLock<Published>, head: &watch::Sender<u64>, sent: u64, halted: Option<String>) -> u64 {
    let fresh = kernel.log().since(sent);
    let next = fresh.last().map_or(sent, |r| r.seq + 1);
    let agents = kernel.ids().into_iter().filter_map(|id| kernel.agent_view(&id).map(|v| (id, v))).collect();
    {
        let mut p = shared.write().expect("lock");
        p.records.extend_from_slice(fresh);
        p.snapshot = kernel.snapshot();
        p.agents = agents;
        p.halted = halted;
    }
    head.send_replace(next);
    next
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({"error": message.into()}) }
    }

    fn gone() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "the kernel has stopped")
    }
}

impl From<KernelError> for ApiError {
    fn from(e: KernelError) -> Self {
        let msg = e.to_string();
        match e {
            KernelError::UnknownAgent(_) => Self::new(StatusCode::NOT_FOUND, msg),
            KernelError::Busy(_) | KernelError::Finished => Self::new(StatusCode::CONFLICT, msg),
            KernelError::EmptyText => Self::new(StatusCode::BAD_REQUEST, msg),
            KernelError::World(rows) => {
                Self { status: StatusCode::UNPROCESSABLE_ENTITY, body: json!({"error": "world rejected", "rows": rows}) }
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/state", get(get_state))
        .route("/agents/{id}", get(get_agent))
        .route("/agents/{id}/chat", post(post_chat))
        .route("/logs", get(get_logs))
        .route("/run/step", post(|s| command(s, Command::Step)))
        .route("/run/day", post(|s| command(s, Command::RunDay)))
        .route("/run/pause", post(|s| command(s, Command::Pause)))
        .route("/run/resume", post(|s| command(s, Command::Resume)))
        .route("/environment", put(put_environment))
        .route("/events", get(get_events))
        .with_state(state)
}

/// Serves `kernel` on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, kernel: Kernel, options: ServerOptions) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, kernel, options).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, kernel: Kernel, options: ServerOptions) -> std::io::Result<()> {
    let (state, _thread) = AppState::spawn(kernel, options);
    axum::serve(listener, router(state)).await
}

async fn get_state(State(s): State<AppState>) -> Json<Value> {
    let p = s.published.read().expect("lock");
    let mut v = p.snapshot.clone();
    v["halted"] = json!(p.halted);
    Json(v)
}

async fn get_agent(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let p = s.published.read().expect("lock");
    p.agents.get(&id).cloned().map(Json).ok_or_else(|| ApiError::from(KernelError::UnknownAgent(id)))
}

#[derive(Debug, Deserialize)]
struct LogQuery {
    day: Option<u32>,
    agent: Option<String>,
    since: Option<u64>,
}

async fn get_logs(State(s): State<AppState>, Query(q): Query<LogQuery>) -> Json<Vec<LogRecord>> {
    let p = s.published.read().expect("lock");
    let out = p
        .since(q.since.unwrap_or(0))
        .iter()
        .filter(|r| q.day.is_none_or(|d| r.day == d))
        .filter(|r| q.agent.as_deref().is_none_or(|a| r.agent == a))
        .cloned()
        .collect();
    Json(out)
}

async fn command(State(s): State<AppState>, cmd: Command) -> Result<Json<CommandOutcome>, ApiError> {
    s.send(cmd).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct ChatBody {
    text: String,
}

async fn post_chat(
    State(s): State<AppState>,
    Path(agent): Path<String>,
    Json(body): Json<ChatBody>,
) -> Result<Json<CommandOutcome>, ApiError> {
    s.send(Command::Chat { agent, text: body.text }).await.map(Json)
}

async fn put_environment(State(s): State<AppState>, csv: String) -> Result<Json<CommandOutcome>, ApiError> {
    s.send(Command::EnvUpdate { csv }).await.map(Json)
}

#[derive(Debug, Deserialize)]
struct EventQuery {
    since: Option<u64>,
}

/// Log records as server-sent events with `id` set to the sequence number.
/// Without `since` (or a `Last-Event-ID` header) the stream starts at the
/// current head.
async fn get_events(
    State(s): State<AppState>,
    headers: HeaderMap,
    Query(q): Query<EventQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let resume = headers.get("last-event-id").and_then(|v| v.to_str().ok()).and_then(|v| v.parse::<u64>().ok()).map(|id| id + 1);
    let mut head = s.head.clone();
    let start = q.since.or(resume).unwrap_or_else(|| *head.borrow_and_update());
    let published = Arc::clone(&s.published);
    let stream = futures::stream::unfold((head, start, Vec::<LogRecord>::new()), move |(mut head, mut next, mut buf)| {
        let published = Arc::clone(&published);
        async move {
            loop {
                if let Some(r) = buf.pop() {
                    let ev = Event::default().id(r.seq.to_string()).data(r.line());
                    return Some((Ok(ev), (head, next, buf)));
                }
                {
                    let p = published.read().expect("lock");
                    buf = p.since(next).iter().rev().cloned().collect();
                }
                if let Some(last) = buf.first() {
                    next = last.seq + 1;
                    continue;
                }
                head.changed().await.ok()?;
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
