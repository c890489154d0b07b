//! HTTP API over the cascade and the alert store.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pumpwatch::extraction::{Lexicon, LexiconKind};
use pumpwatch::Message;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;
use tokio::sync::watch;

use crate::alert::{AlertStatus, Decision, Review};
use crate::cascade::{Cascade, Counters, GroupStream, StreamError};
use crate::config::{ConfigError, PipelineConfig};
use crate::store::{AlertStore, StoreError};

/// Upper bound on a long-poll wait.
pub const MAX_WAIT_SECS: f64 = 60.0;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    cascade: Cascade,
    streams: Mutex<HashMap<String, Arc<Mutex<GroupStream>>>>,
    store: RwLock<AlertStore>,
    /// Carries the store cursor to long-poll waiters.
    cursor: watch::Sender<u64>,
    tickers: Lexicon,
    exchanges: Lexicon,
    extraction_mode: String,
}

impl AppState {
    pub fn new(cascade: Cascade, store: AlertStore) -> Self {
        let (cursor, _) = watch::channel(store.cursor());
        AppState {
            cascade,
            streams: Mutex::new(HashMap::new()),
            store: RwLock::new(store),
            cursor,
            tickers: Lexicon::default_tickers(),
            exchanges: Lexicon::default_exchanges(),
            extraction_mode: "rule_based".into(),
        }
    }

    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, ServeError> {
        let detector = cfg.load_detector()?;
        let cascade = Cascade::from_config(cfg, Arc::new(detector))?;
        let store = AlertStore::open(&cfg.state_dir)?;
        let lexicon = |kind, path: &Option<std::path::PathBuf>, fallback: fn() -> Lexicon| match path {
            Some(p) => Lexicon::load(kind, p)
                .map_err(|e| ConfigError::BadValue { key: format!("{}s_path", kind.as_str()), reason: e.to_string() }),
            None => Ok(fallback()),
        };
        let mut state = AppState::new(cascade, store);
        state.tickers = lexicon(LexiconKind::Ticker, &cfg.tickers_path, Lexicon::default_tickers)?;
        state.exchanges = lexicon(LexiconKind::Exchange, &cfg.exchanges_path, Lexicon::default_exchanges)?;
        state.extraction_mode = cfg.extraction_mode.to_string();
        Ok(state)
    }

    pub fn cascade(&self) -> &Cascade {
        &self.cascade
    }

    /// Runs `f` with exclusive store access, for tests and tooling.
    pub fn with_store<T>(&self, f: impl FnOnce(&mut AlertStore) -> T) -> T {
        f(&mut self.store.write().expect("store lock"))
    }

    fn stream(&self, group: &str) -> Arc<Mutex<GroupStream>> {
        let mut streams = self.streams.lock().expect("stream map");
        streams.entry(group.to_string()).or_insert_with(|| Arc::new(Mutex::new(self.cascade.new_stream(group)))).clone()
    }
}

pub fn now_secs() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs() as i64).unwrap_or(0)
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

fn store_error(e: StoreError) -> Response {
    match e {
        StoreError::NotFound(_) => error(StatusCode::NOT_FOUND, e),
        StoreError::Conflict(ref current) => {
            (StatusCode::CONFLICT, Json(json!({ "error": e.to_string(), "alert": current }))).into_response()
        }
        StoreError::Invalid(_) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
        StoreError::ReadOnly(_) => error(StatusCode::SERVICE_UNAVAILABLE, e),
        _ => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

#[derive(Debug, Deserialize)]
struct IngestBody {
    group_id: String,
    msg_id: u64,
    timestamp: i64,
    text: String,
}

fn ingest_blocking(state: &AppState, body: IngestBody) -> Response {
    if body.group_id.is_empty() {
        return error(StatusCode::BAD_REQUEST, "group_id must not be empty");
    }
    if state.store.read().expect("store lock").is_read_only() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "alert store is read-only");
    }
    let msg = Message::new(body.group_id, body.msg_id, body.timestamp, body.text);
    let stream = state.stream(&msg.group_id);
    let processed = {
        let mut s = stream.lock().expect("group stream");
        match state.cascade.process_message(&mut s, &msg, now_secs()) {
            Ok(p) => p,
            Err(e @ StreamError::OutOfOrder { .. }) => return error(StatusCode::CONFLICT, e),
            Err(e) => return error(StatusCode::BAD_REQUEST, e),
        }
    };
    let alert = match processed.alert {
        Some(a) => {
            let mut store = state.store.write().expect("store lock");
            match store.insert(a) {
                Ok((stored, _)) => {
                    state.cursor.send_replace(store.cursor());
                    Some(stored)
                }
                Err(e) => return store_error(e),
            }
        }
        None => None,
    };
    let body = json!({
        "accepted": true,
        "center_index": processed.center_index,
        "score": processed.score,
        "flagged": processed.flagged,
        "alert": alert,
    });
    (StatusCode::ACCEPTED, Json(body)).into_response()
}

async fn ingest(State(state): State<Arc<AppState>>, body: Bytes) -> Response {
    let body: IngestBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad message record: {e}")),
    };
    tokio::task::spawn_blocking(move || ingest_blocking(&state, body))
        .await
        .unwrap_or_else(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))
}

#[derive(Debug, Deserialize)]
struct AlertsQuery {
    status: Option<String>,
    since: Option<u64>,
    wait: Option<f64>,
}

async fn alerts(State(state): State<Arc<AppState>>, Query(q): Query<AlertsQuery>) -> Response {
    let status = match q.status.as_deref().filter(|s| !s.is_empty()).map(str::parse::<AlertStatus>) {
        None => None,
        Some(Ok(s)) => Some(s),
        Some(Err(e)) => return error(StatusCode::BAD_REQUEST, e),
    };
    let since = q.since.unwrap_or(0);
    let wait = q.wait.unwrap_or(0.0);
    if !(wait.is_finite() && wait >= 0.0) {
        return error(StatusCode::BAD_REQUEST, "wait must be a non-negative number of seconds");
    }
    let deadline = tokio::time::Instant::now() + Duration::from_secs_f64(wait.min(MAX_WAIT_SECS));
    let mut rx = state.cursor.subscribe();
    loop {
        rx.borrow_and_update();
        let (list, cursor) = {
            let store = state.store.read().expect("store lock");
            (store.list(status, since), store.cursor())
        };
        if !list.is_empty() || tokio::time::Instant::now() >= deadline {
            return Json(json!({ "alerts": list, "cursor": cursor })).into_response();
        }
        // Any new alert wakes the waiter; a timeout returns the empty list.
        let _ = tokio::time::timeout_at(deadline, rx.changed()).await;
    }
}

async fn review_queue(State(state): State<Arc<AppState>>) -> Response {
    let store = state.store.read().expect("store lock");
    Json(json!({ "alerts": store.review_queue() })).into_response()
}

#[derive(Debug, Deserialize)]
struct ReviewBody {
    decision: Decision,
    coin: Option<String>,
    exchange: Option<String>,
}

async fn review(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Response {
    let body: ReviewBody = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad review: {e}")),
    };
    let review = Review { decision: body.decision, coin: body.coin, exchange: body.exchange, reviewed_at: now_secs() };
    let res = tokio::task::spawn_blocking(move || state.store.write().expect("store lock").review(&id, review)).await;
    match res {
        Ok(Ok(alert)) => Json(json!({ "alert": alert })).into_response(),
        Ok(Err(e)) => store_error(e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn stats(State(state): State<Arc<AppState>>) -> Response {
    let c = &state.cascade.counters;
    let store = state.store.read().expect("store lock");
    let groups = state.streams.lock().expect("stream map").len();
    Json(json!({
        "messages_seen": Counters::get(&c.messages_seen),
        "windows_scored": Counters::get(&c.windows_scored),
        "flagged_windows": Counters::get(&c.flagged),
        "suppressed": Counters::get(&c.suppressed),
        "extraction_calls": Counters::get(&c.extraction_calls),
        "extraction_failures": Counters::get(&c.extraction_failures),
        "alerts": store.len(),
        "status_counts": store.status_counts(),
        "labels": store.labels().len(),
        "groups": groups,
        "median_scoring_latency_secs": c.median_latency(),
    }))
    .into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    let d = state.cascade.detector();
    let read_only = state.store.read().expect("store lock").is_read_only();
    Json(json!({
        "status": "ok",
        "model_version": d.version(),
        "threshold": d.threshold(),
        "window_k": state.cascade.k(),
        "extraction_mode": state.extraction_mode,
        "code_version": pumpwatch::CODE_VERSION,
        "store_writable": !read_only,
    }))
    .into_response()
}

async fn lexicon(State(state): State<Arc<AppState>>, Path(kind): Path<String>) -> Response {
    let lex = match kind.as_str() {
        "tickers" => &state.tickers,
        "exchanges" => &state.exchanges,
        _ => return error(StatusCode::NOT_FOUND, format!("no lexicon `{kind}`")),
    };
    let mut body = lex.sorted_entries().join("\n");
    body.push('\n');
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body).into_response()
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/ingest", post(ingest))
        .route("/alerts", get(alerts))
        .route("/review/queue", get(review_queue))
        .route("/review/{id}", post(review))
        .route("/stats", get(stats))
        .route("/health", get(health))
        .route("/lexicon/{kind}", get(lexicon))
        .fallback(|| async { error(StatusCode::NOT_FOUND, "no such endpoint") })
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(config: PipelineConfig) -> Result<(), ServeError> {
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.bind)
        .await
        .map_err(|source| ServeError::Bind { addr: config.bind.clone(), source })?;
    log::info!(
        "serving model {} on {} (state in {})",
        state.cascade.detector().version(),
        listener.local_addr()?,
        config.state_dir.display()
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

/// A router served from a background thread on its own runtime. Stops on
/// drop.
pub struct Background {
    addr: std::net::SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Background {
    pub fn spawn(app: Router, bind: &str) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(bind)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Background { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for Background {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
