//! HTTP/JSON service over one [`Engine`].
//!
//! The engine lives on its own thread and receives every request, reads
//! included, as a job on a single command channel, so requests are applied
//! one at a time in arrival order and each response reports the revision it
//! observed. Handlers only translate between JSON and engine calls.

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::thread;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, oneshot};

use kgcl::acquisition::AcqError;
use kgcl::engine::{Engine, EngineError};

use crate::wire::{
    AnswerRequest, AnswerResponse, DetectionRequest, DetectionResponse, ErrorBody, ErrorResponse, KbTripleBody,
    NextQuestionResponse, SessionsResponse, StatsResponse, StatusResponse, TriplesResponse,
};

type Job = Box<dyn FnOnce(&mut Engine) + Send>;

/// Depth of the command channel; senders wait when it is full.
const CHANNEL_DEPTH: usize = 64;

/// Cloneable sender side of the engine's command channel.
#[derive(Clone)]
pub struct EngineHandle {
    tx: mpsc::Sender<Job>,
}

impl EngineHandle {
    /// Moves `engine` onto a worker thread. The thread hands the engine
    /// back once every handle has been dropped.
    pub fn spawn(engine: Engine) -> (Self, thread::JoinHandle<Engine>) {
        let (tx, mut rx) = mpsc::channel::<Job>(CHANNEL_DEPTH);
        let worker = thread::spawn(move || {
            let mut engine = engine;
            while let Some(job) = rx.blocking_recv() {
                job(&mut engine);
            }
            engine
        });
        (Self { tx }, worker)
    }

    /// Runs `f` on the engine thread and waits for its result.
    pub async fn call<T: Send + 'static>(&self, f: impl FnOnce(&mut Engine) -> T + Send + 'static) -> Result<T, ApiError> {
        let (reply, rx) = oneshot::channel();
        let job: Job = Box::new(move |engine| {
            let _ = reply.send(f(engine));
        });
        self.tx.send(job).await.map_err(|_| ApiError::gone())?;
        rx.await.map_err(|_| ApiError::gone())
    }

    async fn revision(&self) -> u64 {
        self.call(|e| e.revision()).await.unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub revision: u64,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>, revision: u64) -> Self {
        Self { status, message: message.into(), revision }
    }

    fn gone() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "engine has shut down", 0)
    }

    fn from_engine(err: &EngineError, revision: u64) -> Self {
        Self::new(status_of(err), err.to_string(), revision)
    }
}

/// HTTP status for an engine failure. Anything caused by the request's
/// content is a 4xx; the rest is the server's fault.
pub fn status_of(err: &EngineError) -> StatusCode {
    match err {
        EngineError::Acquisition(AcqError::UnknownQuestion(_)) => StatusCode::NOT_FOUND,
        EngineError::Acquisition(AcqError::Closed(_) | AcqError::Transition { .. }) => StatusCode::CONFLICT,
        EngineError::Acquisition(AcqError::InvalidVerdict(_) | AcqError::Kb(_)) | EngineError::Kb(_) => {
            StatusCode::UNPROCESSABLE_ENTITY
        }
        EngineError::NotTraining(_) => StatusCode::CONFLICT,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorResponse { revision: self.revision, error: ErrorBody { status: self.status.as_u16(), message: self.message } };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn parse_body<T: DeserializeOwned>(handle: &EngineHandle, body: &Bytes) -> Result<T, ApiError> {
    match serde_json::from_slice(body) {
        Ok(v) => Ok(v),
        Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed body: {e}"), handle.revision().await)),
    }
}

async fn next_question(State(h): State<EngineHandle>) -> ApiResult<NextQuestionResponse> {
    h.call(|e| NextQuestionResponse { revision: e.revision(), question: e.next_question().map(Into::into) }).await.map(Json)
}

async fn answer(State(h): State<EngineHandle>, Path(id): Path<String>, body: Bytes) -> ApiResult<AnswerResponse> {
    let Ok(id) = id.parse::<u64>() else {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("unknown question {id}"), h.revision().await));
    };
    let request: AnswerRequest = parse_body(&h, &body).await?;
    h.call(move |e| match e.answer(&request.verdict(id)) {
        Ok(ack) => Ok(AnswerResponse { revision: e.revision(), acknowledgment: (&ack).into() }),
        Err(err) => Err(ApiError::from_engine(&err, e.revision())),
    })
    .await?
    .map(Json)
}

async fn detect(State(h): State<EngineHandle>, body: Bytes) -> ApiResult<DetectionResponse> {
    let request: DetectionRequest = parse_body(&h, &body).await?;
    h.call(move |e| match e.detect(&request.label) {
        Ok(out) => Ok(DetectionResponse::new(e.revision(), &out)),
        Err(err) => Err(ApiError::from_engine(&err, e.revision())),
    })
    .await?
    .map(Json)
}

async fn kb_stats(State(h): State<EngineHandle>) -> ApiResult<StatsResponse> {
    h.call(|e| StatsResponse::new(e.revision(), e.stats())).await.map(Json)
}

async fn kb_triples(State(h): State<EngineHandle>, Query(params): Query<HashMap<String, String>>) -> ApiResult<TriplesResponse> {
    let Some(entity) = params.get("entity").cloned() else {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "missing query parameter `entity`", h.revision().await));
    };
    h.call(move |e| {
        let triples = e.triples_about(&entity).iter().map(|(t, p)| KbTripleBody::new(t, p)).collect();
        TriplesResponse { revision: e.revision(), entity, triples }
    })
    .await
    .map(Json)
}

async fn training_status(State(h): State<EngineHandle>) -> ApiResult<StatusResponse> {
    h.call(|e| StatusResponse { revision: e.revision(), status: e.status() }).await.map(Json)
}

async fn session_metrics(State(h): State<EngineHandle>) -> ApiResult<SessionsResponse> {
    h.call(|e| SessionsResponse { revision: e.revision(), sessions: e.sessions().iter().map(Into::into).collect() }).await.map(Json)
}

async fn not_found(State(h): State<EngineHandle>) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "no such endpoint", h.revision().await)
}

pub fn router(handle: EngineHandle) -> Router {
    Router::new()
        .route("/api/questions/next", get(next_question))
        .route("/api/questions/{id}/answer", post(answer))
        .route("/api/detections", post(detect))
        .route("/api/kb/stats", get(kb_stats))
        .route("/api/kb/triples", get(kb_triples))
        .route("/api/training/status", get(training_status))
        .route("/api/metrics/sessions", get(session_metrics))
        .fallback(not_found)
        .with_state(handle)
}

/// A service running on the current tokio runtime.
pub struct RunningService {
    pub addr: SocketAddr,
    shutdown: oneshot::Sender<()>,
    server: tokio::task::JoinHandle<std::io::Result<()>>,
    ticker: Option<tokio::task::JoinHandle<()>>,
    worker: thread::JoinHandle<Engine>,
}

impl RunningService {
    /// Stops accepting requests, lets in-flight ones finish and returns
    /// the engine.
    pub async fn stop(self) -> std::io::Result<Engine> {
        let _ = self.shutdown.send(());
        if let Some(t) = self.ticker {
            t.abort();
            let _ = t.await;
        }
        self.server.await.map_err(std::io::Error::other)??;
        tokio::task::spawn_blocking(move || self.worker.join())
            .await
            .map_err(std::io::Error::other)?
            .map_err(|_| std::io::Error::other("engine thread panicked"))
    }
}

/// Binds `addr` (port 0 picks a free port) and starts serving. With a
/// nonzero `tick_interval` the simulated clock advances one minute per
/// interval.
pub async fn start(engine: Engine, addr: &str, tick_interval: Duration) -> std::io::Result<RunningService> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (handle, worker) = EngineHandle::spawn(engine);
    let ticker = (!tick_interval.is_zero()).then(|| {
        let h = handle.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(tick_interval);
            every.tick().await;
            loop {
                every.tick().await;
                match h.call(|e| e.tick()).await {
                    Ok(Ok(_)) => {}
                    Ok(Err(e)) => eprintln!("tick failed: {e}"),
                    Err(_) => break,
                }
            }
        })
    });
    let (shutdown, stop) = oneshot::channel::<()>();
    let app = router(handle);
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop.await;
            })
            .await
    });
    Ok(RunningService { addr, shutdown, server, ticker, worker })
}

/// Serves until `until` resolves, then returns the engine.
pub async fn serve_until(
    engine: Engine,
    addr: &str,
    tick_interval: Duration,
    on_bound: impl FnOnce(SocketAddr),
    until: impl Future<Output = ()>,
) -> std::io::Result<Engine> {
    let running = start(engine, addr, tick_interval).await?;
    on_bound(running.addr);
    until.await;
    running.stop().await
}
