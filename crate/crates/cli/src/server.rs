//! HTTP API over in-memory sessions.
//!
//! Each session sits behind its own async mutex, so commands on one session
//! run strictly in order while other sessions proceed. Translation calls run
//! on the blocking pool against a snapshot and never hold the session lock.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::{Mutex, RwLock};

use layoutgen_core::dsl::{parse_command, parse_script, ApplyError, Command, Event, Session};
use layoutgen_core::layout::{to_svg, SvgOptions};
use layoutgen_core::llm::{translate, BridgeConfig, BridgeError, Transport};
use layoutgen_core::netlist::parse_top;
use layoutgen_core::verify::verify;
use layoutgen_core::Technology;

/// Language-model access for `/nl`.
#[derive(Clone)]
pub struct Bridge {
    pub transport: Arc<dyn Transport>,
    pub config: BridgeConfig,
}

struct Slot {
    session: Mutex<Session>,
    /// Held for the duration of a translation: one in flight per session.
    translating: Mutex<()>,
}

pub struct AppState {
    tech: Arc<Technology>,
    bridge: Option<Bridge>,
    sessions: RwLock<HashMap<u64, Arc<Slot>>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(tech: Arc<Technology>, bridge: Option<Bridge>) -> Arc<AppState> {
        Arc::new(AppState {
            tech,
            bridge,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        })
    }
}

/// An error response: status plus a JSON body.
struct ApiError(StatusCode, Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn not_found(id: u64) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, json!({"error": "UnknownSession", "id": id.to_string()}))
}

fn rejected(err: &ApplyError, index: Option<usize>) -> ApiError {
    let mut body = json!({"error": "CommandRejected", "message": err.to_string(), "detail": err});
    if let Some(i) = index {
        body["index"] = json!(i);
    }
    ApiError(StatusCode::CONFLICT, body)
}

async fn slot(state: &AppState, id: u64) -> Result<Arc<Slot>, ApiError> {
    state.sessions.read().await.get(&id).cloned().ok_or_else(|| not_found(id))
}

/// Applies `commands` all-or-nothing.
fn apply_all(session: &mut Session, commands: &[Command]) -> Result<Vec<Event>, ApiError> {
    let mut trial = session.clone();
    let mut events = Vec::new();
    for (i, c) in commands.iter().enumerate() {
        events.extend(trial.apply(c).map_err(|e| rejected(&e, Some(i)))?);
    }
    *session = trial;
    Ok(events)
}

#[derive(Deserialize)]
struct CreateBody {
    netlist_text: String,
}

async fn create(State(state): State<Arc<AppState>>, Json(body): Json<CreateBody>) -> ApiResult {
    let netlist = parse_top(&body.netlist_text).map_err(|e| {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({"error": "NetlistError", "message": e.to_string(), "detail": e}),
        )
    })?;
    let session = Session::new(Arc::clone(&state.tech), netlist);
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let slot = Arc::new(Slot {
        session: Mutex::new(session),
        translating: Mutex::new(()),
    });
    state.sessions.write().await.insert(id, slot);
    Ok((StatusCode::CREATED, Json(json!({"id": id.to_string()}))).into_response())
}

#[derive(Deserialize)]
struct CommandsBody {
    text: String,
}

async fn commands(State(state): State<Arc<AppState>>, Path(id): Path<u64>, Json(body): Json<CommandsBody>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let parsed = parse_script(&body.text).map_err(|e| {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({"error": "SyntaxError", "line": e.line, "position": e.error.position, "hint": e.error.hint}),
        )
    })?;
    let cmds: Vec<Command> = parsed.into_iter().map(|(_, c)| c).collect();
    let mut session = slot.session.lock().await;
    let events = apply_all(&mut session, &cmds)?;
    Ok(Json(json!({"events": events})).into_response())
}

#[derive(Deserialize)]
struct ApplyBody {
    commands: Vec<String>,
}

async fn apply(State(state): State<Arc<AppState>>, Path(id): Path<u64>, Json(body): Json<ApplyBody>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let mut cmds = Vec::with_capacity(body.commands.len());
    for (i, text) in body.commands.iter().enumerate() {
        cmds.push(parse_command(text).map_err(|e| {
            ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "SyntaxError", "index": i, "position": e.position, "hint": e.hint}),
            )
        })?);
    }
    let mut session = slot.session.lock().await;
    let events = apply_all(&mut session, &cmds)?;
    Ok(Json(json!({"events": events})).into_response())
}

#[derive(Deserialize)]
struct NlBody {
    instruction: String,
}

async fn nl(State(state): State<Arc<AppState>>, Path(id): Path<u64>, Json(body): Json<NlBody>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let Some(bridge) = state.bridge.clone() else {
        return Err(ApiError(
            StatusCode::SERVICE_UNAVAILABLE,
            json!({"error": "NoLanguageModel", "message": "server started without --llm-config or --llm-fixture"}),
        ));
    };
    let _guard = slot.translating.lock().await;
    let snapshot = slot.session.lock().await.clone();
    let result = tokio::task::spawn_blocking(move || {
        translate(&snapshot, &body.instruction, bridge.transport.as_ref(), &bridge.config)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "Internal", "message": e.to_string()})))?;
    match result {
        Ok((commands, transcript)) => {
            let proposed: Vec<String> = commands.iter().map(ToString::to_string).collect();
            Ok(Json(json!({"proposed_commands": proposed, "transcript": transcript})).into_response())
        }
        Err(e @ BridgeError::TranslationFailed { .. }) => Err(ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({"error": "TranslationFailed", "message": e.to_string(), "detail": e}),
        )),
        Err(e) => Err(ApiError(
            StatusCode::BAD_GATEWAY,
            json!({"error": "TransportError", "message": e.to_string()}),
        )),
    }
}

async fn layout(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let bytes = slot.session.lock().await.current().to_canonical_json();
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn svg(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let session = slot.session.lock().await;
    let options = SvgOptions {
        layers: session.tech().layers.iter().map(|l| l.name.clone()).collect(),
        ..Default::default()
    };
    let text = to_svg(session.current(), &options);
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], text).into_response())
}

async fn report(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let session = slot.session.lock().await;
    let report = verify(session.current(), session.netlist(), session.tech()).map_err(|e| {
        ApiError(
            StatusCode::CONFLICT,
            json!({"error": "VerifyError", "message": e.to_string(), "detail": e}),
        )
    })?;
    Ok(Json(report).into_response())
}

async fn undo(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let events = slot.session.lock().await.undo().map_err(|e| rejected(&e, None))?;
    Ok(Json(json!({"events": events})).into_response())
}

async fn history(State(state): State<Arc<AppState>>, Path(id): Path<u64>) -> ApiResult {
    let slot = slot(&state, id).await?;
    let log: Vec<String> = slot.session.lock().await.log().iter().map(ToString::to_string).collect();
    Ok(Json(json!({"commands": log})).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/commands", post(commands))
        .route("/sessions/{id}/nl", post(nl))
        .route("/sessions/{id}/apply", post(apply))
        .route("/sessions/{id}/layout", get(layout))
        .route("/sessions/{id}/svg", get(svg))
        .route("/sessions/{id}/report", get(report))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/history", get(history))
        .with_state(state)
}

/// Serves until Ctrl-C (or SIGTERM on Unix).
pub async fn serve(state: Arc<AppState>, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port))
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind port {port}: {e}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown_signal())
        .await?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}
