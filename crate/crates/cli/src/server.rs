//! Live session server: one WebSocket connection is one operator session,
//! stepped at wall-clock rate and logged when a trial completes.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use sasc_core::koopman::KoopmanModel;
use sasc_core::sessions::{append_trajectory, LabConfig, Paradigm, Trajectory};
use sasc_core::world::{make_environment, EnvId};
use tokio::net::TcpListener;
use tokio::time::{interval, MissedTickBehavior};
use tower_http::services::ServeDir;

use crate::live::LiveSession;
use crate::protocol::{ErrorCode, ServerMsg};

pub struct ServerState {
    pub config: Arc<LabConfig>,
    pub model: Option<Arc<KoopmanModel>>,
    pub env: EnvId,
    pub paradigm: Paradigm,
    pub base_seed: u64,
    /// Completed trials are appended here.
    pub log_path: Option<PathBuf>,
    log_lock: Mutex<()>,
    next_session: AtomicU64,
}

impl ServerState {
    pub fn new(
        config: LabConfig,
        model: Option<Arc<KoopmanModel>>,
        env: EnvId,
        paradigm: Paradigm,
        base_seed: u64,
        log_path: Option<PathBuf>,
    ) -> Self {
        Self {
            config: Arc::new(config),
            model,
            env,
            paradigm,
            base_seed,
            log_path,
            log_lock: Mutex::new(()),
            next_session: AtomicU64::new(1),
        }
    }

    fn log(&self, trajectory: &Trajectory) {
        let Some(path) = &self.log_path else { return };
        let _guard = self.log_lock.lock().unwrap_or_else(|e| e.into_inner());
        match append_trajectory(path, trajectory) {
            Ok(()) => log::info!("logged {} ({})", trajectory.header.trial_id, trajectory.outcome.label()),
            Err(e) => log::error!("could not log {}: {e}", trajectory.header.trial_id),
        }
    }
}

/// Routes: `/ws` for sessions, `/geometry/{env}` for world geometry and,
/// when `assets` is given, the cockpit files at `/`.
pub fn router(state: Arc<ServerState>, assets: Option<PathBuf>) -> Router {
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .route("/geometry/{env}", get(geometry))
        .with_state(state);
    match assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(listener: TcpListener, state: Arc<ServerState>, assets: Option<PathBuf>) -> std::io::Result<()> {
    axum::serve(listener, router(state, assets))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn geometry(State(state): State<Arc<ServerState>>, Path(env): Path<String>) -> Response {
    let id = match env.parse::<EnvId>() {
        Ok(id) => id,
        Err(e) => return (StatusCode::NOT_FOUND, e.to_string()).into_response(),
    };
    match make_environment(id, &state.config.layout, &state.config.physics, state.base_seed) {
        Ok(env) => ([("content-type", "application/json")], env.to_json()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<Arc<ServerState>>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, state))
}

async fn send(socket: &mut WebSocket, frames: &[ServerMsg]) -> bool {
    for f in frames {
        if socket.send(Message::Text(f.to_json().into())).await.is_err() {
            return false;
        }
    }
    true
}

async fn run_session(mut socket: WebSocket, state: Arc<ServerState>) {
    let id = state.next_session.fetch_add(1, Ordering::Relaxed);
    log::info!("session {id} connected");
    let mut session =
        LiveSession::new(id, state.base_seed, state.config.clone(), state.model.clone(), state.env, state.paradigm);
    // Late ticks delay the simulation rather than skipping steps.
    let period = Duration::from_secs_f64(state.config.physics.dt / state.config.live.speed);
    let mut ticker = interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let frames = match incoming {
                    Some(Ok(Message::Text(text))) => {
                        let frames = session.handle_text(text.as_str());
                        // A new trial starts its clock now.
                        if matches!(frames.first(), Some(ServerMsg::Hello(_))) {
                            ticker.reset();
                        }
                        frames
                    }
                    Some(Ok(Message::Binary(_))) => vec![ServerMsg::error(ErrorCode::BadMessage, "frames must be JSON text")],
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                if !send(&mut socket, &frames).await {
                    break;
                }
            }
            _ = ticker.tick(), if session.is_running() => {
                let out = session.tick();
                if let Some(trajectory) = &out.finished {
                    state.log(trajectory);
                }
                if !send(&mut socket, &out.frames).await {
                    break;
                }
            }
        }
    }
    session.abandon();
    log::info!("session {id} disconnected");
}
