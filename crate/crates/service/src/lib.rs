//! HTTP and WebSocket front end for live coached negotiations.

pub mod wire;

use std::collections::HashMap;
use std::future::Future;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::sync::mpsc;

use coach_core::config::ServiceConfig;
use coach_core::corpus::{EventKind, Scenario};
use coach_core::detector::Detector;
use coach_core::engine::scripted::{BuyerPolicy, ScriptedBuyer};
use coach_core::engine::{Coach, ProtocolError, Session, Transcript};
use coach_core::tactic::Role;
use wire::WireMessage;

/// Models shared read-only by every session.
#[derive(Clone)]
pub struct Models {
    pub detector: Arc<Detector>,
    pub coach: Option<Arc<Coach>>,
    pub scenarios: Vec<Scenario>,
}

struct Live {
    session: Session,
    seats: [Option<mpsc::UnboundedSender<WireMessage>>; 2],
    buyer_bot: Option<ScriptedBuyer>,
    last_activity: Instant,
}

struct Token {
    session_id: String,
    role: Role,
    used: bool,
}

pub struct AppState {
    models: Models,
    config: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<tokio::sync::Mutex<Live>>>>,
    tokens: Mutex<HashMap<String, Token>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiError {
    pub error: wire::WireError,
}

fn api_error(status: StatusCode, code: &str, detail: impl Into<String>) -> Response {
    let body = ApiError {
        error: wire::WireError {
            code: code.into(),
            detail: detail.into(),
        },
    };
    (status, Json(body)).into_response()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub scenario_id: Option<String>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    /// Run the coach for the seller (default true).
    #[serde(default)]
    pub coached: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub seller_token: String,
    pub buyer_token: String,
}

#[derive(Debug, Deserialize)]
struct TokenQuery {
    token: String,
}

impl AppState {
    pub fn new(models: Models, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            models,
            config,
            sessions: Mutex::new(HashMap::new()),
            tokens: Mutex::new(HashMap::new()),
        })
    }

    fn session(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<Live>>> {
        self.sessions.lock().unwrap().get(id).cloned()
    }

    fn create(&self, scenario: Scenario, coached: bool) -> CreatedSession {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let coach = if coached { self.models.coach.clone() } else { None };
        let session = Session::new(id.clone(), scenario, self.models.detector.clone(), coach);
        let live = Live {
            session,
            seats: [None, None],
            buyer_bot: None,
            last_activity: Instant::now(),
        };
        self.sessions
            .lock()
            .unwrap()
            .insert(id.clone(), Arc::new(tokio::sync::Mutex::new(live)));
        let mut tokens = self.tokens.lock().unwrap();
        let mut issue = |role| {
            let t = uuid::Uuid::new_v4().simple().to_string();
            tokens.insert(
                t.clone(),
                Token {
                    session_id: id.clone(),
                    role,
                    used: false,
                },
            );
            t
        };
        let seller_token = issue(Role::Seller);
        let buyer_token = issue(Role::Buyer);
        CreatedSession {
            session_id: id,
            seller_token,
            buyer_token,
        }
    }

    /// Binds the token to a connection and returns its seat. A token held
    /// by a live connection (or by a scripted buyer) is refused.
    fn claim(&self, token: &str) -> Result<(String, Role), Response> {
        let mut tokens = self.tokens.lock().unwrap();
        let t = tokens
            .get_mut(token)
            .ok_or_else(|| api_error(StatusCode::NOT_FOUND, "unknown_token", "no such token"))?;
        if t.used {
            return Err(api_error(StatusCode::CONFLICT, "token_in_use", "token is already in use"));
        }
        t.used = true;
        Ok((t.session_id.clone(), t.role))
    }

    /// Claims the unused buyer seat of a session.
    fn claim_buyer_seat(&self, session_id: &str) -> bool {
        let mut tokens = self.tokens.lock().unwrap();
        match tokens
            .values_mut()
            .find(|t| t.session_id == session_id && t.role == Role::Buyer)
        {
            Some(t) if !t.used => {
                t.used = true;
                true
            }
            _ => false,
        }
    }

    fn release(&self, session_id: &str, role: Role) {
        let mut tokens = self.tokens.lock().unwrap();
        if let Some(t) = tokens
            .values_mut()
            .find(|t| t.session_id == session_id && t.role == role)
        {
            t.used = false;
        }
    }

    fn export(&self, live: &Live) {
        let Some(dir) = &self.config.transcripts else { return };
        let transcript = live.session.transcript();
        if let Err(e) = write_atomic(dir, &live.session.id, &transcript) {
            log::error!("exporting session {}: {e}", live.session.id);
        }
    }

    /// Writes every session's transcript (used at shutdown).
    pub async fn export_all(&self) {
        let all: Vec<_> = self.sessions.lock().unwrap().values().cloned().collect();
        for s in all {
            let live = s.lock().await;
            self.export(&live);
        }
    }

    /// Applies one event, fans out the echo, the new state and any
    /// suggestion, then lets a scripted buyer respond.
    fn apply(&self, live: &mut Live, role: Role, kind: EventKind) -> Result<(), ProtocolError> {
        self.apply_one(live, role, kind)?;
        while let Some(bot) = live.buyer_bot.as_mut() {
            let Some(kind) = bot.act(&live.session) else { break };
            self.apply_one(live, Role::Buyer, kind)
                .expect("scripted buyer only takes legal actions");
        }
        Ok(())
    }

    fn apply_one(&self, live: &mut Live, role: Role, kind: EventKind) -> Result<(), ProtocolError> {
        let suggestion = live.session.apply(role, kind)?;
        live.last_activity = Instant::now();
        let id = live.session.id.clone();
        let event = live.session.events().last().expect("just applied").clone();
        let echo = WireMessage::event(&id, &event);
        let state = WireMessage::state(&id, live.session.events(), live.session.status());
        for seat in live.seats.iter().flatten() {
            let _ = seat.send(echo.clone());
            let _ = seat.send(state.clone());
        }
        if let (Some(s), Some(seller)) = (suggestion, &live.seats[Role::Seller.slot()]) {
            let _ = seller.send(WireMessage::suggestion(&id, &s));
        }
        if live.session.status().is_closed() {
            self.export(live);
        }
        Ok(())
    }

    /// Quits every open session idle for longer than the timeout.
    pub async fn sweep_idle(&self) {
        let timeout = Duration::from_millis(self.config.idle_timeout_ms);
        let all: Vec<_> = self.sessions.lock().unwrap().values().cloned().collect();
        for s in all {
            let mut live = s.lock().await;
            if live.session.status().is_closed() || live.last_activity.elapsed() < timeout {
                continue;
            }
            let who = live.session.status().turn().unwrap_or(Role::Buyer);
            log::info!("session {} idle, closing", live.session.id);
            let _ = self.apply_one(&mut live, who, EventKind::Quit);
        }
    }
}

fn write_atomic(dir: &Path, id: &str, transcript: &Transcript) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(transcript).map_err(std::io::Error::other)?;
    let tmp = dir.join(format!(".{id}.json.tmp"));
    std::fs::write(&tmp, json)?;
    std::fs::rename(&tmp, dir.join(format!("{id}.json")))
}

async fn list_scenarios(State(app): State<Arc<AppState>>) -> Json<Vec<Scenario>> {
    Json(app.models.scenarios.clone())
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Response {
    let scenario = match (&req.scenario, &req.scenario_id) {
        (Some(s), _) => {
            if let Err(e) = s.validate() {
                return api_error(StatusCode::BAD_REQUEST, "bad_scenario", e);
            }
            s.clone()
        }
        (None, Some(id)) => match app.models.scenarios.iter().find(|s| &s.id == id) {
            Some(s) => s.clone(),
            None => {
                return api_error(StatusCode::NOT_FOUND, "unknown_scenario", format!("no scenario `{id}`"))
            }
        },
        (None, None) => {
            return api_error(StatusCode::BAD_REQUEST, "bad_request", "give scenario_id or scenario")
        }
    };
    Json(app.create(scenario, req.coached.unwrap_or(true))).into_response()
}

async fn transcript(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Response {
    match app.session(&id) {
        Some(s) => Json(s.lock().await.session.transcript()).into_response(),
        None => api_error(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")),
    }
}

async fn scripted_buyer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    policy: Option<Json<BuyerPolicy>>,
) -> Response {
    let Some(s) = app.session(&id) else {
        return api_error(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`"));
    };
    if !app.claim_buyer_seat(&id) {
        return api_error(StatusCode::CONFLICT, "seat_taken", "the buyer seat is already taken");
    }
    let policy = policy.map(|Json(p)| p).unwrap_or_default();
    let mut live = s.lock().await;
    let mut bot = ScriptedBuyer::new(policy, &live.session.scenario);
    let first = bot.act(&live.session);
    live.buyer_bot = Some(bot);
    if let Some(kind) = first {
        if let Err(e) = app.apply(&mut live, Role::Buyer, kind) {
            return api_error(StatusCode::CONFLICT, e.code(), e.to_string());
        }
    }
    StatusCode::NO_CONTENT.into_response()
}

async fn ws_handler(
    State(app): State<Arc<AppState>>,
    Query(q): Query<TokenQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    let (session_id, role) = match app.claim(&q.token) {
        Ok(seat) => seat,
        Err(resp) => return resp,
    };
    ws.on_upgrade(move |socket| handle_socket(app, socket, session_id, role))
}

async fn handle_socket(app: Arc<AppState>, mut socket: WebSocket, session_id: String, role: Role) {
    let Some(shared) = app.session(&session_id) else { return };
    let (tx, mut rx) = mpsc::unbounded_channel::<WireMessage>();
    {
        let mut live = shared.lock().await;
        live.last_activity = Instant::now();
        let _ = tx.send(WireMessage::joined(&session_id, role));
        let _ = tx.send(WireMessage::state(
            &session_id,
            live.session.events(),
            live.session.status(),
        ));
        if role == Role::Seller {
            if let Some(s) = live.session.suggestion() {
                let _ = tx.send(WireMessage::suggestion(&session_id, s));
            }
        }
        live.seats[role.slot()] = Some(tx.clone());
    }
    loop {
        tokio::select! {
            out = rx.recv() => {
                let Some(msg) = out else { break };
                if socket.send(Message::Text(msg.to_json().into())).await.is_err() {
                    break;
                }
            }
            inbound = socket.recv() => {
                let text = match inbound {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = handle_inbound(&app, &shared, &session_id, role, text.as_str()).await;
                if let Some(r) = reply {
                    let _ = tx.send(r);
                }
            }
        }
    }
    shared.lock().await.seats[role.slot()] = None;
    app.release(&session_id, role);
}

/// Applies a client message; returns a message for the sender only.
async fn handle_inbound(
    app: &AppState,
    shared: &tokio::sync::Mutex<Live>,
    session_id: &str,
    role: Role,
    text: &str,
) -> Option<WireMessage> {
    let msg: WireMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return Some(WireMessage::error(session_id, "bad_message", e.to_string())),
    };
    if msg.role.is_some_and(|r| r != role) {
        return Some(WireMessage::error(session_id, "wrong_role", "connection is bound to the other role"));
    }
    let kind = match msg.action() {
        Ok(Some(k)) => k,
        Ok(None) => {
            let live = shared.lock().await;
            return Some(WireMessage::state(session_id, live.session.events(), live.session.status()));
        }
        Err(detail) => return Some(WireMessage::error(session_id, "bad_message", detail)),
    };
    let mut live = shared.lock().await;
    match app.apply(&mut live, role, kind) {
        Ok(()) => None,
        Err(e) => Some(WireMessage::error(session_id, e.code(), e.to_string())),
    }
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", get(list_scenarios))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/scripted-buyer", post(scripted_buyer))
        .route("/ws", get(ws_handler))
        .with_state(app)
}

/// Serves until `shutdown` resolves, sweeping idle sessions in the
/// background, then exports every session.
pub async fn serve<F>(listener: TcpListener, app: Arc<AppState>, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    let period = Duration::from_millis((app.config.idle_timeout_ms / 4).clamp(20, 30_000));
    let sweeper = {
        let app = app.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                app.sweep_idle().await;
            }
        })
    };
    let result = axum::serve(listener, router(app.clone()))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    app.export_all().await;
    result
}
