use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};

use crate::protocol::{ClientMessage, ServerMessage};
use crate::session::{CycleEntry, Session};

#[derive(Clone, Debug)]
pub struct ServeConfig {
    /// Wall-clock interval between simulation ticks.
    pub tick: Duration,
    /// Broadcast the state every `decimation` ticks.
    pub decimation: u32,
    pub broadcast_capacity: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            tick: Duration::from_millis(20),
            decimation: 3,
            broadcast_capacity: 64,
        }
    }
}

enum Command {
    Message(ClientMessage, oneshot::Sender<Option<ServerMessage>>),
    History(oneshot::Sender<Vec<CycleEntry>>),
    Model(oneshot::Sender<serde_json::Value>),
}

/// Cloneable handle to a session owned by a single actor task.
#[derive(Clone)]
pub struct SessionHandle {
    commands: mpsc::Sender<Command>,
    states: broadcast::Sender<String>,
}

impl SessionHandle {
    /// Spawns the actor that owns `session`, advances it on every tick and
    /// fans state out to subscribers.
    pub fn spawn(mut session: Session, config: ServeConfig) -> Self {
        let (commands, mut rx) = mpsc::channel::<Command>(256);
        let (states, _) = broadcast::channel(config.broadcast_capacity.max(1));
        let out = states.clone();
        tokio::spawn(async move {
            let mut ticker = tokio::time::interval(config.tick);
            ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            let decimation = config.decimation.max(1);
            let mut ticks: u32 = 0;
            loop {
                tokio::select! {
                    cmd = rx.recv() => {
                        let Some(cmd) = cmd else { break };
                        match cmd {
                            Command::Message(msg, reply) => {
                                let mutates = !matches!(msg, ClientMessage::Snapshot {});
                                let _ = reply.send(session.handle_message(&msg));
                                if mutates {
                                    let _ = out.send(ServerMessage::State(session.state()).to_json());
                                }
                            }
                            Command::History(reply) => {
                                let _ = reply.send(session.history().cloned().collect());
                            }
                            Command::Model(reply) => {
                                let _ = reply.send(serde_json::to_value(session.model()).expect("model serializes"));
                            }
                        }
                    }
                    _ = ticker.tick() => {
                        let dtau = session.rate() * config.tick.as_secs_f64();
                        if dtau > 0.0 {
                            let _ = session.step(dtau);
                        }
                        ticks = ticks.wrapping_add(1);
                        if ticks % decimation == 0 {
                            let _ = out.send(ServerMessage::State(session.state()).to_json());
                        }
                    }
                }
            }
        });
        Self { commands, states }
    }

    pub async fn send(&self, msg: ClientMessage) -> Option<ServerMessage> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(Command::Message(msg, tx)).await.ok()?;
        rx.await.ok().flatten()
    }

    pub async fn history(&self) -> Vec<CycleEntry> {
        let (tx, rx) = oneshot::channel();
        if self.commands.send(Command::History(tx)).await.is_err() {
            return Vec::new();
        }
        rx.await.unwrap_or_default()
    }

    pub async fn model(&self) -> serde_json::Value {
        let (tx, rx) = oneshot::channel();
        if self.commands.send(Command::Model(tx)).await.is_err() {
            return serde_json::Value::Null;
        }
        rx.await.unwrap_or(serde_json::Value::Null)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<String> {
        self.states.subscribe()
    }
}

pub fn router(handle: SessionHandle) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/model", get(get_model))
        .route("/history", get(get_history))
        .with_state(handle)
}

async fn get_model(State(handle): State<SessionHandle>) -> Json<serde_json::Value> {
    Json(handle.model().await)
}

async fn get_history(State(handle): State<SessionHandle>) -> Json<Vec<CycleEntry>> {
    Json(handle.history().await)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(handle): State<SessionHandle>) -> Response {
    ws.on_upgrade(move |socket| client(socket, handle)).into_response()
}

async fn client(mut socket: WebSocket, handle: SessionHandle) {
    let mut states = handle.subscribe();
    loop {
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(msg) => handle.send(msg).await,
                    Err(e) => Some(ServerMessage::error(format!("malformed message: {e}"))),
                };
                if let Some(reply) = reply {
                    if socket.send(Message::Text(reply.to_json())).await.is_err() {
                        break;
                    }
                }
            }
            state = states.recv() => {
                match state {
                    Ok(text) => {
                        if socket.send(Message::Text(text)).await.is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("client lagged by {n} states"),
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }
    }
}

/// Serves the session on `listener` until the task is cancelled.
pub async fn serve(listener: TcpListener, session: Session, config: ServeConfig) -> std::io::Result<()> {
    let handle = SessionHandle::spawn(session, config);
    axum::serve(listener, router(handle)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}
