//! HTTP front end for one live simulation.
//!
//! A single task owns the [`Simulation`]; request handlers send it commands
//! over a queue and wait for the reply, so requests are applied one at a
//! time and never land inside a firmware tick. Externally visible changes
//! fan out to `/api/events` subscribers as server-sent events.
//!
//! | method | path          | body                           |
//! |--------|---------------|--------------------------------|
//! | GET    | `/api/state`  |                                |
//! | POST   | `/api/key`    | `{"key":"5","action":"tap"}`   |
//! | GET    | `/api/eeprom` |                                |
//! | PUT    | `/api/eeprom` | 256 hex digits                 |
//! | POST   | `/api/reset`  |                                |
//! | POST   | `/api/clock`  | `{"advance_ms":N}`             |
//! | GET    | `/api/events` |                                |

use std::convert::Infallible;
use std::net::SocketAddr;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::time::{Instant, MissedTickBehavior};

use crate::config::LockConfig;
use crate::eeprom::EepromImage;
use crate::keypad::{KeySymbol, KeypadError};
use crate::sim::{SimEvent, Simulation, StateSnapshot};

pub const DEFAULT_BIND: &str = "127.0.0.1:8625";

#[derive(Debug, Clone, Default)]
pub struct ServiceOptions {
    pub config: LockConfig,
    pub eeprom: EepromImage,
    pub manual_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyAction {
    Press,
    Release,
    Tap,
}

enum Command {
    State(oneshot::Sender<StateSnapshot>),
    Key {
        sym: KeySymbol,
        action: KeyAction,
        reply: oneshot::Sender<Result<(), KeypadError>>,
    },
    EepromGet(oneshot::Sender<EepromImage>),
    EepromPut(EepromImage, oneshot::Sender<()>),
    Reset(oneshot::Sender<()>),
    Advance(u64, oneshot::Sender<StateSnapshot>),
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::Sender<Command>,
    events: broadcast::Sender<SimEvent>,
    manual_clock: bool,
}

struct Owner {
    sim: Simulation,
    events: broadcast::Sender<SimEvent>,
    /// Taps are queued back to back so concurrent taps stay distinct presses.
    tap_free_at: u64,
}

impl Owner {
    fn publish(&mut self) {
        for ev in self.sim.take_events() {
            // no subscribers is fine
            let _ = self.events.send(ev);
        }
    }

    fn key(&mut self, sym: KeySymbol, action: KeyAction) -> Result<(), KeypadError> {
        let now = self.sim.now_us();
        match action {
            KeyAction::Press => self.sim.press(sym, now, None),
            KeyAction::Release => self.sim.release(sym, now, None),
            KeyAction::Tap => {
                let hold = self.sim.config().tap_ms * 1_000;
                let last = self.sim.board().keypad.last_scheduled_us(sym);
                let at = now.max(self.tap_free_at).max(last + hold);
                self.sim.tap(sym, at, hold)?;
                self.tap_free_at = at + 2 * hold;
                Ok(())
            }
        }
    }

    fn reboot(&mut self, image: EepromImage) {
        self.sim.power_cycle_with(image);
        self.publish();
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::State(reply) => {
                let _ = reply.send(self.sim.snapshot());
            }
            Command::Key { sym, action, reply } => {
                let _ = reply.send(self.key(sym, action));
            }
            Command::EepromGet(reply) => {
                let _ = reply.send(*self.sim.board().eeprom.image());
            }
            Command::EepromPut(image, reply) => {
                self.reboot(image);
                let _ = reply.send(());
            }
            Command::Reset(reply) => {
                let image = *self.sim.board().eeprom.image();
                self.reboot(image);
                let _ = reply.send(());
            }
            Command::Advance(ms, reply) => {
                self.sim.advance_ms(ms);
                self.publish();
                let _ = reply.send(self.sim.snapshot());
            }
        }
    }
}

async fn own(mut owner: Owner, mut commands: mpsc::Receiver<Command>, manual_clock: bool) {
    let mut ticker = tokio::time::interval(Duration::from_millis(1));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    let wall_start = Instant::now();
    let sim_start = owner.sim.now_us();
    loop {
        tokio::select! {
            cmd = commands.recv() => match cmd {
                Some(cmd) => owner.handle(cmd),
                None => break,
            },
            _ = ticker.tick(), if !manual_clock => {
                let elapsed = wall_start.elapsed().as_micros() as u64;
                let target = (sim_start + elapsed).max(owner.sim.now_us());
                owner.sim.advance_to_us(target);
                owner.publish();
            }
        }
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

impl AppState {
    async fn ask<T>(
        &self,
        make: impl FnOnce(oneshot::Sender<T>) -> Command,
    ) -> Result<T, Response> {
        let (tx, rx) = oneshot::channel();
        let gone = || error(StatusCode::SERVICE_UNAVAILABLE, "simulation stopped");
        self.commands.send(make(tx)).await.map_err(|_| gone())?;
        rx.await.map_err(|_| gone())
    }
}

async fn get_state(State(app): State<AppState>) -> Response {
    match app.ask(Command::State).await {
        Ok(s) => Json(s).into_response(),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct KeyRequest {
    key: String,
    #[serde(default)]
    action: Option<String>,
}

async fn post_key(State(app): State<AppState>, body: Bytes) -> Response {
    let req: KeyRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
    };
    let sym: KeySymbol = match req.key.parse() {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("{e}")),
    };
    let action = match req.action.as_deref().unwrap_or("tap") {
        "press" => KeyAction::Press,
        "release" => KeyAction::Release,
        "tap" => KeyAction::Tap,
        other => return error(StatusCode::BAD_REQUEST, format!("unknown action `{other}`")),
    };
    match app.ask(|reply| Command::Key { sym, action, reply }).await {
        Ok(Ok(())) => StatusCode::NO_CONTENT.into_response(),
        Ok(Err(e)) => error(StatusCode::CONFLICT, e.to_string()),
        Err(r) => r,
    }
}

async fn get_eeprom(State(app): State<AppState>) -> Response {
    match app.ask(Command::EepromGet).await {
        Ok(img) => ([(header::CONTENT_TYPE, "text/plain")], img.to_hex()).into_response(),
        Err(r) => r,
    }
}

async fn put_eeprom(State(app): State<AppState>, body: Bytes) -> Response {
    let Ok(text) = std::str::from_utf8(&body) else {
        return error(StatusCode::BAD_REQUEST, "body is not UTF-8");
    };
    let image = match EepromImage::from_hex(text) {
        Ok(i) => i,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    match app.ask(|reply| Command::EepromPut(image, reply)).await {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(r) => r,
    }
}

async fn post_reset(State(app): State<AppState>) -> Response {
    match app.ask(Command::Reset).await {
        Ok(()) => StatusCode::NO_CONTENT.into_response(),
        Err(r) => r,
    }
}

#[derive(Deserialize)]
struct ClockRequest {
    advance_ms: u64,
}

async fn post_clock(State(app): State<AppState>, body: Bytes) -> Response {
    if !app.manual_clock {
        return error(
            StatusCode::CONFLICT,
            "clock runs in real time; start with --manual-clock",
        );
    }
    let req: ClockRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
    };
    match app
        .ask(|reply| Command::Advance(req.advance_ms, reply))
        .await
    {
        Ok(s) => Json(s).into_response(),
        Err(r) => r,
    }
}

fn event_stream(
    rx: broadcast::Receiver<SimEvent>,
) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => {
                    let data = serde_json::to_string(&ev).expect("event serialises");
                    return Some((Ok(Event::default().data(data)), rx));
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    })
}

async fn get_events(State(app): State<AppState>) -> impl IntoResponse {
    Sse::new(event_stream(app.events.subscribe())).keep_alive(KeepAlive::default())
}

/// Builds the router and spawns the simulation owner on the current runtime.
pub fn router(opts: ServiceOptions) -> Router {
    let (commands, rx) = mpsc::channel(256);
    let (events, _) = broadcast::channel(1024);
    let mut sim = Simulation::new(opts.config, opts.eeprom);
    sim.take_events();
    let owner = Owner {
        sim,
        events: events.clone(),
        tap_free_at: 0,
    };
    tokio::spawn(own(owner, rx, opts.manual_clock));
    let state = AppState {
        commands,
        events,
        manual_clock: opts.manual_clock,
    };
    Router::new()
        .route("/api/state", get(get_state))
        .route("/api/key", post(post_key))
        .route("/api/eeprom", get(get_eeprom).put(put_eeprom))
        .route("/api/reset", post(post_reset))
        .route("/api/clock", post(post_clock))
        .route("/api/events", get(get_events))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, opts: ServiceOptions) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {addr}: {e}"))?;
    axum::serve(listener, router(opts))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
