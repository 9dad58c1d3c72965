//! Live gateway: one simulation thread ticking the arena at the configured
//! rate, and one async task per websocket connection. The simulation only
//! touches a latest-input mailbox, a command queue and a broadcast channel,
//! so a slow or absent client never delays a tick; it just misses frames.

use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::broadcast;
use tower_http::services::ServeDir;

use pixmimic_core::arena::{
    render, ActionClass, ArenaEvent, Controller, CpuLevel, CpuPlayer, GameState, ACTION_COUNT, NATIVE_HEIGHT,
    NATIVE_WIDTH,
};
use pixmimic_core::datapipe::{derive_seed, Episode};
use pixmimic_core::policy::{Agent, AgentConfig};

use crate::commands::{load_manifest, load_model, matching_mean};
use crate::config::{ControlMode, RunConfig};
use crate::CliError;

/// Frames buffered per connection before the oldest are dropped.
const FRAME_BACKLOG: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchEventKind {
    Ko,
    End,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        classes: Vec<String>,
        /// Frame size as `[width, height]`.
        resolution: [usize; 2],
        tick_rate: u32,
        mode: ControlMode,
        agent_available: bool,
    },
    Frame {
        tick: u64,
        rgb_base64: String,
        scores: Vec<f32>,
        mode: ControlMode,
    },
    MatchEvent {
        tick: u64,
        event: MatchEventKind,
        payload: Value,
    },
    /// A recording finished and was written.
    Recorded {
        tick: u64,
        path: String,
        frames: usize,
    },
    Error {
        message: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Input {
        tick: u64,
        class_id: u8,
    },
    Mode {
        mode: ControlMode,
    },
    Record {
        action: RecordAction,
        #[serde(default)]
        path: Option<String>,
        /// Stops automatically after this many ticks.
        #[serde(default)]
        ticks: Option<u64>,
    },
}

enum Command {
    Mode(ControlMode),
    RecordStart { path: PathBuf, ticks: Option<u64> },
    RecordStop,
}

struct Shared {
    /// Latest human input; held until replaced, like a key kept pressed.
    input: Mutex<Option<ActionClass>>,
    commands: Mutex<Vec<Command>>,
    frames: broadcast::Sender<Arc<str>>,
    stop: AtomicBool,
    agent_available: bool,
    mode: Mutex<ControlMode>,
    record_dir: PathBuf,
    tick_rate: u32,
}

fn to_text(msg: &ServerMessage) -> Arc<str> {
    serde_json::to_string(msg).expect("server messages serialize").into()
}

/// Client paths are relative to the recording directory and may not climb
/// out of it.
fn recording_path(dir: &Path, requested: &str) -> Result<PathBuf, String> {
    let rel = Path::new(requested);
    if requested.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(format!("recording path {requested:?} must be relative, without '..'"));
    }
    Ok(dir.join(rel))
}

/// Spans match boundaries; frames are stamped with the session clock.
struct Recording {
    episode: Episode,
    path: PathBuf,
    remaining: Option<u64>,
}

struct Simulation {
    cfg: RunConfig,
    shared: Arc<Shared>,
    agent: Option<Agent>,
    cpu_level: CpuLevel,
    mode: ControlMode,
    clock: u64,
    game: u64,
    recording: Option<Recording>,
}

impl Simulation {
    fn new_match(&self) -> (GameState, CpuPlayer) {
        let state = GameState::new(
            self.cfg.arena.clone(),
            self.cfg.match_tick_limit,
            derive_seed(self.cfg.seed, 8, self.game),
        );
        let cpu = CpuPlayer::new(self.cpu_level, derive_seed(self.cfg.seed, 7, self.game));
        (state, cpu)
    }

    fn broadcast(&self, msg: &ServerMessage) {
        if self.shared.frames.receiver_count() > 0 {
            let _ = self.shared.frames.send(to_text(msg));
        }
    }

    fn finish_recording(&mut self) {
        let Some(rec) = self.recording.take() else {
            return;
        };
        let saved = rec
            .path
            .parent()
            .map_or(Ok(()), std::fs::create_dir_all)
            .map_err(pixmimic_core::Error::from)
            .and_then(|_| rec.episode.save(&rec.path));
        let msg = match saved {
            Ok(()) => {
                log::info!("recorded {} frames to {}", rec.episode.len(), rec.path.display());
                ServerMessage::Recorded {
                    tick: self.clock,
                    path: rec.path.display().to_string(),
                    frames: rec.episode.len(),
                }
            }
            Err(e) => ServerMessage::Error {
                message: format!("saving {}: {e}", rec.path.display()),
            },
        };
        self.broadcast(&msg);
    }

    fn apply_commands(&mut self) {
        let commands = std::mem::take(&mut *self.shared.commands.lock().expect("command queue"));
        for c in commands {
            match c {
                Command::Mode(m) => {
                    self.mode = m;
                    *self.shared.mode.lock().expect("mode") = m;
                }
                Command::RecordStart { path, ticks } => {
                    self.finish_recording();
                    self.recording = Some(Recording {
                        episode: Episode::new(NATIVE_WIDTH, NATIVE_HEIGHT, self.cfg.arena.tick_rate),
                        path,
                        remaining: ticks,
                    });
                }
                Command::RecordStop => self.finish_recording(),
            }
        }
    }

    /// One tick: choose both actions, publish the frame, advance the world.
    fn tick(&mut self, state: &mut GameState, cpu: &mut CpuPlayer) {
        self.apply_commands();
        let human = self.shared.input.lock().expect("input mailbox").unwrap_or(ActionClass::None);
        let mut scores = Vec::new();
        let a1 = match (self.mode, self.agent.as_mut()) {
            (ControlMode::Agent, Some(agent)) => {
                let a = agent.act(state, 0);
                scores = agent.last_scores.clone();
                a
            }
            (ControlMode::Takeover, Some(agent)) => {
                // The agent keeps watching so its scores stay live.
                agent.act(state, 0);
                scores = agent.last_scores.clone();
                human
            }
            _ => human,
        };
        let a2 = cpu.act(state, 1);
        let frame = render(state, NATIVE_WIDTH, NATIVE_HEIGHT);
        if let Some(rec) = self.recording.as_mut() {
            if let Err(e) = rec.episode.push(self.clock as u32, &frame, a1) {
                log::error!("recording dropped: {e}");
                self.recording = None;
            } else if let Some(n) = rec.remaining.as_mut() {
                *n = n.saturating_sub(1);
                if *n == 0 {
                    self.finish_recording();
                }
            }
        }
        if self.shared.frames.receiver_count() > 0 {
            self.broadcast(&ServerMessage::Frame {
                tick: self.clock,
                rgb_base64: base64::engine::general_purpose::STANDARD.encode(&frame.data),
                scores,
                mode: self.mode,
            });
        }
        state.advance(a1, a2).expect("match in progress");
        for e in state.events.clone() {
            if let ArenaEvent::Ko { fighter, stocks_left } = e {
                self.broadcast(&ServerMessage::MatchEvent {
                    tick: self.clock,
                    event: MatchEventKind::Ko,
                    payload: serde_json::json!({ "fighter": fighter, "stocks_left": stocks_left }),
                });
            }
        }
        self.clock += 1;
    }

    fn run(mut self) {
        let period = Duration::from_secs_f64(1.0 / self.shared.tick_rate as f64);
        let mut next = Instant::now();
        while !self.shared.stop.load(Ordering::Relaxed) {
            let (mut state, mut cpu) = self.new_match();
            while !state.match_over && !self.shared.stop.load(Ordering::Relaxed) {
                self.tick(&mut state, &mut cpu);
                next += period;
                let now = Instant::now();
                if next > now {
                    std::thread::sleep(next - now);
                } else {
                    // Behind schedule: carry on from now rather than bursting.
                    next = now;
                }
            }
            if state.match_over {
                let f = &state.fighters;
                self.broadcast(&ServerMessage::MatchEvent {
                    tick: self.clock,
                    event: MatchEventKind::End,
                    payload: serde_json::json!({
                        "game": self.game,
                        "ticks": state.tick,
                        "damage_percent": [f[0].damage_percent, f[1].damage_percent],
                        "stocks": [f[0].stocks, f[1].stocks],
                    }),
                });
                self.game += 1;
            }
        }
        self.finish_recording();
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

fn handle_client(shared: &Shared, text: &str, last_input: &mut Option<u64>) -> Result<(), String> {
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    match msg {
        ClientMessage::Input { tick, class_id } => {
            let class = ActionClass::from_id(class_id as usize)
                .ok_or_else(|| format!("class_id {class_id} outside 0..{ACTION_COUNT}"))?;
            if last_input.is_some_and(|t| tick < t) {
                return Err(format!("input tick {tick} went backwards"));
            }
            *last_input = Some(tick);
            *shared.input.lock().expect("input mailbox") = Some(class);
        }
        ClientMessage::Mode { mode } => {
            if mode != ControlMode::Human && !shared.agent_available {
                return Err("no checkpoint loaded; only human mode is available".into());
            }
            shared.commands.lock().expect("command queue").push(Command::Mode(mode));
        }
        ClientMessage::Record { action: RecordAction::Start, path, ticks } => {
            let path = path.ok_or("record start needs a path")?;
            let path = recording_path(&shared.record_dir, &path)?;
            if ticks == Some(0) {
                return Err("record ticks must be positive".into());
            }
            shared
                .commands
                .lock()
                .expect("command queue")
                .push(Command::RecordStart { path, ticks });
        }
        ClientMessage::Record { action: RecordAction::Stop, .. } => {
            shared.commands.lock().expect("command queue").push(Command::RecordStop);
        }
    }
    Ok(())
}

async fn connection(mut socket: WebSocket, shared: Arc<Shared>) {
    let mut frames = shared.frames.subscribe();
    let hello = ServerMessage::Hello {
        classes: ActionClass::names().iter().map(|s| s.to_string()).collect(),
        resolution: [NATIVE_WIDTH, NATIVE_HEIGHT],
        tick_rate: shared.tick_rate,
        mode: *shared.mode.lock().expect("mode"),
        agent_available: shared.agent_available,
    };
    if socket.send(Message::Text(to_text(&hello).as_ref().into())).await.is_err() {
        return;
    }
    let mut last_input = None;
    loop {
        tokio::select! {
            out = frames.recv() => match out {
                Ok(text) => {
                    if socket.send(Message::Text(text.as_ref().into())).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => log::debug!("client lagging, {n} messages dropped"),
                Err(broadcast::error::RecvError::Closed) => break,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    if let Err(message) = handle_client(&shared, text.as_str(), &mut last_input) {
                        let err = to_text(&ServerMessage::Error { message });
                        if socket.send(Message::Text(err.as_ref().into())).await.is_err() {
                            break;
                        }
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// A running gateway. Dropping it does not stop it; call `shutdown`.
pub struct Gateway {
    pub addr: SocketAddr,
    shared: Arc<Shared>,
    sim: Option<JoinHandle<()>>,
    server: tokio::task::JoinHandle<()>,
}

impl Gateway {
    pub async fn shutdown(mut self) {
        self.shared.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.sim.take() {
            let _ = tokio::task::spawn_blocking(move || h.join()).await;
        }
        self.server.abort();
    }
}

fn build_agent(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Option<Agent>, CliError> {
    if checkpoint.is_none() {
        return Ok(None);
    }
    let ckpt = load_model(checkpoint)?;
    let manifest = load_manifest(cfg)?;
    let mean = matching_mean(cfg, &manifest, &ckpt)?;
    let agent_cfg = AgentConfig {
        top_k: cfg.top_k,
        bias: cfg.bias_vector()?,
        seed: derive_seed(cfg.seed, 9, 0),
        stack: cfg.stack(),
    };
    Ok(Some(Agent::new(ckpt.spec, ckpt.params, mean, agent_cfg)?))
}

/// Binds `127.0.0.1:port` (0 picks a free port) and starts the simulation.
pub async fn start(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Gateway, CliError> {
    let agent = build_agent(cfg, checkpoint)?;
    let mode = match (cfg.serve_mode, &agent) {
        (ControlMode::Human, _) | (_, None) => ControlMode::Human,
        (m, Some(_)) => m,
    };
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", cfg.port)).await?;
    let addr = listener.local_addr()?;
    let (frames, _) = broadcast::channel(FRAME_BACKLOG);
    let shared = Arc::new(Shared {
        input: Mutex::new(None),
        commands: Mutex::new(Vec::new()),
        frames,
        stop: AtomicBool::new(false),
        agent_available: agent.is_some(),
        mode: Mutex::new(mode),
        record_dir: cfg.output.join("recordings"),
        tick_rate: cfg.arena.tick_rate,
    });
    let sim = Simulation {
        cfg: cfg.clone(),
        shared: shared.clone(),
        agent,
        cpu_level: CpuLevel::new(cfg.cpu_level)?,
        mode,
        clock: 0,
        game: 0,
        recording: None,
    };
    let sim = std::thread::Builder::new()
        .name("arena-clock".into())
        .spawn(move || sim.run())?;
    if !cfg.static_dir.is_dir() {
        log::warn!("static directory {} not found; only /ws is served", cfg.static_dir.display());
    }
    let app = Router::new()
        .route("/ws", get(ws_handler))
        .fallback_service(ServeDir::new(&cfg.static_dir))
        .with_state(shared.clone());
    let server = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("gateway stopped: {e}");
        }
    });
    Ok(Gateway {
        addr,
        shared,
        sim: Some(sim),
        server,
    })
}

/// `serve` subcommand: runs until interrupted.
pub fn serve_blocking(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let gw = start(cfg, checkpoint).await?;
        log::info!("serving on http://{} (websocket at /ws)", gw.addr);
        tokio::signal::ctrl_c().await?;
        gw.shutdown().await;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"input","tick":4,"class_id":1}"#).unwrap();
        assert_eq!(m, ClientMessage::Input { tick: 4, class_id: 1 });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"mode","mode":"takeover"}"#).unwrap();
        assert_eq!(m, ClientMessage::Mode { mode: ControlMode::Takeover });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"record","action":"stop"}"#).unwrap();
        assert!(matches!(m, ClientMessage::Record { action: RecordAction::Stop, .. }));
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"input","tick":4,"class_id":1,"x":0}"#).is_err());
    }

    #[test]
    fn recording_paths_stay_inside() {
        let dir = Path::new("/srv/rec");
        assert_eq!(recording_path(dir, "a/b.pxep").unwrap(), dir.join("a/b.pxep"));
        for bad in ["../x", "/etc/x", "", "a/../../x"] {
            assert!(recording_path(dir, bad).is_err(), "{bad}");
        }
    }
}
