//! Single-session teleoperation server.
//!
//! The simulation runs on its own thread at a fixed tick period. The
//! connection thread forwards every client line, in order, through an
//! unbounded queue, so commands are applied exactly once at the start of the
//! next tick. State snapshots go back through a small bounded queue and are
//! dropped when the client falls behind; replies use an unbounded queue and
//! are flushed before any state.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, Sender, SyncSender, TryRecvError, TrySendError};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tactigrasp::data::{write_dataset, DatasetHeader, Frame, Label, Scenario};
use tactigrasp::sim::{Catalog, DisturbanceEvent, DisturbanceKind, ObjectSpec, SimState, THETA_MAX_DEG, THETA_MIN_DEG};
use tactigrasp::stability::{GraspFeature, StabilityEstimator};
use tactigrasp::tactile::{render_taxels, TaxelFrame, TAXELS};
use tungstenite::{Message, WebSocket};

use crate::commands::Workspace;

/// Ticks between streamed states: 160 Hz simulation, 20 Hz stream.
pub const STATE_EVERY: u64 = 8;
/// Snapshots allowed to queue before new ones are dropped.
const STATE_QUEUE: usize = 4;
/// How long a socket read waits before the connection thread flushes output.
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ClientMsg {
    Cmd {
        theta_target: f64,
    },
    Disturb {
        kind: String,
        magnitude: f64,
        duration_s: f64,
    },
    Record {
        action: RecordAction,
        #[serde(default)]
        scenario: Option<String>,
    },
    Lift,
    Reset,
}

#[derive(Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum ServerMsg {
    State {
        t: f64,
        theta: f64,
        taxels: Vec<f64>,
        force_n: f64,
        fill_g: f64,
        dropped: bool,
        stable: bool,
    },
    Ack {
        seq: u64,
        #[serde(skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
    Error {
        seq: u64,
        reason: String,
    },
}

/// One client line, numbered in arrival order from 1.
struct Incoming {
    seq: u64,
    msg: std::result::Result<ClientMsg, String>,
}

struct Recording {
    scenario: Scenario,
    frames: Vec<Frame>,
}

struct Session {
    sim: SimState,
    object: ObjectSpec,
    seed: u64,
    noise: bool,
    estimator: Option<StabilityEstimator>,
    out_dir: PathBuf,
    prev: TaxelFrame,
    prev_theta: f64,
    last: TaxelFrame,
    stable: bool,
    recording: Option<Recording>,
    written: Vec<String>,
}

impl Session {
    fn new(object: ObjectSpec, seed: u64, noise: bool, estimator: Option<StabilityEstimator>, out_dir: PathBuf) -> Result<Self> {
        let sim = SimState::reset(object.clone(), seed)?;
        let frame = render_taxels(&sim, noise);
        Ok(Self {
            prev_theta: sim.gripper.theta_deg,
            sim,
            object,
            seed,
            noise,
            estimator,
            out_dir,
            prev: frame.clone(),
            last: frame,
            stable: false,
            recording: None,
            written: Vec::new(),
        })
    }

    fn apply(&mut self, msg: ClientMsg) -> Result<Option<String>> {
        match msg {
            ClientMsg::Cmd { theta_target } => {
                if !(THETA_MIN_DEG..=THETA_MAX_DEG).contains(&theta_target) {
                    bail!("theta_target must be within [{THETA_MIN_DEG}, {THETA_MAX_DEG}], got {theta_target}");
                }
                self.sim.set_target_angle(theta_target);
            }
            ClientMsg::Disturb {
                kind,
                magnitude,
                duration_s,
            } => {
                let kind = DisturbanceKind::parse(&kind)
                    .with_context(|| format!("unknown disturbance kind {kind:?} (water, pull, vibration)"))?;
                self.sim.inject_disturbance(DisturbanceEvent::new(kind, magnitude, duration_s))?;
            }
            ClientMsg::Record { action, scenario } => return self.record(action, scenario),
            ClientMsg::Lift => self.sim.lift(),
            ClientMsg::Reset => {
                if self.recording.is_some() {
                    bail!("stop the recording before resetting");
                }
                self.sim = SimState::reset(self.object.clone(), self.seed)?;
                self.prev = render_taxels(&self.sim, self.noise);
                self.last = self.prev.clone();
                self.prev_theta = self.sim.gripper.theta_deg;
                self.stable = false;
            }
        }
        Ok(None)
    }

    fn record(&mut self, action: RecordAction, scenario: Option<String>) -> Result<Option<String>> {
        match action {
            RecordAction::Start => {
                if self.recording.is_some() {
                    bail!("already recording");
                }
                let name = scenario.as_deref().unwrap_or("ga");
                let scenario = Scenario::parse(name)
                    .with_context(|| format!("unknown scenario {name:?} (gp, stab_pos, stab_neg, ga)"))?;
                self.recording = Some(Recording {
                    scenario,
                    frames: Vec::new(),
                });
                Ok(None)
            }
            RecordAction::Stop => {
                let rec = self.recording.take().context("not recording")?;
                if rec.frames.is_empty() {
                    bail!("recording is empty");
                }
                let header = DatasetHeader::new(rec.scenario.kind(), self.object.name.clone(), self.seed);
                let path = self.out_dir.join(rec.scenario.kind().as_str()).join(format!(
                    "{}_{}_rec{}.tsv",
                    self.object.name,
                    self.seed,
                    self.written.len() + 1
                ));
                write_dataset(&path, &header, &rec.frames)?;
                let p = path.display().to_string();
                self.written.push(p.clone());
                Ok(Some(p))
            }
        }
    }

    fn tick(&mut self) -> Result<()> {
        let slip_before = self.sim.slip_mm;
        self.sim.step();
        let frame = render_taxels(&self.sim, self.noise);
        let theta = self.sim.gripper.theta_deg;
        self.stable = match &self.estimator {
            Some(est) => est.is_stable(&GraspFeature::new(frame.values, theta, self.sim.end_effector_pose)?)?,
            None => !self.sim.dropped && self.sim.slip_mm == slip_before,
        };
        if let Some(rec) = &mut self.recording {
            let mut ds = [0.0; TAXELS];
            for (d, (c, p)) in ds.iter_mut().zip(frame.values.iter().zip(&self.prev.values)) {
                *d = c - p;
            }
            let label = if self.sim.dropped || self.sim.slip_mm > slip_before {
                Label::Unstable
            } else if self.sim.static_load_n() > 0.0 {
                Label::Stable
            } else {
                Label::Na
            };
            rec.frames.push(
                Frame {
                    t_tick: frame.t_tick,
                    s: frame.values,
                    theta_deg: theta,
                    pose: self.sim.end_effector_pose,
                    ds,
                    dtheta_deg: theta - self.prev_theta,
                    label,
                }
                .rounded(),
            );
        }
        self.prev = frame.clone();
        self.prev_theta = theta;
        self.last = frame;
        Ok(())
    }

    fn state(&self) -> ServerMsg {
        ServerMsg::State {
            t: self.sim.t_tick as f64,
            theta: self.sim.gripper.theta_deg,
            taxels: self.last.values.to_vec(),
            force_n: self.sim.contact_state().normal_force_n,
            fill_g: self.sim.fill_g,
            dropped: self.sim.dropped,
            stable: self.stable,
        }
    }
}

fn sim_loop(
    mut session: Session,
    period: Duration,
    commands: Receiver<Incoming>,
    replies: Sender<ServerMsg>,
    states: SyncSender<ServerMsg>,
) -> Result<(u64, Vec<String>)> {
    let mut next = Instant::now();
    loop {
        loop {
            match commands.try_recv() {
                Ok(Incoming { seq, msg }) => {
                    let reply = match msg.map_err(anyhow::Error::msg).and_then(|m| session.apply(m)) {
                        Ok(path) => ServerMsg::Ack { seq, path },
                        Err(e) => ServerMsg::Error {
                            seq,
                            reason: format!("{e:#}"),
                        },
                    };
                    let _ = replies.send(reply);
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ok((session.sim.t_tick, session.written)),
            }
        }
        session.tick()?;
        if session.sim.t_tick % STATE_EVERY == 0 {
            match states.try_send(session.state()) {
                Ok(()) | Err(TrySendError::Full(_)) => {}
                Err(TrySendError::Disconnected(_)) => return Ok((session.sim.t_tick, session.written)),
            }
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            // fell behind: do not try to catch up in a burst
            next = now;
        }
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMsg) -> Result<()> {
    ws.send(Message::text(serde_json::to_string(msg)?))?;
    Ok(())
}

fn connection_loop(
    ws: &mut WebSocket<TcpStream>,
    commands: Sender<Incoming>,
    replies: Receiver<ServerMsg>,
    states: Receiver<ServerMsg>,
) -> Result<()> {
    let mut seq = 0;
    loop {
        loop {
            match replies.try_recv() {
                Ok(m) => send(ws, &m)?,
                Err(TryRecvError::Empty) => break,
                // the simulation thread has stopped
                Err(TryRecvError::Disconnected) => return Ok(()),
            }
        }
        while let Ok(m) = states.try_recv() {
            send(ws, &m)?;
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    seq += 1;
                    let msg = serde_json::from_str::<ClientMsg>(line).map_err(|e| format!("malformed message: {e}"));
                    if commands.send(Incoming { seq, msg }).is_err() {
                        return Ok(());
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                seq += 1;
                let msg = Err("binary frames are not supported; send JSON text".to_string());
                if commands.send(Incoming { seq, msg }).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Close(_)) => {
                // let the close handshake complete
                while ws.flush().is_ok() && !matches!(ws.read(), Err(_)) {}
                return Ok(());
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn serve(ws: &Workspace, port: u16, object: &str, period: Duration, out: Option<PathBuf>) -> Result<Value> {
    let object = Catalog::builtin().require(object)?.clone();
    let estimator = ws.estimator_if_present()?;
    let out_dir = out.unwrap_or_else(|| ws.data_dir());
    let session = Session::new(object.clone(), ws.seed, ws.noise, estimator, out_dir)?;

    let listener = TcpListener::bind(("127.0.0.1", port)).with_context(|| format!("binding port {port}"))?;
    let addr = listener.local_addr()?;
    println!("listening on ws://{addr}");
    let (stream, peer) = listener.accept()?;
    let mut socket = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("websocket handshake with {peer}: {e}"))?;
    socket.get_ref().set_read_timeout(Some(POLL))?;
    socket.get_ref().set_nodelay(true)?;

    let (cmd_tx, cmd_rx) = mpsc::channel();
    let (reply_tx, reply_rx) = mpsc::channel();
    let (state_tx, state_rx) = mpsc::sync_channel(STATE_QUEUE);
    let sim = thread::spawn(move || sim_loop(session, period, cmd_rx, reply_tx, state_tx));
    let conn = connection_loop(&mut socket, cmd_tx, reply_rx, state_rx);
    let (ticks, recordings) = sim.join().map_err(|_| anyhow::anyhow!("simulation thread panicked"))??;
    conn?;
    Ok(json!({
        "object": object.name,
        "peer": peer.to_string(),
        "ticks": ticks,
        "recordings": recordings,
    }))
}
