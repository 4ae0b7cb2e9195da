//! Websocket bridge for driving the simulated person live.
//!
//! The server owns the simulation. Each connection gets its own session,
//! stepped by a single loop that streams one `frame` message per step and
//! applies client messages between steps:
//!
//! ```text
//! server -> client  {"type":"frame","step":..,"human":{"x","y","phi"},"robot":{..},
//!                    "D":..,"alpha_deg":..,"reward":..,"goal":{"x","y"}|null}
//!                   {"type":"ack","detail":..}
//!                   {"type":"error","message":..}
//! client -> server  {"type":"cmd","v":..,"omega":..}
//!                   {"type":"record","action":"start"|"stop","name":..}
//!                   {"type":"select_controller","name":..}
//! ```
//!
//! A malformed or refused message gets an `error` reply and the session
//! carries on.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tungstenite::{Message, WebSocket};

use crate::controller::{Controller, Perception};
use crate::env::FollowEnv;
use crate::error::{Error, Result};
use crate::eval::ControllerSpec;
use crate::geometry::Pose;
use crate::human_motion::{save_trajectory, MotionCommand, MotionPlan, TrajectoryFile, TrajectoryLibrary, Waypoint};
use crate::planner::PlannerConfig;
use crate::sim::{EpisodeConfig, EpisodeEnd, Placement, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub port: u16,
    /// Frames per second streamed to each client.
    pub frame_hz: f64,
    /// Controller driving the robot when a session opens.
    pub controller: String,
    /// Recorded trajectories are written here as `<name>.csv`.
    pub record_dir: PathBuf,
    pub person_max_v: f64,
    pub person_max_omega: f64,
    /// Robot placement when a session opens and after a termination.
    pub start_distance: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            port: 8765,
            frame_hz: 5.0,
            controller: "HC".into(),
            record_dir: PathBuf::from("recorded"),
            person_max_v: 1.0,
            person_max_omega: 1.5,
            start_distance: 1.5,
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.frame_hz > 0.0
            && self.frame_hz.is_finite()
            && self.person_max_v > 0.0
            && self.person_max_omega > 0.0
            && self.start_distance > 0.5
            && self.start_distance < 5.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid bridge config: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseMsg {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMsg {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u64,
    pub human: PoseMsg,
    pub robot: PoseMsg,
    #[serde(rename = "D")]
    pub distance: f64,
    pub alpha_deg: f64,
    pub reward: f64,
    pub goal: Option<PointMsg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(Frame),
    Ack { detail: String },
    Error { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cmd { v: f64, omega: f64 },
    Record { action: RecordAction, name: Option<String> },
    SelectController { name: String },
}

fn pose_msg(p: &Pose) -> PoseMsg {
    PoseMsg { x: p.x, y: p.y, phi: p.phi }
}

/// Everything a session needs, shared by all connections.
#[derive(Debug, Clone)]
pub struct BridgeContext {
    pub cfg: BridgeConfig,
    pub episode: EpisodeConfig,
    pub planner: PlannerConfig,
    pub library: Arc<TrajectoryLibrary>,
    /// Selectable controllers by name.
    pub controllers: BTreeMap<String, ControllerSpec>,
    pub seed: u64,
}

impl BridgeContext {
    pub fn new(
        cfg: BridgeConfig,
        episode: EpisodeConfig,
        planner: PlannerConfig,
        library: Arc<TrajectoryLibrary>,
        controllers: Vec<ControllerSpec>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let controllers: BTreeMap<_, _> = controllers.into_iter().map(|c| (c.name().to_string(), c)).collect();
        if !controllers.contains_key(&cfg.controller) {
            return Err(Error::Config(format!("bridge controller `{}` is not available", cfg.controller)));
        }
        Ok(Self {
            cfg,
            episode,
            planner,
            library,
            controllers,
            seed,
        })
    }
}

#[derive(Debug)]
struct Recording {
    name: String,
    start_step: u64,
    points: Vec<Waypoint>,
}

/// One live simulation: the person obeys the latest client command and the
/// selected controller drives the robot.
pub struct Session {
    ctx: BridgeContext,
    env: FollowEnv,
    controller: Box<dyn Controller>,
    controller_name: String,
    perception: Perception,
    person_cmd: MotionCommand,
    recording: Option<Recording>,
    step: u64,
    restarts: u64,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

impl Session {
    pub fn new(ctx: BridgeContext) -> Result<Self> {
        let episode = EpisodeConfig {
            max_steps: usize::MAX,
            ..ctx.episode
        };
        let mut env = FollowEnv::new(episode, ctx.library.clone(), ctx.seed)?;
        let name = ctx.cfg.controller.clone();
        let controller = ctx.controllers[&name].build(&ctx.planner, episode.dt, ctx.seed)?;
        let world = Self::start_world(&ctx.cfg, Pose::new(0.0, 0.0, 0.0));
        let perception = env.reset_with(world, MotionPlan::script(Vec::new()));
        Ok(Self {
            ctx,
            env,
            controller,
            controller_name: name,
            perception,
            person_cmd: MotionCommand::STOP,
            recording: None,
            step: 0,
            restarts: 0,
        })
    }

    fn start_world(cfg: &BridgeConfig, human: Pose) -> WorldState {
        let placement = Placement {
            distance: cfg.start_distance,
            alpha: 0.0,
            heading: 0.0,
        };
        WorldState::new(human, placement.robot_pose(&human))
    }

    pub fn world(&self) -> &WorldState {
        self.env.world()
    }

    pub fn controller_name(&self) -> &str {
        &self.controller_name
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    /// Times the robot was put back in front after a termination.
    pub fn restarts(&self) -> u64 {
        self.restarts
    }

    /// Applies one client message and returns the reply.
    pub fn handle_text(&mut self, text: &str) -> ServerMessage {
        let reply = serde_json::from_str::<ClientMessage>(text)
            .map_err(|e| Error::Bridge(format!("malformed message: {e}")))
            .and_then(|msg| self.handle(msg));
        match reply {
            Ok(detail) => ServerMessage::Ack { detail },
            Err(e) => {
                log::warn!("bridge: rejected {text:?}: {e}");
                ServerMessage::Error { message: e.to_string() }
            }
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Result<String> {
        match msg {
            ClientMessage::Cmd { v, omega } => {
                if !(v.is_finite() && omega.is_finite()) {
                    return Err(Error::Bridge("command must be finite".into()));
                }
                let c = &self.ctx.cfg;
                self.person_cmd = MotionCommand::new(
                    v.clamp(-c.person_max_v, c.person_max_v),
                    omega.clamp(-c.person_max_omega, c.person_max_omega),
                );
                Ok("cmd".into())
            }
            ClientMessage::SelectController { name } => {
                let spec = self
                    .ctx
                    .controllers
                    .get(&name)
                    .ok_or_else(|| Error::Bridge(format!("unknown controller `{name}`")))?;
                self.controller = spec.build(&self.ctx.planner, self.ctx.episode.dt, self.ctx.seed)?;
                self.controller_name = name.clone();
                Ok(format!("controller {name}"))
            }
            ClientMessage::Record { action: RecordAction::Start, name } => {
                if self.recording.is_some() {
                    return Err(Error::Bridge("already recording".into()));
                }
                let name = name.ok_or_else(|| Error::Bridge("record start needs a name".into()))?;
                if !valid_name(&name) {
                    return Err(Error::Bridge(format!("invalid trajectory name `{name}`")));
                }
                if self.record_path(&name).exists() {
                    return Err(Error::Bridge(format!("trajectory `{name}` already exists")));
                }
                let h = self.env.world().human;
                self.recording = Some(Recording {
                    name: name.clone(),
                    start_step: self.step,
                    points: vec![Waypoint { t: 0.0, x: h.x, y: h.y }],
                });
                Ok(format!("recording {name}"))
            }
            ClientMessage::Record { action: RecordAction::Stop, name } => {
                let rec = self.recording.take().ok_or_else(|| Error::Bridge("not recording".into()))?;
                if name.as_ref().is_some_and(|n| *n != rec.name) {
                    let msg = format!("recording is `{}`, not `{}`", rec.name, name.unwrap_or_default());
                    self.recording = Some(rec);
                    return Err(Error::Bridge(msg));
                }
                let path = self.record_path(&rec.name);
                let traj = TrajectoryFile::new(rec.name.clone(), rec.points)?;
                save_trajectory(&traj, &path)?;
                log::info!("bridge: saved {} ({} points, {:.2} m)", path.display(), traj.points.len(), traj.length());
                Ok(format!("saved {} points to {}", traj.points.len(), path.display()))
            }
        }
    }

    fn record_path(&self, name: &str) -> PathBuf {
        recording_path(&self.ctx.cfg, name)
    }

    /// Advances the simulation one step and returns the new frame. A
    /// too-close or too-far state puts the robot back in front of the person.
    pub fn tick(&mut self) -> Result<Frame> {
        let robot = self.env.world().robot;
        let decision = self.controller.act(&self.perception, &robot)?;
        let (outcome, perception) = self.env.step_with(decision.command, self.person_cmd);
        self.perception = perception;
        self.step += 1;
        let w = self.env.world();
        let frame = Frame {
            step: self.step,
            human: pose_msg(&w.human),
            robot: pose_msg(&w.robot),
            distance: outcome.reward.distance,
            alpha_deg: outcome.reward.alpha_deg,
            reward: outcome.reward.total,
            // only the learned goal is shown; the baselines keep theirs internal
            goal: decision
                .goal
                .filter(|_| self.controller_name == "LBGP")
                .map(|g| PointMsg { x: g.x, y: g.y }),
        };
        let human = w.human;
        if let Some(rec) = &mut self.recording {
            let t = (self.step - rec.start_step) as f64 * self.ctx.episode.dt;
            rec.points.push(Waypoint { t, x: human.x, y: human.y });
        }
        if matches!(outcome.end, Some(EpisodeEnd::TooClose | EpisodeEnd::TooFar)) {
            let world = Self::start_world(&self.ctx.cfg, human);
            self.perception = self.env.reset_with(world, MotionPlan::script(Vec::new()));
            self.controller.reset();
            self.restarts += 1;
        }
        Ok(frame)
    }
}

pub fn bind_bridge(port: u16) -> Result<TcpListener> {
    TcpListener::bind(("127.0.0.1", port)).map_err(|e| Error::Bridge(format!("cannot bind port {port}: {e}")))
}

/// Accepts connections until `stop` is set, running one session per
/// connection on its own thread.
pub fn serve_bridge(listener: TcpListener, ctx: BridgeContext, stop: Arc<AtomicBool>) -> Result<()> {
    listener.set_nonblocking(true)?;
    log::info!("bridge: listening on {}", listener.local_addr()?);
    std::thread::scope(|scope| {
        while !stop.load(Ordering::Relaxed) {
            match listener.accept() {
                Ok((stream, addr)) => {
                    log::info!("bridge: client {addr}");
                    let ctx = ctx.clone();
                    let stop = stop.clone();
                    scope.spawn(move || {
                        if let Err(e) = run_connection(stream, ctx, &stop) {
                            log::warn!("bridge: session {addr} ended: {e}");
                        }
                    });
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => std::thread::sleep(Duration::from_millis(20)),
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    })
}

fn ws_err(e: tungstenite::Error) -> Error {
    Error::Bridge(e.to_string())
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> Result<()> {
    let text = serde_json::to_string(msg).map_err(|e| Error::Bridge(e.to_string()))?;
    ws.send(Message::text(text)).map_err(ws_err)
}

fn run_connection(stream: TcpStream, ctx: BridgeContext, stop: &AtomicBool) -> Result<()> {
    stream.set_nonblocking(false)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| Error::Bridge(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(Duration::from_millis(5)))?;
    let period = Duration::from_secs_f64(1.0 / ctx.cfg.frame_hz);
    let mut session = Session::new(ctx)?;
    let mut next_frame = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let reply = session.handle_text(text.as_str());
                send(&mut ws, &reply)?;
            }
            Ok(Message::Binary(_)) => send(
                &mut ws,
                &ServerMessage::Error {
                    message: "binary messages are not supported".into(),
                },
            )?,
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(ws_err(e)),
        }
        if Instant::now() >= next_frame {
            let frame = session.tick()?;
            send(&mut ws, &ServerMessage::Frame(frame))?;
            next_frame += period;
        }
    }
    let _ = ws.close(None);
    Ok(())
}

/// Path a recording named `name` is saved to.
pub fn recording_path(cfg: &BridgeConfig, name: &str) -> PathBuf {
    cfg.record_dir.join(format!("{name}.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn context(dir: &Path) -> BridgeContext {
        BridgeContext::new(
            BridgeConfig {
                record_dir: dir.to_path_buf(),
                ..Default::default()
            },
            EpisodeConfig::default(),
            PlannerConfig::default(),
            Arc::new(TrajectoryLibrary::bundled()),
            vec![ControllerSpec::Hc(Default::default()), ControllerSpec::Stationary],
            3,
        )
        .unwrap()
    }

    #[test]
    fn frame_json_shape() {
        let frame = Frame {
            step: 4,
            human: PoseMsg { x: 1.0, y: 0.0, phi: 0.0 },
            robot: PoseMsg { x: 2.5, y: 0.0, phi: 0.0 },
            distance: 1.5,
            alpha_deg: 0.0,
            reward: 0.75,
            goal: None,
        };
        let v: serde_json::Value = serde_json::to_value(ServerMessage::Frame(frame)).unwrap();
        assert_eq!(v["type"], "frame");
        assert_eq!(v["D"], 1.5);
        assert_eq!(v["human"]["phi"], 0.0);
        assert!(v["goal"].is_null());
    }

    #[test]
    fn client_messages_parse() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"cmd","v":0.5,"omega":-0.2}"#).unwrap();
        assert_eq!(m, ClientMessage::Cmd { v: 0.5, omega: -0.2 });
        let m: ClientMessage = serde_json::from_str(r#"{"type":"record","action":"start","name":"a"}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Record {
                action: RecordAction::Start,
                name: Some("a".into())
            }
        );
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"cmd","v":"fast"}"#).is_err());
        assert!(serde_json::from_str::<ClientMessage>(r#"{"type":"jump"}"#).is_err());
    }

    #[test]
    fn forward_command_moves_the_person() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new(context(dir.path())).unwrap();
        assert!(matches!(s.handle_text(r#"{"type":"cmd","v":0.6,"omega":0}"#), ServerMessage::Ack { .. }));
        let mut last = 0.0;
        for _ in 0..10 {
            let f = s.tick().unwrap();
            assert!(f.human.x > last);
            last = f.human.x;
        }
        assert!((last - 1.2).abs() < 1e-9);
    }

    #[test]
    fn malformed_messages_keep_the_session() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new(context(dir.path())).unwrap();
        for bad in ["not json", r#"{"type":"cmd"}"#, r#"{"type":"select_controller","name":"nope"}"#] {
            assert!(matches!(s.handle_text(bad), ServerMessage::Error { .. }), "{bad}");
        }
        assert_eq!(s.controller_name(), "HC");
        assert_eq!(s.tick().unwrap().step, 1);
        assert!(matches!(
            s.handle_text(r#"{"type":"select_controller","name":"stationary"}"#),
            ServerMessage::Ack { .. }
        ));
        assert_eq!(s.controller_name(), "stationary");
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = Session::new(context(dir.path())).unwrap();
        assert!(matches!(
            s.handle_text(r#"{"type":"record","action":"stop","name":"x"}"#),
            ServerMessage::Error { .. }
        ));
        s.handle_text(r#"{"type":"cmd","v":0.5,"omega":0.3}"#);
        assert!(matches!(
            s.handle_text(r#"{"type":"record","action":"start","name":"../evil"}"#),
            ServerMessage::Error { .. }
        ));
        assert!(matches!(
            s.handle_text(r#"{"type":"record","action":"start","name":"loop1"}"#),
            ServerMessage::Ack { .. }
        ));
        assert!(s.is_recording());
        for _ in 0..15 {
            s.tick().unwrap();
        }
        assert!(matches!(
            s.handle_text(r#"{"type":"record","action":"stop","name":"loop1"}"#),
            ServerMessage::Ack { .. }
        ));
        let traj = crate::human_motion::load_trajectory(&recording_path(&s.ctx.cfg, "loop1")).unwrap();
        assert_eq!(traj.points.len(), 16);
        assert!((traj.length() - 15.0 * 0.5 * 0.2).abs() < 1e-2);
        assert!(matches!(
            s.handle_text(r#"{"type":"record","action":"start","name":"loop1"}"#),
            ServerMessage::Error { .. }
        ));
    }

    #[test]
    fn unknown_default_controller_is_a_config_error() {
        let err = BridgeContext::new(
            BridgeConfig {
                controller: "LBGP".into(),
                ..Default::default()
            },
            EpisodeConfig::default(),
            PlannerConfig::default(),
            Arc::new(TrajectoryLibrary::bundled()),
            vec![ControllerSpec::Stationary],
            0,
        );
        assert!(err.is_err());
    }
}
