use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use followahead::baseline_hc::HcConfig;
use followahead::bridge::{bind_bridge, recording_path, serve_bridge, BridgeConfig, BridgeContext, Frame, ServerMessage};
use followahead::eval::ControllerSpec;
use followahead::human_motion::{load_trajectory, TrajectoryLibrary};
use followahead::planner::PlannerConfig;
use followahead::sim::EpisodeConfig;

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

struct Server {
    port: u16,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<followahead::Result<()>>>,
    cfg: BridgeConfig,
    _dir: tempfile::TempDir,
}

impl Server {
    fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let cfg = BridgeConfig {
            record_dir: dir.path().to_path_buf(),
            frame_hz: 10.0,
            ..BridgeConfig::default()
        };
        let ctx = BridgeContext::new(
            cfg.clone(),
            EpisodeConfig::default(),
            PlannerConfig::default(),
            Arc::new(TrajectoryLibrary::bundled()),
            vec![ControllerSpec::Hc(HcConfig::default()), ControllerSpec::Stationary],
            7,
        )
        .unwrap();
        let listener = bind_bridge(0).unwrap();
        let port = listener.local_addr().unwrap().port();
        let stop = Arc::new(AtomicBool::new(false));
        let s = stop.clone();
        let handle = std::thread::spawn(move || serve_bridge(listener, ctx, s));
        Self {
            port,
            stop,
            handle: Some(handle),
            cfg,
            _dir: dir,
        }
    }

    fn connect(&self) -> Client {
        let (ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{}", self.port)).unwrap();
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        }
        ws
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            h.join().unwrap().unwrap();
        }
    }
}

fn read(ws: &mut Client) -> ServerMessage {
    let msg = ws.read().unwrap();
    serde_json::from_str(msg.to_text().unwrap()).unwrap()
}

fn send(ws: &mut Client, text: &str) {
    ws.send(Message::text(text)).unwrap();
}

/// Next non-frame message, with the frames seen before it.
fn reply(ws: &mut Client) -> (ServerMessage, Vec<Frame>) {
    let mut frames = Vec::new();
    loop {
        match read(ws) {
            ServerMessage::Frame(f) => frames.push(f),
            other => return (other, frames),
        }
    }
}

fn frames_for(ws: &mut Client, d: Duration) -> Vec<Frame> {
    let until = Instant::now() + d;
    let mut out = Vec::new();
    while Instant::now() < until {
        if let ServerMessage::Frame(f) = read(ws) {
            out.push(f);
        }
    }
    out
}

#[test]
fn frames_stream_at_the_configured_rate() {
    let server = Server::start();
    let mut ws = server.connect();
    let frames = frames_for(&mut ws, Duration::from_secs(2));
    assert!(frames.len() >= 10, "{} frames in 2 s", frames.len());
    assert!(frames.windows(2).all(|w| w[1].step == w[0].step + 1));
    let f = &frames[0];
    assert!((f.distance - server.cfg.start_distance).abs() < 0.3);
    assert!(f.goal.is_none());

    // the wire format carries the documented keys
    let text = serde_json::to_string(&ServerMessage::Frame(f.clone())).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["type", "step", "human", "robot", "D", "alpha_deg", "reward", "goal"] {
        assert!(v.get(key).is_some(), "missing {key} in {text}");
    }
}

#[test]
fn person_commands_move_the_person_and_bad_input_keeps_the_session() {
    let server = Server::start();
    let mut ws = server.connect();
    let h0 = frames_for(&mut ws, Duration::from_millis(200)).pop().unwrap().human;
    send(&mut ws, r#"{"type":"cmd","v":0.8,"omega":0.0}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Ack { .. }));
    let h1 = frames_for(&mut ws, Duration::from_millis(1500)).pop().unwrap().human;
    let moved = (h1.x - h0.x).hypot(h1.y - h0.y);
    assert!(moved > 0.5, "person moved only {moved} m");

    for bad in ["not json", r#"{"type":"cmd","v":"fast"}"#, r#"{"type":"teleport"}"#, r#"{"type":"cmd","v":1,"omega":0,"extra":2}"#] {
        send(&mut ws, bad);
        let (msg, _) = reply(&mut ws);
        assert!(matches!(msg, ServerMessage::Error { .. }), "{bad} gave {msg:?}");
    }
    send(&mut ws, r#"{"type":"select_controller","name":"nobody"}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Error { .. }));
    send(&mut ws, r#"{"type":"select_controller","name":"stationary"}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Ack { .. }));
    // still streaming
    assert!(frames_for(&mut ws, Duration::from_millis(500)).len() >= 3);
}

#[test]
fn recordings_are_saved_and_reload() {
    let server = Server::start();
    let mut ws = server.connect();
    send(&mut ws, r#"{"type":"record","action":"stop"}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Error { .. }));
    send(&mut ws, r#"{"type":"record","action":"start","name":"../escape"}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Error { .. }));

    send(&mut ws, r#"{"type":"record","action":"start","name":"hall_walk"}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Ack { .. }));
    send(&mut ws, r#"{"type":"cmd","v":0.7,"omega":0.3}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Ack { .. }));
    frames_for(&mut ws, Duration::from_millis(1200));
    send(&mut ws, r#"{"type":"record","action":"stop"}"#);
    let (msg, _) = reply(&mut ws);
    assert!(matches!(msg, ServerMessage::Ack { .. }), "{msg:?}");

    let traj = load_trajectory(&recording_path(&server.cfg, "hall_walk")).unwrap();
    assert!(traj.points.len() >= 8);
    assert!(traj.length() > 0.4);

    send(&mut ws, r#"{"type":"record","action":"start","name":"hall_walk"}"#);
    assert!(matches!(reply(&mut ws).0, ServerMessage::Error { .. }));
}
