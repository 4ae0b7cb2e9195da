// Starts the websocket bridge on a free local port and talks to it the way
// the browser UI does: steer the person, switch controller, record a walk.
//
//     cargo run --release --example bridge_client

use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use followahead::baseline_hc::HcConfig;
use followahead::bridge::{bind_bridge, serve_bridge, BridgeConfig, BridgeContext, ServerMessage};
use followahead::eval::ControllerSpec;
use followahead::human_motion::{load_trajectory, TrajectoryLibrary};
use followahead::planner::PlannerConfig;
use followahead::sim::EpisodeConfig;

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn bridge_err<E: std::fmt::Display>(e: E) -> followahead::Error {
    followahead::Error::Bridge(e.to_string())
}

fn send(ws: &mut Client, json: &str) -> followahead::Result<()> {
    ws.send(Message::text(json)).map_err(bridge_err)
}

/// Reads messages until a reply that is not a frame arrives, printing the
/// frames seen on the way.
fn next_reply(ws: &mut Client) -> followahead::Result<ServerMessage> {
    loop {
        let text = ws.read().map_err(bridge_err)?.into_text().map_err(bridge_err)?;
        match serde_json::from_str::<ServerMessage>(text.as_str()).map_err(bridge_err)? {
            ServerMessage::Frame(f) => println!(
                "  frame {:3}  person ({:5.2},{:5.2})  robot ({:5.2},{:5.2})  D {:.2}  alpha {:6.1}",
                f.step, f.human.x, f.human.y, f.robot.x, f.robot.y, f.distance, f.alpha_deg
            ),
            other => return Ok(other),
        }
    }
}

fn watch(ws: &mut Client, secs: f64) -> followahead::Result<()> {
    let until = Instant::now() + Duration::from_secs_f64(secs);
    while Instant::now() < until {
        if let ServerMessage::Frame(f) = serde_json::from_str(ws.read().map_err(bridge_err)?.to_text().map_err(bridge_err)?).map_err(bridge_err)? {
            println!("  frame {:3}  D {:.2}  alpha {:6.1}  reward {:6.3}", f.step, f.distance, f.alpha_deg, f.reward);
        }
    }
    Ok(())
}

fn main() -> followahead::Result<()> {
    let record_dir = std::env::temp_dir().join("followahead_bridge_recordings");
    let cfg = BridgeConfig { record_dir: record_dir.clone(), ..BridgeConfig::default() };
    let ctx = BridgeContext::new(
        cfg.clone(),
        EpisodeConfig::default(),
        PlannerConfig::default(),
        Arc::new(TrajectoryLibrary::bundled()),
        vec![ControllerSpec::Hc(HcConfig::default()), ControllerSpec::Stationary],
        1,
    )?;
    let listener = bind_bridge(0)?;
    let port = listener.local_addr()?.port();
    let stop = Arc::new(AtomicBool::new(false));
    let server = {
        let stop = stop.clone();
        std::thread::spawn(move || serve_bridge(listener, ctx, stop))
    };

    let (mut ws, _) = tungstenite::connect(format!("ws://127.0.0.1:{port}")).map_err(bridge_err)?;
    let name = format!("example_walk_{}", std::process::id());
    let _ = std::fs::remove_file(followahead::bridge::recording_path(&cfg, &name));

    println!("walk forward while recording");
    send(&mut ws, &format!(r#"{{"type":"record","action":"start","name":"{name}"}}"#))?;
    println!("-> {:?}", next_reply(&mut ws)?);
    send(&mut ws, r#"{"type":"cmd","v":0.8,"omega":0.0}"#)?;
    println!("-> {:?}", next_reply(&mut ws)?);
    watch(&mut ws, 1.5)?;

    println!("turn left");
    send(&mut ws, r#"{"type":"cmd","v":0.6,"omega":0.6}"#)?;
    println!("-> {:?}", next_reply(&mut ws)?);
    watch(&mut ws, 1.5)?;

    send(&mut ws, r#"{"type":"record","action":"stop"}"#)?;
    println!("-> {:?}", next_reply(&mut ws)?);
    send(&mut ws, r#"{"type":"select_controller","name":"E2E"}"#)?;
    println!("-> {:?}", next_reply(&mut ws)?);
    send(&mut ws, r#"{"type":"warp","x":3}"#)?;
    println!("-> {:?}", next_reply(&mut ws)?);
    let _ = ws.close(None);

    stop.store(true, Ordering::Relaxed);
    server.join().map_err(|_| bridge_err("server thread panicked"))??;
    let traj = load_trajectory(&followahead::bridge::recording_path(&cfg, &name))?;
    println!("recorded {} waypoints, {:.2} m of walking, into {}", traj.points.len(), traj.length(), record_dir.display());
    Ok(())
}
