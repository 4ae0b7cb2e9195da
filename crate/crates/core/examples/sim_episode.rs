// One training-style episode driven by a fixed command, showing the
// observation vector and how episodes end.
//
//     cargo run --example sim_episode

use std::sync::Arc;

use followahead::env::FollowEnv;
use followahead::human_motion::{MotionCommand, TrajectoryLibrary};
use followahead::sim::{EpisodeConfig, OBS_DIM};

fn main() -> followahead::Result<()> {
    let cfg = EpisodeConfig::default();
    let mut env = FollowEnv::new(cfg, Arc::new(TrajectoryLibrary::bundled()), 11)?;
    let p = env.reset(1)?;
    let w = env.world();
    println!("spawn: D={:.2} m  alpha={:.1} deg", w.distance(), w.alpha().to_degrees());
    println!("observation has {OBS_DIM} values; the current robot pose in the person frame (scaled) is {:?}", &p.observation.as_slice()[..3]);

    // a robot that just drives forward at 0.5 m/s
    let mut total = 0.0;
    loop {
        let (out, _) = env.step(MotionCommand { v: 0.5, omega: 0.0 });
        total += out.reward.total;
        let w = env.world();
        if w.t % 10 == 0 || out.end.is_some() {
            println!(
                "t={:3}  D={:5.2}  alpha={:7.1}  r={:6.3}",
                w.t,
                out.reward.distance,
                w.alpha().to_degrees(),
                out.reward.total
            );
        }
        if let Some(end) = out.end {
            println!("ended by {} after {} steps, return {total:.2}", end.as_str(), w.t);
            break;
        }
    }
    Ok(())
}
