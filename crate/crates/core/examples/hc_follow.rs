// The hand-crafted follower on the straight scenario: an EKF tracks the
// noisy person pose and the planner drives to a point ahead of them.
//
//     cargo run --example hc_follow

use std::sync::Arc;

use followahead::baseline_hc::{HcConfig, HcController};
use followahead::eval::{compute_metrics, default_scenarios, find_scenario, run_scenario, ScriptParams};
use followahead::human_motion::TrajectoryLibrary;
use followahead::planner::PlannerConfig;
use followahead::sim::EpisodeConfig;

fn main() -> followahead::Result<()> {
    let episode = EpisodeConfig::default();
    let library = Arc::new(TrajectoryLibrary::bundled());
    let suite = default_scenarios(&ScriptParams::default());
    let mut hc = HcController::new(HcConfig::default(), PlannerConfig::default(), episode.dt);

    for name in ["straight_ahead", "straight_behind", "u_turn_ahead_far_left"] {
        let sc = find_scenario(&suite, name)?;
        let log = run_scenario(sc, &mut hc, &episode, &library, 3)?;
        let row = compute_metrics(name, "HC", std::slice::from_ref(&log), 0.99)?;
        println!(
            "{name:22} {} steps, ended by {:9}  D {:.2} +- {:.2}  alpha {:6.1} +- {:5.1}  reward {:6.2}",
            log.len(),
            log.end().map_or("-", |e| e.as_str()),
            row.mean_d,
            row.std_d,
            row.mean_alpha_deg,
            row.std_alpha_deg,
            row.reward
        );
    }
    if let Some(f) = hc.filter() {
        let p = f.pose();
        println!("final person estimate ({:.2}, {:.2}, {:.1} deg)", p.x, p.y, p.phi.to_degrees());
    }
    Ok(())
}
