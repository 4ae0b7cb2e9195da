// Writes an episode log, reads it back from disk and recomputes the
// metrics from the file alone.
//
//     cargo run --example replay_log

use std::io::BufReader;
use std::sync::Arc;

use followahead::baseline_hc::{HcConfig, HcController};
use followahead::eval::{compute_metrics, default_scenarios, emit_table, find_scenario, run_scenario, ScriptParams};
use followahead::human_motion::TrajectoryLibrary;
use followahead::planner::PlannerConfig;
use followahead::sim::{EpisodeConfig, EpisodeLog};

fn main() -> followahead::Result<()> {
    let episode = EpisodeConfig::default();
    let library = Arc::new(TrajectoryLibrary::bundled());
    let suite = default_scenarios(&ScriptParams::default());
    let mut hc = HcController::new(HcConfig::default(), PlannerConfig::default(), episode.dt);
    let log = run_scenario(find_scenario(&suite, "turning_inside")?, &mut hc, &episode, &library, 2)?;

    let path = std::env::temp_dir().join("followahead_turning_inside.csv");
    log.write_to(std::fs::File::create(&path)?)?;
    let text = std::fs::read_to_string(&path)?;
    println!("{}:", path.display());
    for line in text.lines().take(4) {
        println!("  {line}");
    }

    let back = EpisodeLog::read_from(BufReader::new(std::fs::File::open(&path)?))?;
    let live = compute_metrics("turning_inside", "HC", std::slice::from_ref(&log), 0.99)?;
    let replayed = compute_metrics("turning_inside", "HC", std::slice::from_ref(&back), 0.99)?;
    print!("\n{}", emit_table(&[replayed.clone()])?);
    println!("same table as the live run: {}", emit_table(&[live])? == emit_table(&[replayed])?);
    Ok(())
}
