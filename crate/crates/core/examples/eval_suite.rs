// Runs the full scenario suite for the baselines and prints the metrics
// table. Logs and the table land in a temporary directory.
//
//     cargo run --release --example eval_suite

use std::sync::Arc;

use followahead::baseline_hc::HcConfig;
use followahead::eval::{default_scenarios, run_suite, write_eval_outputs, ControllerSpec, EvalContext, ScriptParams};
use followahead::human_motion::TrajectoryLibrary;
use followahead::planner::PlannerConfig;
use followahead::sim::EpisodeConfig;

fn main() -> followahead::Result<()> {
    let ctx = EvalContext {
        episode: EpisodeConfig::default(),
        planner: PlannerConfig::default(),
        library: Arc::new(TrajectoryLibrary::bundled()),
        gamma: 0.99,
        threads: 0,
    };
    let scenarios = default_scenarios(&ScriptParams::default());
    let controllers = [ControllerSpec::Hc(HcConfig::default()), ControllerSpec::Random, ControllerSpec::Stationary];
    let (rows, episodes) = run_suite(&scenarios, &controllers, &[1, 2, 3], &ctx)?;

    let out = std::env::temp_dir().join("followahead_eval_suite");
    let table = write_eval_outputs(&rows, &episodes, &out)?;
    print!("{table}");
    println!("\n{} episode logs in {}", episodes.len(), out.join("logs").display());
    Ok(())
}
