// Saves a short training run to a checkpoint, loads it back, and drives
// the straight scenario with the restored goal policy.
//
//     cargo run --release --example checkpoint_roundtrip

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use followahead::config::Config;
use followahead::controller::PolicyController;
use followahead::eval::{default_scenarios, find_scenario, run_scenario, ScriptParams};
use followahead::rl::checkpoint::Checkpoint;
use followahead::rl::trainer::{train, TrainSetup};

fn main() -> followahead::Result<()> {
    let mut cfg = Config::from_toml(include_str!("../config/desk.toml"))?;
    cfg.train.total_steps = 3_000;
    let setup = TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library()?),
        seed: 7,
    };
    let (agent, report) = train(&cfg.train, &setup)?;

    let path = std::env::temp_dir().join("followahead_example.ckpt");
    Checkpoint::from_agent(&agent, cfg.train.mode, report.steps, report.level, ChaCha8Rng::seed_from_u64(7)).save(&path)?;
    let restored = Checkpoint::load(&path)?;
    println!(
        "{}: {:?} policy after {} steps, actor layers {:?}, {} bytes",
        path.display(),
        restored.mode,
        restored.step,
        restored.actor.sizes(),
        std::fs::metadata(&path)?.len()
    );
    assert_eq!(restored.actor.params(), agent.actor.params());

    let mut policy = PolicyController::new(restored.actor, restored.mode, cfg.planner)?;
    let suite = default_scenarios(&ScriptParams::default());
    let log = run_scenario(find_scenario(&suite, "straight_ahead")?, &mut policy, &cfg.episode, &setup.library, 1)?;
    let ret: f64 = log.records.iter().map(|r| r.reward).sum();
    println!("restored policy on straight_ahead: {} steps, return {ret:.2}", log.len());
    Ok(())
}
