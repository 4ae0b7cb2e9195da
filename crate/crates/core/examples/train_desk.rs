// Trains the goal policy with the small desk preset, then compares its
// greedy return against the random-goal controller on fresh episodes.
//
//     cargo run --release --example train_desk            # 60k steps, ~2 min
//     FOLLOWAHEAD_STEPS=5000 cargo run --release --example train_desk

use std::sync::Arc;

use followahead::config::Config;
use followahead::controller::RandomGoalController;
use followahead::rl::trainer::{evaluate_controller, evaluate_policy, train, TrainSetup};

fn main() -> followahead::Result<()> {
    let mut cfg = Config::from_toml(include_str!("../config/desk.toml"))?;
    if let Ok(s) = std::env::var("FOLLOWAHEAD_STEPS") {
        cfg.train.total_steps = s.parse().map_err(|_| followahead::Error::Config("FOLLOWAHEAD_STEPS".into()))?;
        cfg.train.noise_decay_steps = cfg.train.total_steps;
    }
    let setup = TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library()?),
        seed: 1,
    };
    let started = std::time::Instant::now();
    let (agent, report) = train(&cfg.train, &setup)?;
    println!("trained {} steps in {:.0?}", report.steps, started.elapsed());
    for p in report.curve.iter().step_by(5) {
        println!("  step {:6}  exploiter return {:7.2} +- {:5.2}", p.step, p.reward, p.std);
    }

    let fresh = TrainSetup { seed: 999, ..setup };
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let trained = mean(evaluate_policy(&agent.actor, cfg.train.mode, 1, 30, &fresh)?);
    let mut random = RandomGoalController::new(cfg.planner, 5);
    let baseline = mean(evaluate_controller(&mut random, 1, 30, &fresh)?);
    println!("mean return over 30 fresh episodes: trained {trained:.2}, random goals {baseline:.2}");
    Ok(())
}
