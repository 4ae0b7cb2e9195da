// Learning curves for the three ablation variants: the goal policy with
// and without the curriculum, and the end-to-end velocity policy. Each run
// writes one curve file.
//
//     cargo run --release --example ablation_curves                  # 3 x 3 runs of 18k steps
//     FOLLOWAHEAD_STEPS=3000 cargo run --release --example ablation_curves

use std::sync::Arc;

use followahead::config::Config;
use followahead::eval::ablation::{ablation_run, final_moving_average, parse_curve, Variant};
use followahead::rl::trainer::TrainSetup;

fn main() -> followahead::Result<()> {
    let mut cfg = Config::from_toml(include_str!("../config/desk.toml"))?;
    if let Ok(s) = std::env::var("FOLLOWAHEAD_STEPS") {
        cfg.ablation.total_steps = s.parse().map_err(|_| followahead::Error::Config("FOLLOWAHEAD_STEPS".into()))?;
    }
    let setup = TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library()?),
        seed: 0,
    };
    let out = std::env::temp_dir().join("followahead_ablation");
    let runs = ablation_run(&cfg.train, &cfg.ablation, &setup, &out)?;

    for v in Variant::ALL {
        let finals: Vec<String> = runs
            .iter()
            .filter(|r| r.variant == v)
            .map(|r| {
                let rewards: Vec<f64> = r.curve.iter().map(|p| p.reward).collect();
                let fin = final_moving_average(&rewards, cfg.ablation.final_window).unwrap_or(f64::NAN);
                format!("seed {} {:7.2}", r.seed, fin)
            })
            .collect();
        println!("{:20} {}", v.as_str(), finals.join("   "));
    }
    let first = &runs[0];
    let rows = parse_curve(&std::fs::read_to_string(&first.file)?)?;
    println!("\n{} has {} points; last at step {}", first.file.display(), rows.len(), rows.last().map_or(0, |r| r.0));
    Ok(())
}
