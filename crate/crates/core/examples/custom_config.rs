// Loading a partial TOML configuration, inspecting the merged result and
// seeing what the validator rejects.
//
//     cargo run --example custom_config

use followahead::config::Config;

const OVERRIDES: &str = r#"
[episode]
max_steps = 300

[planner]
max_iterations = 60
shield_horizon = 0.0

[hc]
desired_distance = 1.8

[eval]
seeds = [10, 11]
controllers = ["HC", "stationary"]
"#;

fn main() -> followahead::Result<()> {
    let cfg = Config::from_toml(OVERRIDES)?;
    println!("max_steps {}  planner iterations {}  shield horizon {}", cfg.episode.max_steps, cfg.planner.max_iterations, cfg.planner.shield_horizon);
    println!("HC distance {}  eval seeds {:?}  dt still {}", cfg.hc.desired_distance, cfg.eval.seeds, cfg.episode.dt);

    for bad in ["[planner]\nclearence = 0.4\n", "[episode]\ndt = 0.0\n", "[eval]\nseeds = []\n"] {
        match Config::from_toml(bad) {
            Ok(_) => println!("accepted {bad:?}"),
            Err(e) => println!("rejected {:?}: {e}", bad.trim()),
        }
    }

    let full = Config::default().to_toml()?;
    println!("\nthe complete default file has {} lines; first table:", full.lines().count());
    for line in full.lines().skip_while(|l| !l.starts_with('[')).take(6) {
        println!("  {line}");
    }
    Ok(())
}
