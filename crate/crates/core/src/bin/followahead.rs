use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use followahead::bridge::{bind_bridge, serve_bridge, BridgeContext};
use followahead::config::Config;
use followahead::controller::ActionMode;
use followahead::eval::ablation::{ablation_run, curve_to_csv, final_moving_average, Variant};
use followahead::eval::{default_scenarios, find_scenario, run_suite, write_eval_outputs, ControllerSpec, EvalContext};
use followahead::human_motion::{save_trajectory, MotionCommand, TrajectoryFile, Waypoint};
use followahead::rl::checkpoint::Checkpoint;
use followahead::rl::trainer::{evaluate_policy, train, TrainSetup};
use followahead::sim::{step_unicycle, EpisodeLog};
use followahead::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "followahead", version, about = "Follow-ahead robot lab")]
struct Cli {
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Goal,
    Velocity,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a policy and write policy.ckpt, curve.csv and episodes.csv.
    Train {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        steps: Option<u64>,
        /// Train on this curriculum level only.
        #[arg(long)]
        level: Option<u8>,
        /// Single-threaded deterministic collection.
        #[arg(long)]
        deterministic: bool,
        /// Greedy evaluation episodes after training.
        #[arg(long, default_value_t = 30)]
        eval_episodes: usize,
    },
    /// Run the scenario suite and write metrics.csv plus one log per episode.
    Eval {
        /// Policy checkpoints; each becomes LBGP or E2E by its action mode.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Controllers to run, overriding the config list.
        #[arg(long, value_delimiter = ',')]
        controllers: Vec<String>,
        /// Scenarios to run, overriding the config list.
        #[arg(long, value_delimiter = ',')]
        scenarios: Vec<String>,
    },
    /// Train the three ablation variants and write one curve file per run.
    Ablate {
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Recompute the metrics table from episode logs.
    Replay {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Write a person trajectory file from a scripted walk: one `v,omega`
    /// line per control step, or the person path of a built-in scenario.
    Record {
        #[arg(long)]
        name: String,
        #[arg(long, conflicts_with = "scenario")]
        commands: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Serve the live websocket session.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    fs::create_dir_all(&cli.out)?;
    match cli.command {
        Command::Train {
            mode,
            steps,
            level,
            deterministic,
            eval_episodes,
        } => cmd_train(&cfg, cli.seed, &cli.out, mode, steps, level, deterministic, eval_episodes),
        Command::Eval {
            checkpoint,
            controllers,
            scenarios,
        } => cmd_eval(&cfg, cli.seed, &cli.out, &checkpoint, controllers, scenarios),
        Command::Ablate { steps, seeds } => cmd_ablate(&cfg, cli.seed, &cli.out, steps, seeds),
        Command::Replay { logs } => cmd_replay(&cfg, &logs),
        Command::Record {
            name,
            commands,
            scenario,
        } => cmd_record(&cfg, &cli.out, &name, commands.as_deref(), scenario.as_deref()),
        Command::Serve { port, checkpoint } => cmd_serve(&cfg, cli.seed, port, &checkpoint),
    }
}

fn setup(cfg: &Config, seed: u64) -> Result<TrainSetup> {
    Ok(TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library()?),
        seed,
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    cfg: &Config,
    seed: u64,
    out: &Path,
    mode: Option<ModeArg>,
    steps: Option<u64>,
    level: Option<u8>,
    deterministic: bool,
    eval_episodes: usize,
) -> Result<()> {
    let mut tc = cfg.train.clone();
    if let Some(m) = mode {
        tc.mode = match m {
            ModeArg::Goal => ActionMode::Goal,
            ModeArg::Velocity => ActionMode::Velocity,
        };
    }
    if let Some(s) = steps {
        tc.total_steps = s;
    }
    if level.is_some() {
        tc.curriculum.fixed_level = level;
    }
    if deterministic {
        tc.parallel = false;
    }
    let setup = setup(cfg, seed)?;
    let (agent, report) = train(&tc, &setup)?;
    let ck = Checkpoint::from_agent(&agent, tc.mode, report.steps, report.level, ChaCha8Rng::seed_from_u64(seed));
    ck.save(&out.join("policy.ckpt"))?;
    fs::write(out.join("curve.csv"), curve_to_csv(&report.curve))?;
    let mut episodes = String::from("step,return,level\n");
    for (step, ret, lvl) in &report.episodes {
        episodes.push_str(&format!("{step},{ret:.6},{lvl}\n"));
    }
    fs::write(out.join("episodes.csv"), episodes)?;
    println!("trained {} steps, final level {}", report.steps, report.level);
    if eval_episodes > 0 {
        let eval_setup = TrainSetup {
            seed: seed.wrapping_add(1_000_003),
            ..setup
        };
        let returns = evaluate_policy(&agent.actor, tc.mode, report.level, eval_episodes, &eval_setup)?;
        let mean = returns.iter().sum::<f64>() / returns.len() as f64;
        println!("greedy mean return over {eval_episodes} episodes at level {}: {mean:.3}", report.level);
    }
    Ok(())
}

fn policy_specs(paths: &[PathBuf]) -> Result<Vec<ControllerSpec>> {
    paths
        .iter()
        .map(|p| {
            let ck = Checkpoint::load(p)?;
            let actor = Arc::new(ck.actor);
            Ok(match ck.mode {
                ActionMode::Goal => ControllerSpec::Lbgp(actor),
                ActionMode::Velocity => ControllerSpec::E2e(actor),
            })
        })
        .collect()
}

fn controller_specs(cfg: &Config, names: &[String], policies: &[ControllerSpec]) -> Result<Vec<ControllerSpec>> {
    names
        .iter()
        .map(|n| match n.as_str() {
            "HC" => Ok(ControllerSpec::Hc(cfg.hc)),
            "random" => Ok(ControllerSpec::Random),
            "stationary" => Ok(ControllerSpec::Stationary),
            "LBGP" | "E2E" => policies
                .iter()
                .find(|p| p.name() == n)
                .cloned()
                .ok_or_else(|| Error::Config(format!("controller {n} needs a --checkpoint in that mode"))),
            other => Err(Error::Config(format!("unknown controller `{other}`"))),
        })
        .collect()
}

fn cmd_eval(
    cfg: &Config,
    seed: u64,
    out: &Path,
    checkpoints: &[PathBuf],
    controllers: Vec<String>,
    scenarios: Vec<String>,
) -> Result<()> {
    let policies = policy_specs(checkpoints)?;
    let mut names = if controllers.is_empty() { cfg.eval.controllers.clone() } else { controllers };
    // checkpoints given on the command line are always evaluated
    for p in &policies {
        if !names.iter().any(|n| n == p.name()) {
            names.push(p.name().to_string());
        }
    }
    let specs = controller_specs(cfg, &names, &policies)?;
    let suite = default_scenarios(&cfg.eval.scripts);
    let wanted = if scenarios.is_empty() { cfg.eval.scenarios.clone() } else { scenarios };
    let chosen = if wanted.is_empty() {
        suite
    } else {
        wanted
            .iter()
            .map(|n| find_scenario(&suite, n).cloned())
            .collect::<Result<Vec<_>>>()?
    };
    let seeds: Vec<u64> = cfg.eval.seeds.iter().map(|s| s.wrapping_add(seed)).collect();
    let ctx = EvalContext {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library()?),
        gamma: cfg.eval.gamma,
        threads: cfg.eval.threads,
    };
    let (rows, episodes) = run_suite(&chosen, &specs, &seeds, &ctx)?;
    let table = write_eval_outputs(&rows, &episodes, out)?;
    print!("{table}");
    Ok(())
}

fn cmd_ablate(cfg: &Config, seed: u64, out: &Path, steps: Option<u64>, seeds: Vec<u64>) -> Result<()> {
    let mut ac = cfg.ablation.clone();
    if let Some(s) = steps {
        ac.total_steps = s;
    }
    if !seeds.is_empty() {
        ac.seeds = seeds;
    }
    let runs = ablation_run(&cfg.train, &ac, &setup(cfg, seed)?, out)?;
    let mut wins = 0;
    for s in &ac.seeds {
        let fin = |v: Variant| {
            runs.iter()
                .find(|r| r.variant == v && r.seed == *s)
                .and_then(|r| final_moving_average(&r.curve.iter().map(|p| p.reward).collect::<Vec<_>>(), ac.final_window))
                .unwrap_or(f64::NAN)
        };
        let (c, n, e) = (fin(Variant::Lbgp), fin(Variant::LbgpNoCurriculum), fin(Variant::E2e));
        if c >= n {
            wins += 1;
        }
        println!("seed {s}: lbgp {c:.3}  lbgp_no_curriculum {n:.3}  e2e {e:.3}");
    }
    println!("curriculum final average >= no-curriculum in {wins} of {} seeds", ac.seeds.len());
    Ok(())
}

fn cmd_replay(cfg: &Config, logs: &[PathBuf]) -> Result<()> {
    let mut rows = Vec::new();
    for path in logs {
        let log = EpisodeLog::read_from(std::io::BufReader::new(fs::File::open(path)?))?;
        let name = path.file_stem().map_or_else(|| "log".into(), |s| s.to_string_lossy().into_owned());
        rows.push(followahead::eval::compute_metrics(&name, "replay", &[log], cfg.eval.gamma)?);
    }
    print!("{}", followahead::eval::emit_table(&rows)?);
    Ok(())
}

fn parse_commands(text: &str) -> Result<Vec<MotionCommand>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let bad = || Error::Config(format!("command line {}: {l:?}", i + 1));
            let mut f = l.split(',').map(|x| x.trim().parse::<f64>());
            match (f.next(), f.next(), f.next()) {
                (Some(Ok(v)), Some(Ok(w)), None) if v.is_finite() && w.is_finite() => Ok(MotionCommand::new(v, w)),
                _ => Err(bad()),
            }
        })
        .collect()
}

fn cmd_record(cfg: &Config, out: &Path, name: &str, commands: Option<&Path>, scenario: Option<&str>) -> Result<()> {
    let dt = cfg.episode.dt;
    let cmds = match (commands, scenario) {
        (Some(p), _) => parse_commands(&fs::read_to_string(p)?)?,
        (None, Some(s)) => {
            let suite = default_scenarios(&cfg.eval.scripts);
            let sc = find_scenario(&suite, s)?;
            let mut plan = sc.script.motion(dt, sc.steps, &cfg.library()?)?;
            let mut person = followahead::geometry::Pose::new(0.0, 0.0, 0.0);
            (0..sc.steps)
                .map(|_| {
                    let c = plan.next_command(&person, dt);
                    person = step_unicycle(&person, c, dt);
                    c
                })
                .collect()
        }
        (None, None) => return Err(Error::Config("record needs --commands or --scenario".into())),
    };
    let mut person = followahead::geometry::Pose::new(0.0, 0.0, 0.0);
    let mut points = vec![Waypoint { t: 0.0, x: 0.0, y: 0.0 }];
    for (k, c) in cmds.iter().enumerate() {
        person = step_unicycle(&person, *c, dt);
        points.push(Waypoint {
            t: (k + 1) as f64 * dt,
            x: person.x,
            y: person.y,
        });
    }
    let traj = TrajectoryFile::new(name, points)?;
    let path = out.join(format!("{name}.csv"));
    save_trajectory(&traj, &path)?;
    println!("wrote {} ({} points, {:.2} m)", path.display(), traj.points.len(), traj.length());
    Ok(())
}

fn cmd_serve(cfg: &Config, seed: u64, port: Option<u16>, checkpoints: &[PathBuf]) -> Result<()> {
    let mut bc = cfg.bridge.clone();
    if let Some(p) = port {
        bc.port = p;
    }
    let mut specs = vec![ControllerSpec::Hc(cfg.hc), ControllerSpec::Stationary, ControllerSpec::Random];
    specs.extend(policy_specs(checkpoints)?);
    let listener = bind_bridge(bc.port)?;
    let ctx = BridgeContext::new(bc, cfg.episode, cfg.planner, Arc::new(cfg.library()?), specs, seed)?;
    serve_bridge(listener, ctx, Arc::new(AtomicBool::new(false)))
}
