//! Prints one PASS/FAIL line per acceptance criterion and exits non-zero if
//! any criterion fails. Tolerances and budgets are fixed below.

mod common;

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use followahead::baseline_hc::{ekf_predict, ekf_update, EkfConfig, EkfState, HcConfig};
use followahead::config::Config;
use followahead::controller::RandomGoalController;
use followahead::eval::ablation::{ablation_run, final_moving_average, parse_curve, Variant};
use followahead::eval::{default_scenarios, find_scenario, run_suite, ControllerSpec, EvalContext};
use followahead::geometry::{relative_to_world, world_to_relative, wrap_angle, Pose};
use followahead::human_motion::{smooth_curve_step, MotionCommand, MotionPlan, SmoothCurveState};
use followahead::planner::{command_toward, PlannerConfig};
use followahead::reward::step_reward;
use followahead::rl::distribution::{categorical_project, softmax, Support};
use followahead::rl::mlp::Mlp;
use followahead::rl::trainer::{evaluate_controller, evaluate_policy, train, TrainSetup};
use followahead::sim::{spawn_episode, step_unicycle, EpisodeConfig, EpisodeEnd};

const REWARD_CASES: usize = 100_000;
const REWARD_TOL: f64 = 1e-12;
const TRANSFORM_CASES: usize = 10_000;
const TRANSFORM_TOL: f64 = 1e-9;
const CURVE_STEPS: usize = 100_000;
const CIRCLE_TOL: f64 = 1e-6;
const SPAWN_RANGE: (f64, f64) = (1.0, 2.5);
const GRADIENT_INSTANCES: usize = 120;
const GRADIENT_TOL: f64 = 1e-4;
const PROJECTION_CASES: usize = 10_000;
const PROJECTION_TOL: f64 = 1e-9;
const EKF_SETTLE_S: f64 = 3.0;
const EKF_REL_TOL: f64 = 0.05;
const GOAL_RANGE: f64 = 3.0;
const GOAL_TOL: f64 = 0.15;
const GOAL_TIME_S: f64 = 10.0;
const CLEARANCE: f64 = 0.5;
const HC_MAX_ABS_ALPHA_DEG: f64 = 10.0;
const HC_DISTANCE: (f64, f64) = (1.2, 1.8);
const DESK_MAX_STEPS: u64 = 100_000;
const DESK_EVAL_EPISODES: usize = 30;
const DESK_FACTOR: f64 = 2.0;
const ABLATION_MIN_SEEDS: usize = 3;
const ABLATION_MIN_WINS: usize = 2;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn run(name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome, failures: &mut Vec<String>) {
    let started = Instant::now();
    let mut o = f();
    let took = started.elapsed();
    if let Some(limit) = limit {
        if took > limit {
            o.pass = false;
            o.detail.push_str(&format!("; over the {:.0?} budget", limit));
        }
    }
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag}  {name:<28} {}  [{:.1?}]", o.detail, took);
    if !o.pass {
        failures.push(name.to_string());
    }
}

fn reward_oracle_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: f64 = 0.0;
    let mut in_range = true;
    let mut check = |d: f64, a: f64| {
        let r = step_reward(d, a).total;
        worst = worst.max((r - common::reward_oracle(d, a)).abs());
        in_range &= (-1.0..=1.0).contains(&r);
    };
    for _ in 0..REWARD_CASES {
        check(rng.random_range(0.0..7.0), rng.random_range(-180.0..=180.0));
    }
    for d in [0.0, 0.5, 1.0, 1.5, 2.0, 5.0, 5.0 + 1e-9] {
        for a in [-180.0, -25.0, 0.0, 25.0, 180.0] {
            check(d, a);
        }
    }
    // dense grid: 0.01 m by 0.25 degrees
    let mut best = f64::NEG_INFINITY;
    let mut argmax = Vec::new();
    for i in 0..=700 {
        let d = i as f64 * 0.01;
        for j in -720..=720 {
            let a = j as f64 * 0.25;
            let r = step_reward(d, a).total;
            in_range &= (-1.0..=1.0).contains(&r);
            if r > best + 1e-15 {
                best = r;
                argmax = vec![(i, j)];
            } else if (r - best).abs() <= 1e-15 {
                argmax.push((i, j));
            }
        }
    }
    let unique_peak = argmax == vec![(150, 0)] && (best - 0.75).abs() < 1e-15;
    outcome(
        worst <= REWARD_TOL && in_range && unique_peak,
        format!("max |R - oracle| = {worst:.1e}, bounded {in_range}, grid max {best} at {} point(s), at (1.5, 0): {unique_peak}", argmax.len()),
    )
}

fn transform_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..TRANSFORM_CASES {
        let (s, h, t) = (common::random_pose(&mut rng), common::random_pose(&mut rng), common::random_pose(&mut rng));
        let back = relative_to_world(&world_to_relative(&s, &h), &h);
        worst = worst.max((back.x - s.x).abs()).max((back.y - s.y).abs()).max(wrap_angle(back.phi - s.phi).abs());
        let (sn, cs) = t.phi.sin_cos();
        let moved = |p: &Pose| Pose::new(t.x + cs * p.x - sn * p.y, t.y + sn * p.x + cs * p.y, p.phi + t.phi);
        let a = world_to_relative(&s, &h);
        let b = world_to_relative(&moved(&s), &moved(&h));
        worst = worst.max((a.x - b.x).abs()).max((a.y - b.y).abs()).max(wrap_angle(a.phi - b.phi).abs());
        worst = worst.max((a.norm() - s.distance_to(&h)).abs());
    }
    outcome(worst <= TRANSFORM_TOL, format!("{TRANSFORM_CASES} pose triples, worst error {worst:.1e}"))
}

fn generator_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut state = SmoothCurveState::sample(&mut rng);
    let mut contained = true;
    for _ in 0..CURVE_STEPS {
        let (next, cmd) = smooth_curve_step(state, &mut rng);
        contained &= (0.0..=1.0).contains(&cmd.v) && (-1.0..=1.0).contains(&cmd.omega);
        state = next;
    }
    let mut radius_err: f64 = 0.0;
    for _ in 0..200 {
        let MotionPlan::Constant(cmd) = MotionPlan::circle(&mut rng) else { unreachable!() };
        let r = cmd.v / cmd.omega;
        let mut p = common::random_pose(&mut rng);
        let (cx, cy) = (p.x - r * p.phi.sin(), p.y + r * p.phi.cos());
        for _ in 0..500 {
            p = step_unicycle(&p, cmd, 0.2);
            radius_err = radius_err.max(((p.x - cx).hypot(p.y - cy) - r).abs());
        }
    }
    let cfg = EpisodeConfig::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..CURVE_STEPS {
        let d = spawn_episode(&cfg, &mut rng).distance();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let spawn_ok = lo >= SPAWN_RANGE.0 && hi <= SPAWN_RANGE.1;
    outcome(
        contained && radius_err <= CIRCLE_TOL && spawn_ok,
        format!("curve contained {contained}; circle radius error {radius_err:.1e} m; spawn D in [{lo:.4}, {hi:.4}]"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mlp = common::mlp_gradient_error(&mut rng, GRADIENT_INSTANCES);
    let actor = common::actor_gradient_error(&mut rng, GRADIENT_INSTANCES);
    let band = common::band_gradient_error(&mut rng, GRADIENT_INSTANCES);
    outcome(
        mlp.max(actor).max(band) <= GRADIENT_TOL,
        format!("{GRADIENT_INSTANCES} instances each; worst relative error MLP {mlp:.1e}, actor through critic {actor:.1e}, band cost {band:.1e}"),
    )
}

fn projection_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let (mut worst, mut mass): (f64, f64) = (0.0, 0.0);
    for _ in 0..PROJECTION_CASES {
        let atoms = rng.random_range(2..=101);
        let half = rng.random_range(1.0..200.0);
        let s = Support::new(-half, half, atoms);
        let probs = softmax(&common::random_vec(&mut rng, atoms, 5.0));
        let r = rng.random_range(-1.5 * half..1.5 * half);
        let done = rng.random_bool(0.1);
        let g = rng.random_range(0.0..1.0);
        let got = categorical_project(r, done, &probs, g, &s);
        let want = common::projection_oracle(r, done, &probs, g, &s);
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        mass = mass.max((got.iter().sum::<f64>() - 1.0).abs());
        if got.iter().any(|p| *p < 0.0) {
            mass = f64::INFINITY;
        }
    }
    outcome(
        worst <= PROJECTION_TOL && mass <= PROJECTION_TOL,
        format!("{PROJECTION_CASES} cases, worst deviation {worst:.1e}, worst |mass - 1| {mass:.1e}"),
    )
}

fn ekf_check() -> Outcome {
    let cfg = EkfConfig::default();
    let r = cfg.measurement_cov();
    let dt = 0.2;
    let settle = (EKF_SETTLE_S / dt).round() as usize;
    let mut worst: f64 = 0.0;
    let mut psd = true;
    let mut tracks = 0;
    for v in [-0.4, 0.2, 0.6, 1.0] {
        for w in [-0.8, -0.3, 0.0, 0.3, 0.8] {
            tracks += 1;
            let cmd = MotionCommand::new(v, w);
            let mut truth = Pose::new(2.0, -1.0, 0.4);
            let mut s = EkfState::from_measurement(&truth, &r, cfg.initial_velocity_var);
            for _ in 0..settle {
                truth = step_unicycle(&truth, cmd, dt);
                s = ekf_update(&ekf_predict(&s, dt, &cfg), &truth, &r).expect("innovation is invertible");
                psd &= s.covariance_is_psd();
            }
            // relative to the true value; a straight track is judged against 0.1 rad/s
            worst = worst.max((s.mean[3] - v).abs() / v.abs());
            worst = worst.max((s.mean[4] - w).abs() / w.abs().max(0.1));
        }
    }
    outcome(
        worst <= EKF_REL_TOL && psd,
        format!("{tracks} tracks, worst relative velocity error after {EKF_SETTLE_S} s {:.2}%, covariance PSD {psd}", 100.0 * worst),
    )
}

fn goal_reaching() -> (usize, usize, f64) {
    let cfg = PlannerConfig::default();
    let ep = EpisodeConfig::default();
    let far_person = Pose::new(1e3, 1e3, 0.0);
    let max_steps = (GOAL_TIME_S / ep.dt).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let (mut reached, mut total, mut slowest) = (0, 0, 0.0f64);
    for _ in 0..100 {
        total += 1;
        let d = rng.random_range(0.3..=GOAL_RANGE);
        let b = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let goal = Pose::new(d * b.cos(), d * b.sin(), rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let mut robot = Pose::new(0.0, 0.0, 0.0);
        for k in 1..=max_steps {
            let (_, cmd) = command_toward(&robot, &goal, &far_person, (0.0, 0.0), &cfg).expect("planner");
            robot = step_unicycle(&robot, ep.limit_robot_command(&robot, cmd), ep.dt);
            if (robot.x - goal.x).hypot(robot.y - goal.y) <= GOAL_TOL {
                reached += 1;
                slowest = slowest.max(k as f64 * ep.dt);
                break;
            }
        }
    }
    (reached, total, slowest)
}

struct Desk {
    actor: Mlp,
    trained: f64,
    random: f64,
    steps: u64,
}

fn train_desk() -> followahead::Result<Desk> {
    let cfg = Config::from_toml(include_str!("../config/desk.toml"))?;
    let setup = TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library()?),
        seed: 1,
    };
    let (agent, report) = train(&cfg.train, &setup)?;
    let fresh = TrainSetup { seed: 999, ..setup };
    let mean = |xs: Vec<f64>| xs.iter().sum::<f64>() / xs.len() as f64;
    let trained = mean(evaluate_policy(&agent.actor, cfg.train.mode, 1, DESK_EVAL_EPISODES, &fresh)?);
    let mut random = RandomGoalController::new(cfg.planner, 5);
    let random = mean(evaluate_controller(&mut random, 1, DESK_EVAL_EPISODES, &fresh)?);
    Ok(Desk {
        actor: agent.actor,
        trained,
        random,
        steps: report.steps,
    })
}

fn desk_check(desk: &followahead::Result<Desk>) -> Outcome {
    match desk {
        Ok(d) => {
            let pass = d.steps <= DESK_MAX_STEPS && d.trained > 0.0 && d.trained >= DESK_FACTOR * d.random;
            outcome(
                pass,
                format!(
                    "{} steps at level 1; mean return over {DESK_EVAL_EPISODES} episodes: trained {:.2}, random goals {:.2}",
                    d.steps, d.trained, d.random
                ),
            )
        }
        Err(e) => outcome(false, format!("training failed: {e}")),
    }
}

fn suite_context() -> EvalContext {
    EvalContext {
        episode: EpisodeConfig::default(),
        planner: PlannerConfig::default(),
        library: Arc::new(followahead::human_motion::TrajectoryLibrary::bundled()),
        gamma: 0.99,
        threads: 0,
    }
}

fn safety_check(desk: &followahead::Result<Desk>) -> Outcome {
    let (reached, total, slowest) = goal_reaching();
    let mut controllers = vec![ControllerSpec::Hc(HcConfig::default()), ControllerSpec::Random];
    if let Ok(d) = desk {
        controllers.push(ControllerSpec::Lbgp(Arc::new(d.actor.clone())));
    }
    let suite = default_scenarios(&Config::default().eval.scripts);
    let ctx = suite_context();
    let episodes = match run_suite(&suite, &controllers, &[1, 2, 3, 4, 5], &ctx) {
        Ok((_, e)) => e,
        Err(e) => return outcome(false, format!("suite failed: {e}")),
    };
    let too_close = episodes.iter().filter(|e| e.log.end() == Some(EpisodeEnd::TooClose)).count();
    let closest = episodes
        .iter()
        .flat_map(|e| e.log.records.iter().map(|r| r.distance))
        .fold(f64::INFINITY, f64::min);
    let names: Vec<&str> = controllers.iter().map(|c| c.name()).collect();
    outcome(
        reached == total && too_close == 0 && closest >= CLEARANCE && desk.is_ok(),
        format!(
            "{reached}/{total} goals reached (slowest {slowest:.1} s); {} episodes for {names:?}: {too_close} too_close, closest {closest:.3} m",
            episodes.len()
        ),
    )
}

fn hc_check() -> Outcome {
    let suite = default_scenarios(&Config::default().eval.scripts);
    let sc = find_scenario(&suite, "straight_ahead").unwrap().clone();
    let (_, episodes) = run_suite(&[sc], &[ControllerSpec::Hc(HcConfig::default())], &[1, 2, 3, 4, 5], &suite_context()).unwrap();
    let records: Vec<_> = episodes.iter().flat_map(|e| e.log.records.iter()).collect();
    let n = records.len() as f64;
    let abs_alpha = records.iter().map(|r| r.alpha_deg.abs()).sum::<f64>() / n;
    let d = records.iter().map(|r| r.distance).sum::<f64>() / n;
    outcome(
        abs_alpha < HC_MAX_ABS_ALPHA_DEG && (HC_DISTANCE.0..=HC_DISTANCE.1).contains(&d),
        format!("straight_ahead over 5 seeds: mean |alpha| {abs_alpha:.2} deg, mean D {d:.3} m"),
    )
}

fn ablation_check(dir: &Path) -> Outcome {
    let cfg = Config::from_toml(include_str!("../config/desk.toml")).unwrap();
    let setup = TrainSetup {
        episode: cfg.episode,
        planner: cfg.planner,
        library: Arc::new(cfg.library().unwrap()),
        seed: 0,
    };
    let runs = match ablation_run(&cfg.train, &cfg.ablation, &setup, dir) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("ablation failed: {e}")),
    };
    let mut well_formed = runs.len() == Variant::ALL.len() * cfg.ablation.seeds.len();
    for r in &runs {
        well_formed &= std::fs::read_to_string(&r.file)
            .ok()
            .and_then(|t| parse_curve(&t).ok())
            .is_some_and(|rows| !rows.is_empty() && rows.len() == r.curve.len());
    }
    let mut wins = 0;
    let mut per_seed = Vec::new();
    for s in &cfg.ablation.seeds {
        let fin = |v: Variant| {
            runs.iter()
                .find(|r| r.variant == v && r.seed == *s)
                .and_then(|r| final_moving_average(&r.curve.iter().map(|p| p.reward).collect::<Vec<_>>(), cfg.ablation.final_window))
                .unwrap_or(f64::NAN)
        };
        let (c, n) = (fin(Variant::Lbgp), fin(Variant::LbgpNoCurriculum));
        if c >= n {
            wins += 1;
        }
        per_seed.push(format!("seed {s}: {c:.1} vs {n:.1}"));
    }
    outcome(
        well_formed && cfg.ablation.seeds.len() >= ABLATION_MIN_SEEDS && wins >= ABLATION_MIN_WINS,
        format!(
            "{} curve files well-formed {well_formed}, {} steps each; curriculum >= no-curriculum in {wins}/{} seeds ({})",
            runs.len(),
            cfg.ablation.total_steps,
            cfg.ablation.seeds.len(),
            per_seed.join(", ")
        ),
    )
}

fn determinism_check(dir: &Path) -> Outcome {
    let bin = env!("CARGO_BIN_EXE_followahead");
    let mut tables = Vec::new();
    for run in ["a", "b"] {
        let out = dir.join(run);
        let status = Command::new(bin)
            .args(["--seed", "3", "--out"])
            .arg(&out)
            .arg("eval")
            .stdout(std::process::Stdio::null())
            .status();
        match status {
            Ok(s) if s.success() => {}
            other => return outcome(false, format!("eval run failed: {other:?}")),
        }
        tables.push(std::fs::read(out.join("metrics.csv")).unwrap_or_default());
    }
    let logs_equal = std::fs::read_dir(dir.join("a/logs"))
        .map(|entries| {
            entries.flatten().all(|e| std::fs::read(e.path()).ok() == std::fs::read(dir.join("b/logs").join(e.file_name())).ok())
        })
        .unwrap_or(false);
    let same = !tables[0].is_empty() && tables[0] == tables[1];
    outcome(
        same && logs_equal,
        format!("two eval runs: metric tables identical {same} ({} bytes), episode logs identical {}", tables[0].len(), logs_equal),
    )
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let mut failures = Vec::new();
    let s = Duration::from_secs;
    run("reward oracle", Some(s(5)), reward_oracle_check, &mut failures);
    run("transform suite", Some(s(5)), transform_check, &mut failures);
    run("generator invariants", Some(s(10)), generator_check, &mut failures);
    run("numerical gradients", Some(s(60)), gradient_check, &mut failures);
    run("distributional projection", Some(s(10)), projection_check, &mut failures);
    run("EKF convergence", Some(s(10)), ekf_check, &mut failures);
    run("HC closed-loop sanity", Some(s(60)), hc_check, &mut failures);

    let mut desk = None;
    run(
        "desk-scale learning",
        Some(s(30 * 60)),
        || {
            let trained = train_desk();
            let o = desk_check(&trained);
            desk = Some(trained);
            o
        },
        &mut failures,
    );
    let desk = desk.expect("desk run happened");
    run("planner safety and goals", Some(s(120)), || safety_check(&desk), &mut failures);
    run("ablation harness", Some(s(2 * 3600)), || ablation_check(&work.path().join("ablation")), &mut failures);
    run("determinism", None, || determinism_check(&work.path().join("determinism")), &mut failures);

    if failures.is_empty() {
        println!("all acceptance criteria passed");
    } else {
        println!("failed: {}", failures.join(", "));
        std::process::exit(1);
    }
}
