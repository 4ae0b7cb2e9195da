//! Named evaluation scenarios and the closed-loop runner.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::controller::Controller;
use crate::env::FollowEnv;
use crate::error::{Error, Result};
use crate::human_motion::{load_trajectory, MotionCommand, MotionPlan, PidTracker, TrackerConfig, TrajectoryLibrary};
use crate::sim::{spawn_at, EpisodeConfig, EpisodeLog, LogRecord, Placement};

/// How the person moves during a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HumanScript {
    Stationary,
    /// Constant speed, optionally stopping after `distance` metres.
    Straight { v: f64, distance: Option<f64> },
    /// Constant speed and turn rate.
    Turning { v: f64, omega: f64 },
    /// Two opposite half circles.
    SShape { v: f64, radius: f64 },
    /// Straight, half circle, straight back.
    UTurn { v: f64, leg: f64, radius: f64 },
    /// A bundled trajectory by name, or a trajectory file.
    Recorded { name: String },
}

impl HumanScript {
    /// Person motion for an episode of `steps` steps of length `dt`.
    pub fn motion(&self, dt: f64, steps: usize, library: &TrajectoryLibrary) -> Result<MotionPlan> {
        let piecewise = |segments: &[(f64, MotionCommand)]| {
            // each segment is (duration, command); a step straddling a
            // boundary gets the time-weighted mean, so the total turn is exact
            let mut commands = Vec::with_capacity(steps);
            for k in 0..steps {
                let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
                let (mut v, mut omega, mut start) = (0.0, 0.0, 0.0);
                for (duration, c) in segments {
                    let overlap = (t1.min(start + duration) - t0.max(start)).max(0.0);
                    v += c.v * overlap;
                    omega += c.omega * overlap;
                    start += duration;
                }
                commands.push(MotionCommand::new(v / dt, omega / dt));
            }
            MotionPlan::script(commands)
        };
        Ok(match self {
            HumanScript::Stationary => MotionPlan::Constant(MotionCommand::STOP),
            HumanScript::Straight { v, distance: None } => MotionPlan::Constant(MotionCommand::new(*v, 0.0)),
            HumanScript::Straight { v, distance: Some(d) } => piecewise(&[(d / v, MotionCommand::new(*v, 0.0))]),
            HumanScript::Turning { v, omega } => MotionPlan::Constant(MotionCommand::new(*v, *omega)),
            HumanScript::SShape { v, radius } => {
                let w = v / radius;
                let half = PI * radius / v;
                piecewise(&[(half, MotionCommand::new(*v, w)), (half, MotionCommand::new(*v, -w))])
            }
            HumanScript::UTurn { v, leg, radius } => {
                let straight = leg / v;
                piecewise(&[
                    (straight, MotionCommand::new(*v, 0.0)),
                    (PI * radius / v, MotionCommand::new(*v, v / radius)),
                    (straight, MotionCommand::new(*v, 0.0)),
                ])
            }
            HumanScript::Recorded { name } => {
                let traj = match library.trajectories().iter().find(|t| &t.name == name) {
                    Some(t) => t.clone(),
                    None => load_trajectory(&PathBuf::from(name)).map_err(|_| Error::UnknownScenario(name.clone()))?,
                };
                // start the person at the first waypoint facing the second
                MotionPlan::Track(PidTracker::new(traj.anchored_at(0), TrackerConfig::default()))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub script: HumanScript,
    /// Initial distance, m.
    pub distance: f64,
    /// Initial person-robot angle, degrees, positive to the person's left.
    pub alpha_deg: f64,
    /// Robot heading relative to the person's, degrees.
    pub heading_deg: f64,
    pub steps: usize,
}

impl Scenario {
    pub fn new(name: &str, script: HumanScript, distance: f64, alpha_deg: f64, steps: usize) -> Self {
        Self {
            name: name.to_string(),
            script,
            distance,
            alpha_deg,
            heading_deg: 0.0,
            steps,
        }
    }

    pub fn placement(&self) -> Placement {
        Placement {
            distance: self.distance,
            alpha: self.alpha_deg.to_radians(),
            heading: self.heading_deg.to_radians(),
        }
    }

    /// Start must be strictly inside the non-terminal band.
    pub fn validate(&self) -> Result<()> {
        if !(self.distance > crate::reward::TOO_CLOSE && self.distance < crate::reward::TOO_FAR) || self.steps == 0 {
            return Err(Error::Config(format!(
                "scenario {} starts at D = {} with {} steps",
                self.name, self.distance, self.steps
            )));
        }
        Ok(())
    }
}

/// Parameters of the built-in scripts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptParams {
    pub straight_v: f64,
    pub turning_v: f64,
    pub turning_omega: f64,
    pub walk_v: f64,
    pub walk_distance: f64,
    /// Walking speed of the S-shape and U-turn scripts.
    pub curve_v: f64,
    pub s_radius: f64,
    pub u_leg: f64,
    pub u_radius: f64,
    pub sim_steps: usize,
    pub walk_steps: usize,
    pub s_steps: usize,
    pub u_steps: usize,
    pub recorded_steps: usize,
}

impl Default for ScriptParams {
    fn default() -> Self {
        Self {
            straight_v: 0.6,
            turning_v: 0.3,
            turning_omega: 0.3,
            walk_v: 0.6,
            walk_distance: 7.0,
            curve_v: 0.4,
            s_radius: 1.5,
            u_leg: 3.0,
            u_radius: 1.0,
            sim_steps: 100,
            walk_steps: 70,
            s_steps: 120,
            u_steps: 120,
            recorded_steps: 150,
        }
    }
}

/// The standard suite: simulated straight and turning runs, then the
/// walked straight, S-shape and U-turn settings, then one recorded path.
pub fn default_scenarios(p: &ScriptParams) -> Vec<Scenario> {
    let straight = HumanScript::Straight { v: p.straight_v, distance: None };
    let turning = HumanScript::Turning { v: p.turning_v, omega: p.turning_omega };
    let walk = HumanScript::Straight { v: p.walk_v, distance: Some(p.walk_distance) };
    let s = HumanScript::SShape { v: p.curve_v, radius: p.s_radius };
    let u = HumanScript::UTurn { v: p.curve_v, leg: p.u_leg, radius: p.u_radius };
    let mut out = vec![
        Scenario::new("straight_ahead", straight.clone(), 1.5, 0.0, p.sim_steps),
        Scenario::new("straight_behind", straight, 1.5, 180.0, p.sim_steps),
        Scenario::new("turning_ahead", turning.clone(), 1.5, 0.0, p.sim_steps),
        Scenario::new("turning_behind", turning.clone(), 1.5, 180.0, p.sim_steps),
        Scenario::new("turning_inside", turning.clone(), 1.5, 45.0, p.sim_steps),
        Scenario::new("turning_outside", turning, 1.5, -45.0, p.sim_steps),
    ];
    for (prefix, script, steps) in [("walk", &walk, p.walk_steps), ("s_shape", &s, p.s_steps)] {
        out.push(Scenario::new(&format!("{prefix}_ahead"), script.clone(), 2.0, 0.0, steps));
        out.push(Scenario::new(&format!("{prefix}_ahead_right"), script.clone(), 1.5, -45.0, steps));
        out.push(Scenario::new(&format!("{prefix}_ahead_left"), script.clone(), 1.5, 45.0, steps));
        out.push(Scenario::new(&format!("{prefix}_behind"), script.clone(), 1.2, 180.0, steps));
    }
    out.push(Scenario::new("u_turn_ahead", u.clone(), 1.7, 0.0, p.u_steps));
    out.push(Scenario::new("u_turn_ahead_left", u.clone(), 2.0, 55.0, p.u_steps));
    out.push(Scenario::new("u_turn_ahead_far_left", u.clone(), 3.6, 75.0, p.u_steps));
    out.push(Scenario::new("u_turn_behind", u, 1.2, 180.0, p.u_steps));
    out.push(Scenario::new(
        "recorded_lobby_loop",
        HumanScript::Recorded { name: "lobby_loop".into() },
        1.5,
        0.0,
        p.recorded_steps,
    ));
    out
}

pub fn find_scenario<'a>(scenarios: &'a [Scenario], name: &str) -> Result<&'a Scenario> {
    scenarios
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// One closed-loop episode. The log holds one record per step taken.
pub fn run_scenario(
    sc: &Scenario,
    controller: &mut dyn Controller,
    episode: &EpisodeConfig,
    library: &Arc<TrajectoryLibrary>,
    seed: u64,
) -> Result<EpisodeLog> {
    sc.validate()?;
    let cfg = EpisodeConfig {
        max_steps: sc.steps,
        ..*episode
    };
    let mut env = FollowEnv::new(cfg, library.clone(), seed)?;
    let motion = sc.script.motion(cfg.dt, sc.steps, library)?;
    let mut p = env.reset_with(spawn_at(&sc.placement()), motion);
    controller.reset();
    let mut log = EpisodeLog::default();
    loop {
        let decision = controller.act(&p, &env.world().robot)?;
        let (out, next) = env.step(decision.command);
        log.push(LogRecord::from_step(env.world(), &out.reward, out.end));
        p = next;
        if out.end.is_some() {
            break;
        }
    }
    Ok(log)
}
