//! Discrete-time world with a walking person and a unicycle robot.
//!
//! Both agents are integrated with the exact-arc unicycle update at a single
//! 5 Hz clock. Observations stack the current robot state and nine past
//! frames of both agents, all expressed in the person's current frame.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{person_robot_angle, world_to_relative, wrap_angle, Pose, RelativeState};
use crate::human_motion::MotionCommand;
use crate::reward::{is_terminal, step_reward, RewardTerms, Termination};

/// Frames kept for the observation: the current one plus nine past.
pub const HISTORY_LEN: usize = 10;
/// 3 for the current robot state + 6 per past frame.
pub const OBS_DIM: usize = 3 + 6 * (HISTORY_LEN - 1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub max_steps: usize,
    pub noise_pos: f64,
    pub noise_ang: f64,
    pub max_v: f64,
    pub min_v: f64,
    pub max_omega: f64,
    /// Largest change of v per step, m/s.
    pub max_dv: f64,
    /// Largest change of ω per step, rad/s.
    pub max_domega: f64,
    pub spawn_min: f64,
    pub spawn_max: f64,
    /// Positions are divided by this before entering the observation.
    pub position_scale: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: 0.2,
            max_steps: 100,
            noise_pos: 0.05,
            noise_ang: 0.02,
            max_v: 1.0,
            min_v: -1.0,
            max_omega: 2.0,
            max_dv: 0.5,
            max_domega: 2.0,
            spawn_min: 1.0,
            spawn_max: 2.5,
            position_scale: 6.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.max_steps > 0
            && self.noise_pos >= 0.0
            && self.noise_ang >= 0.0
            && self.min_v < self.max_v
            && self.max_omega > 0.0
            && self.max_dv > 0.0
            && self.max_domega > 0.0
            && 0.0 < self.spawn_min
            && self.spawn_min <= self.spawn_max
            && self.position_scale > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid episode config: {self:?}")))
        }
    }

    /// Clamps a robot command to the velocity box and the per-step
    /// acceleration limits around the current velocity.
    pub fn limit_robot_command(&self, current: &Pose, cmd: MotionCommand) -> MotionCommand {
        let v = cmd
            .v
            .clamp(current.v - self.max_dv, current.v + self.max_dv)
            .clamp(self.min_v, self.max_v);
        let omega = cmd
            .omega
            .clamp(current.omega - self.max_domega, current.omega + self.max_domega)
            .clamp(-self.max_omega, self.max_omega);
        MotionCommand::new(v, omega)
    }
}

/// Exact-arc unicycle integration over `dt`.
pub fn step_unicycle(p: &Pose, cmd: MotionCommand, dt: f64) -> Pose {
    let theta = p.phi;
    let theta_next = theta + cmd.omega * dt;
    // chord of the arc: v·dt·sinc(ω·dt/2) along the mid-arc heading
    let half = 0.5 * cmd.omega * dt;
    let sinc = if half.abs() < 1e-4 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    let chord = cmd.v * dt * sinc;
    let mid = theta + half;
    let (x, y) = (p.x + chord * mid.cos(), p.y + chord * mid.sin());
    Pose {
        x,
        y,
        phi: wrap_angle(theta_next),
        v: cmd.v,
        omega: cmd.omega,
    }
}

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EpisodeEnd {
    TooClose,
    TooFar,
    Horizon,
}

impl EpisodeEnd {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeEnd::TooClose => "too_close",
            EpisodeEnd::TooFar => "too_far",
            EpisodeEnd::Horizon => "horizon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "too_close" => Some(EpisodeEnd::TooClose),
            "too_far" => Some(EpisodeEnd::TooFar),
            "horizon" => Some(EpisodeEnd::Horizon),
            _ => None,
        }
    }

    /// Failure terminations end the return; the horizon only truncates it.
    pub fn is_failure(self) -> bool {
        !matches!(self, EpisodeEnd::Horizon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub human: Pose,
    pub robot: Pose,
    pub t: usize,
    /// `history[0]` is the current frame, `history[i]` the frame `i` steps ago.
    pub history: VecDeque<(Pose, Pose)>,
}

impl WorldState {
    pub fn new(human: Pose, robot: Pose) -> Self {
        let mut history = VecDeque::with_capacity(HISTORY_LEN);
        history.push_front((human, robot));
        Self { human, robot, t: 0, history }
    }

    fn push_frame(&mut self) {
        self.history.push_front((self.human, self.robot));
        self.history.truncate(HISTORY_LEN);
    }

    pub fn distance(&self) -> f64 {
        self.robot.distance_to(&self.human)
    }

    pub fn robot_relative(&self) -> RelativeState {
        world_to_relative(&self.robot, &self.human)
    }

    /// Person-robot angle in radians; zero when the agents coincide.
    pub fn alpha(&self) -> f64 {
        person_robot_angle(&self.robot_relative()).unwrap_or(0.0)
    }

    pub fn reward(&self) -> RewardTerms {
        step_reward(self.distance(), self.alpha().to_degrees())
    }

    /// Person velocity estimated from the last two frames.
    pub fn human_velocity_estimate(&self, dt: f64) -> (f64, f64) {
        match (self.history.front(), self.history.get(1)) {
            (Some((now, _)), Some((prev, _))) => ((now.x - prev.x) / dt, (now.y - prev.y) / dt),
            _ => (0.0, 0.0),
        }
    }
}

/// Initial robot placement relative to the person: distance, person-robot
/// angle, and robot heading relative to the person's heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub distance: f64,
    pub alpha: f64,
    pub heading: f64,
}

impl Placement {
    pub fn robot_pose(&self, human: &Pose) -> Pose {
        let rel = RelativeState::from_polar(self.distance, self.alpha, self.heading);
        crate::geometry::relative_to_world(&rel, human)
    }
}

/// Spawns the person at the origin heading +x and the robot at a uniformly
/// random distance, bearing and heading.
pub fn spawn_episode<R: Rng + ?Sized>(cfg: &EpisodeConfig, rng: &mut R) -> WorldState {
    let placement = Placement {
        distance: rng.random_range(cfg.spawn_min..=cfg.spawn_max),
        alpha: rng.random_range(-PI..PI),
        heading: rng.random_range(-PI..PI),
    };
    spawn_at(&placement)
}

pub fn spawn_at(placement: &Placement) -> WorldState {
    let human = Pose::new(0.0, 0.0, 0.0);
    WorldState::new(human, placement.robot_pose(&human))
}

/// Fixed-layout, `[-1, 1]`-scaled observation vector.
///
/// Layout: `z_r(t)` then, for `i = 1..=9`, `z_h(t-i)` followed by `z_r(t-i)`;
/// each triple is `(x, y, φ)` in the current person frame with positions
/// divided by the position scale and angles by π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn write_triple(out: &mut [f64], rel: &RelativeState, scale: f64) {
    out[0] = (rel.x / scale).clamp(-1.0, 1.0);
    out[1] = (rel.y / scale).clamp(-1.0, 1.0);
    out[2] = (rel.phi / PI).clamp(-1.0, 1.0);
}

pub fn build_observation(w: &WorldState, cfg: &EpisodeConfig) -> Observation {
    let mut obs = [0.0; OBS_DIM];
    let reference = w.human;
    let scale = cfg.position_scale;
    write_triple(&mut obs[0..3], &world_to_relative(&w.robot, &reference), scale);
    let oldest = w.history.len() - 1;
    for i in 1..HISTORY_LEN {
        let (h, r) = w.history[i.min(oldest)];
        let base = 3 + 6 * (i - 1);
        write_triple(&mut obs[base..base + 3], &world_to_relative(&h, &reference), scale);
        write_triple(&mut obs[base + 3..base + 6], &world_to_relative(&r, &reference), scale);
    }
    Observation(obs)
}

/// Adds independent Gaussian noise to every component in physical units,
/// then rescales and clamps.
pub fn apply_observation_noise<R: Rng + ?Sized>(
    obs: &Observation,
    noise_pos: f64,
    noise_ang: f64,
    position_scale: f64,
    rng: &mut R,
) -> Observation {
    if noise_pos == 0.0 && noise_ang == 0.0 {
        return *obs;
    }
    let pos = Normal::new(0.0, noise_pos).expect("sigma is non-negative");
    let ang = Normal::new(0.0, noise_ang).expect("sigma is non-negative");
    let mut out = obs.0;
    for (i, value) in out.iter_mut().enumerate() {
        *value = if i % 3 == 2 {
            let a = wrap_angle(*value * PI + ang.sample(rng));
            (a / PI).clamp(-1.0, 1.0)
        } else {
            let p = *value * position_scale + pos.sample(rng);
            (p / position_scale).clamp(-1.0, 1.0)
        };
    }
    Observation(out)
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: RewardTerms,
    pub end: Option<EpisodeEnd>,
    /// The robot command after clamping to the limits.
    pub applied: MotionCommand,
}

/// Advances both agents by one step and scores the new state.
pub fn env_step(
    w: &mut WorldState,
    robot_cmd: MotionCommand,
    human_cmd: MotionCommand,
    cfg: &EpisodeConfig,
) -> StepOutcome {
    let applied = cfg.limit_robot_command(&w.robot, robot_cmd);
    if applied != robot_cmd {
        log::trace!("robot command {robot_cmd:?} clamped to {applied:?}");
    }
    w.human = step_unicycle(&w.human, human_cmd, cfg.dt);
    w.robot = step_unicycle(&w.robot, applied, cfg.dt);
    w.t += 1;
    w.push_frame();

    let reward = w.reward();
    let end = match is_terminal(reward.distance) {
        Termination::TooClose => Some(EpisodeEnd::TooClose),
        Termination::TooFar => Some(EpisodeEnd::TooFar),
        Termination::Continue if w.t >= cfg.max_steps => Some(EpisodeEnd::Horizon),
        Termination::Continue => None,
    };
    StepOutcome { reward, end, applied }
}

/// One line of an episode log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub human: Pose,
    pub robot: Pose,
    pub distance: f64,
    pub alpha_deg: f64,
    pub reward: f64,
    pub end: Option<EpisodeEnd>,
}

impl LogRecord {
    pub fn from_step(w: &WorldState, reward: &RewardTerms, end: Option<EpisodeEnd>) -> Self {
        Self {
            step: w.t,
            human: w.human,
            robot: w.robot,
            distance: reward.distance,
            alpha_deg: reward.alpha_deg,
            reward: reward.total,
            end,
        }
    }
}

/// Comma-separated episode log. Floats are written in shortest round-trip
/// form so everything derived from a log can be recomputed exactly.
///
/// ```text
/// step,hx,hy,hphi,hv,homega,rx,ry,rphi,rv,romega,d,alpha_deg,reward,terminal
/// ```
///
/// `terminal` is `-` while the episode runs, otherwise `too_close`,
/// `too_far` or `horizon`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<LogRecord>,
}

pub const LOG_HEADER: &str = "step,hx,hy,hphi,hv,homega,rx,ry,rphi,rv,romega,d,alpha_deg,reward,terminal";

impl EpisodeLog {
    pub fn push(&mut self, r: LogRecord) {
        self.records.push(r);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn end(&self) -> Option<EpisodeEnd> {
        self.records.last().and_then(|r| r.end)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let h = &r.human;
            let b = &r.robot;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.step,
                h.x,
                h.y,
                h.phi,
                h.v,
                h.omega,
                b.x,
                b.y,
                b.phi,
                b.v,
                b.omega,
                r.distance,
                r.alpha_deg,
                r.reward,
                r.end.map_or("-", EpisodeEnd::as_str)
            );
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?;
        if header.as_deref().map(str::trim) != Some(LOG_HEADER) {
            return Err(Error::Log("missing header".into()));
        }
        let mut log = EpisodeLog::default();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Log(format!("malformed record on line {}", i + 2));
            if f.len() != 15 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            let pose = |k: usize| -> Result<Pose> {
                Ok(Pose {
                    x: num(k)?,
                    y: num(k + 1)?,
                    phi: num(k + 2)?,
                    v: num(k + 3)?,
                    omega: num(k + 4)?,
                })
            };
            let end = match f[14] {
                "-" => None,
                s => Some(EpisodeEnd::parse(s).ok_or_else(bad)?),
            };
            log.push(LogRecord {
                step: f[0].parse().map_err(|_| bad())?,
                human: pose(1)?,
                robot: pose(6)?,
                distance: num(11)?,
                alpha_deg: num(12)?,
                reward: num(13)?,
                end,
            });
        }
        Ok(log)
    }
}
