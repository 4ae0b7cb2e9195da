//! Simulated person motion: the four curriculum levels.
//!
//! 1. straight line at a constant random speed
//! 2. circles of random radius
//! 3. smoothed random curves
//! 4. recorded trajectories tracked with a PID controller

mod pid;
mod trajectory;

pub use pid::{pid_track, PidGains, PidTracker, TrackerConfig};
pub use trajectory::{load_trajectory, save_trajectory, TrajectoryFile, TrajectoryLibrary, Waypoint};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Commanded body velocities for a unicycle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionCommand {
    pub v: f64,
    pub omega: f64,
}

impl MotionCommand {
    pub const STOP: MotionCommand = MotionCommand { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

pub const STRAIGHT_SPEED: (f64, f64) = (0.2, 0.8);
pub const CIRCLE_SPEED: (f64, f64) = (0.2, 0.6);
pub const CIRCLE_TURN_RATE: (f64, f64) = (0.3, 0.8);

/// Random-curve generator state. `r1`/`r2` are the draws that feed the next
/// update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothCurveState {
    pub v_linear: f64,
    pub v_angular: f64,
    pub r1: f64,
    pub r2: f64,
}

impl SmoothCurveState {
    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            v_linear: rng.random_range(0.2..=0.6),
            v_angular: rng.random_range(-0.5..=0.5),
            r1: rng.random_range(0.0..=1.0),
            r2: rng.random_range(-1.0..=1.0),
        }
    }
}

/// One update of the random-curve recursion: each velocity moves a third of
/// the way toward its previous random draw, then fresh draws are taken.
pub fn smooth_curve_step<R: Rng + ?Sized>(
    state: SmoothCurveState,
    rng: &mut R,
) -> (SmoothCurveState, MotionCommand) {
    let v_linear = state.v_linear - (state.v_linear - state.r1) / 3.0;
    let v_angular = state.v_angular - (state.v_angular - state.r2) / 3.0;
    let next = SmoothCurveState {
        v_linear,
        v_angular,
        r1: rng.random_range(0.0..=1.0),
        r2: rng.random_range(-1.0..=1.0),
    };
    (next, MotionCommand::new(v_linear, v_angular))
}

/// A per-episode person motion plan. Call [`MotionPlan::next_command`] once
/// per control step.
#[derive(Debug, Clone)]
pub enum MotionPlan {
    Constant(MotionCommand),
    SmoothCurve {
        state: SmoothCurveState,
        rng: ChaCha8Rng,
    },
    Track(PidTracker),
    /// Fixed command sequence; the person stops once it runs out.
    Script { commands: Vec<MotionCommand>, cursor: usize },
}

impl MotionPlan {
    pub fn straight<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let v = rng.random_range(STRAIGHT_SPEED.0..=STRAIGHT_SPEED.1);
        MotionPlan::Constant(MotionCommand::new(v, 0.0))
    }

    pub fn circle<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let v = rng.random_range(CIRCLE_SPEED.0..=CIRCLE_SPEED.1);
        let omega = rng.random_range(CIRCLE_TURN_RATE.0..=CIRCLE_TURN_RATE.1);
        MotionPlan::Constant(MotionCommand::new(v, omega))
    }

    pub fn smooth_curve<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let state = SmoothCurveState::sample(rng);
        MotionPlan::SmoothCurve {
            state,
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
        }
    }

    pub fn script(commands: Vec<MotionCommand>) -> Self {
        MotionPlan::Script { commands, cursor: 0 }
    }

    pub fn next_command(&mut self, person: &Pose, dt: f64) -> MotionCommand {
        match self {
            MotionPlan::Constant(cmd) => *cmd,
            MotionPlan::SmoothCurve { state, rng } => {
                let (next, cmd) = smooth_curve_step(*state, rng);
                *state = next;
                cmd
            }
            MotionPlan::Track(tracker) => tracker.command(person, dt),
            MotionPlan::Script { commands, cursor } => {
                let cmd = commands.get(*cursor).copied().unwrap_or(MotionCommand::STOP);
                *cursor += 1;
                cmd
            }
        }
    }
}

/// Draws the person motion for one episode at the given curriculum level.
pub fn sample_motion<R: Rng + ?Sized>(
    level: u8,
    rng: &mut R,
    library: &TrajectoryLibrary,
) -> Result<MotionPlan> {
    Ok(match level {
        1 => MotionPlan::straight(rng),
        2 => MotionPlan::circle(rng),
        3 => MotionPlan::smooth_curve(rng),
        _ => {
            if library.is_empty() {
                return Err(Error::EmptyLibrary);
            }
            let traj = &library.trajectories()[rng.random_range(0..library.len())];
            // leave a few waypoints ahead so the person has somewhere to go
            let last_start = traj.points.len().saturating_sub(4).max(1);
            let start = rng.random_range(0..last_start);
            let anchored = traj.anchored_at(start);
            MotionPlan::Track(PidTracker::new(anchored, TrackerConfig::default()))
        }
    })
}
