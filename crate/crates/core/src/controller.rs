//! Robot controllers that share one closed-loop interface.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline_hc::HcController;
use crate::error::{Error, Result};
use crate::geometry::{relative_to_world, Pose, RelativeState};
use crate::human_motion::MotionCommand;
use crate::planner::{self, PlannerConfig};
use crate::rl::agent::actor_forward;
use crate::rl::mlp::Mlp;
use crate::sim::Observation;

/// Half-width of the goal box in the person frame, metres.
pub const GOAL_SCALE: f64 = 3.0;
pub const E2E_MAX_V: f64 = 1.0;
pub const E2E_MAX_OMEGA: f64 = 2.0;

/// What a controller sees on one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Perception {
    pub observation: Observation,
    /// Noisy measurement of the person pose.
    pub human: Pose,
    /// Person velocity in the world frame, m/s.
    pub human_velocity: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub command: MotionCommand,
    /// World-frame goal handed to the planner, if any.
    pub goal: Option<Pose>,
    pub degraded: bool,
}

impl Decision {
    pub fn command(command: MotionCommand) -> Self {
        Self {
            command,
            goal: None,
            degraded: false,
        }
    }
}

pub trait Controller: Send {
    fn name(&self) -> &str;
    fn reset(&mut self);
    fn act(&mut self, perception: &Perception, robot: &Pose) -> Result<Decision>;
}

/// Goal in the person frame from a bounded action. The goal orientation is
/// the bearing of the goal seen from the person.
pub fn goal_action_decode(a: [f64; 2]) -> RelativeState {
    let x = GOAL_SCALE * a[0];
    let y = GOAL_SCALE * a[1];
    let phi = if x == 0.0 && y == 0.0 { 0.0 } else { y.atan2(x) };
    RelativeState::new(x, y, phi)
}

pub fn e2e_action_decode(a: [f64; 2]) -> MotionCommand {
    MotionCommand::new(a[0] * E2E_MAX_V, a[1] * E2E_MAX_OMEGA)
}

/// How a two-dimensional policy action turns into a robot command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMode {
    /// Short-term goal relative to the person, reached through the planner.
    Goal,
    /// Direct linear and angular velocity.
    Velocity,
}

impl ActionMode {
    pub fn execute(self, a: [f64; 2], p: &Perception, robot: &Pose, planner_cfg: &PlannerConfig) -> Result<Decision> {
        match self {
            ActionMode::Velocity => Ok(Decision::command(e2e_action_decode(a))),
            ActionMode::Goal => plan_to_relative_goal(&goal_action_decode(a), p, robot, planner_cfg),
        }
    }
}

pub fn plan_to_relative_goal(goal: &RelativeState, p: &Perception, robot: &Pose, cfg: &PlannerConfig) -> Result<Decision> {
    let goal = relative_to_world(goal, &p.human);
    let (band, command) = planner::command_toward(robot, &goal, &p.human, p.human_velocity, cfg)?;
    Ok(Decision {
        command,
        goal: Some(goal),
        degraded: band.degraded,
    })
}

/// A trained actor: goal-based with the planner, or end-to-end.
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub actor: Mlp,
    pub mode: ActionMode,
    pub planner: PlannerConfig,
}

impl PolicyController {
    pub fn new(actor: Mlp, mode: ActionMode, planner: PlannerConfig) -> Result<Self> {
        if actor.output_dim() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "policy must emit 2 actions, network emits {}",
                actor.output_dim()
            )));
        }
        Ok(Self { actor, mode, planner })
    }
}

pub fn to_action(out: &[f64]) -> [f64; 2] {
    [out[0].clamp(-1.0, 1.0), out[1].clamp(-1.0, 1.0)]
}

impl Controller for PolicyController {
    fn name(&self) -> &str {
        match self.mode {
            ActionMode::Goal => "LBGP",
            ActionMode::Velocity => "E2E",
        }
    }

    fn reset(&mut self) {}

    fn act(&mut self, p: &Perception, robot: &Pose) -> Result<Decision> {
        let a = to_action(&actor_forward(&self.actor, p.observation.as_slice()));
        self.mode.execute(a, p, robot, &self.planner)
    }
}

/// Uniformly random goal in the goal box every step, through the planner.
#[derive(Debug, Clone)]
pub struct RandomGoalController {
    pub planner: PlannerConfig,
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomGoalController {
    pub fn new(planner: PlannerConfig, seed: u64) -> Self {
        Self {
            planner,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Controller for RandomGoalController {
    fn name(&self) -> &str {
        "random"
    }

    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn act(&mut self, p: &Perception, robot: &Pose) -> Result<Decision> {
        let a = [self.rng.random_range(-1.0..=1.0), self.rng.random_range(-1.0..=1.0)];
        ActionMode::Goal.execute(a, p, robot, &self.planner)
    }
}

/// Never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct Stationary;

impl Controller for Stationary {
    fn name(&self) -> &str {
        "stationary"
    }

    fn reset(&mut self) {}

    fn act(&mut self, _: &Perception, _: &Pose) -> Result<Decision> {
        Ok(Decision::command(MotionCommand::STOP))
    }
}

impl Controller for HcController {
    fn name(&self) -> &str {
        "HC"
    }

    fn reset(&mut self) {
        HcController::reset(self);
    }

    fn act(&mut self, p: &Perception, robot: &Pose) -> Result<Decision> {
        let d = self.step(&p.human, robot)?;
        Ok(Decision {
            command: d.command,
            goal: Some(d.goal),
            degraded: d.degraded,
        })
    }
}
