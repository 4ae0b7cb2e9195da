//! Episode driver: world state, person motion and perception noise together.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::controller::Perception;
use crate::error::Result;
use crate::geometry::{wrap_angle, Pose};
use crate::human_motion::{sample_motion, MotionCommand, MotionPlan, TrajectoryLibrary};
use crate::sim::{apply_observation_noise, build_observation, env_step, spawn_episode, EpisodeConfig, StepOutcome, WorldState};

#[derive(Debug, Clone)]
pub struct FollowEnv {
    pub cfg: EpisodeConfig,
    library: Arc<TrajectoryLibrary>,
    world: WorldState,
    motion: MotionPlan,
    rng: ChaCha8Rng,
}

impl FollowEnv {
    pub fn new(cfg: EpisodeConfig, library: Arc<TrajectoryLibrary>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let world = spawn_episode(&cfg, &mut rng);
        Ok(Self {
            cfg,
            library,
            world,
            motion: MotionPlan::script(Vec::new()),
            rng,
        })
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn motion(&self) -> &MotionPlan {
        &self.motion
    }

    /// Random spawn with person motion drawn from the curriculum level.
    pub fn reset(&mut self, level: u8) -> Result<Perception> {
        let world = spawn_episode(&self.cfg, &mut self.rng);
        let motion = sample_motion(level, &mut self.rng, &self.library)?;
        Ok(self.reset_with(world, motion))
    }

    /// Starts from a given world and person script.
    pub fn reset_with(&mut self, world: WorldState, motion: MotionPlan) -> Perception {
        self.world = world;
        self.motion = motion;
        self.perceive()
    }

    /// Noisy observation and person measurement of the current state.
    pub fn perceive(&mut self) -> Perception {
        let clean = build_observation(&self.world, &self.cfg);
        let observation = apply_observation_noise(
            &clean,
            self.cfg.noise_pos,
            self.cfg.noise_ang,
            self.cfg.position_scale,
            &mut self.rng,
        );
        let h = self.world.human;
        let human = if self.cfg.noise_pos == 0.0 && self.cfg.noise_ang == 0.0 {
            Pose::new(h.x, h.y, h.phi)
        } else {
            let pos = Normal::new(0.0, self.cfg.noise_pos).expect("sigma is non-negative");
            let ang = Normal::new(0.0, self.cfg.noise_ang).expect("sigma is non-negative");
            Pose::new(
                h.x + pos.sample(&mut self.rng),
                h.y + pos.sample(&mut self.rng),
                wrap_angle(h.phi + ang.sample(&mut self.rng)),
            )
        };
        Perception {
            observation,
            human,
            human_velocity: self.world.human_velocity_estimate(self.cfg.dt),
        }
    }

    /// Advances one step with the robot command; the person follows its plan.
    pub fn step(&mut self, robot_cmd: MotionCommand) -> (StepOutcome, Perception) {
        let human_cmd = self.motion.next_command(&self.world.human, self.cfg.dt);
        self.step_with(robot_cmd, human_cmd)
    }

    /// Advances one step with both commands given, bypassing the person plan.
    pub fn step_with(&mut self, robot_cmd: MotionCommand, human_cmd: MotionCommand) -> (StepOutcome, Perception) {
        let outcome = env_step(&mut self.world, robot_cmd, human_cmd, &self.cfg);
        (outcome, self.perceive())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_rollout() {
        let lib = Arc::new(TrajectoryLibrary::bundled());
        let run = |seed| {
            let mut env = FollowEnv::new(EpisodeConfig::default(), lib.clone(), seed).unwrap();
            let mut p = env.reset(3).unwrap();
            let mut trace = vec![p.observation];
            for _ in 0..20 {
                let (out, next) = env.step(MotionCommand::new(0.3, 0.1));
                p = next;
                trace.push(p.observation);
                if out.end.is_some() {
                    break;
                }
            }
            trace
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let cfg = EpisodeConfig {
            noise_pos: 0.0,
            noise_ang: 0.0,
            ..EpisodeConfig::default()
        };
        let lib = Arc::new(TrajectoryLibrary::bundled());
        let mut env = FollowEnv::new(cfg, lib, 1).unwrap();
        let p = env.reset(1).unwrap();
        assert_eq!(p.observation, build_observation(env.world(), &cfg));
        let h = env.world().human;
        assert_eq!((p.human.x, p.human.y, p.human.phi), (h.x, h.y, h.phi));
    }
}
