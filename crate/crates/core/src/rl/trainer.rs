//! Experience collection and the learner loop.
//!
//! Collectors come in two roles. Explorers add Gaussian noise to the
//! policy's actions; the exploiter acts greedily and its episode returns are
//! the learning curve and the curriculum signal. Every transition, whichever
//! worker produced it, goes into one replay buffer.
//!
//! In deterministic mode the workers take turns stepping on one thread and
//! the learner runs between rounds, so a seed fixes the whole run. In
//! parallel mode each worker owns a thread, the learner owns another, and
//! the actor is republished to the workers every `publish_every` updates.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicU8, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agent::{actor_forward, Agent, AgentConfig, TrainStats};
use super::mlp::Mlp;
use super::replay::{NStepAccumulator, ReplayBuffer, SharedReplay, Transition};
use crate::controller::{to_action, ActionMode, Controller, Perception, PolicyController};
use crate::env::FollowEnv;
use crate::error::{Error, Result};
use crate::human_motion::TrajectoryLibrary;
use crate::planner::PlannerConfig;
use crate::sim::EpisodeConfig;

pub const MAX_LEVEL: u8 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    /// Moving-average return that promotes levels 1, 2 and 3.
    pub thresholds: [f64; 3],
    /// Environment steps after which levels 1, 2 and 3 promote regardless.
    pub budgets: [u64; 3],
    /// Exploiter episodes in the moving average.
    pub window: usize,
    pub start_level: u8,
    /// Train on this level only and never promote.
    pub fixed_level: Option<u8>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            thresholds: [25.0, 18.0, 14.0],
            budgets: [100_000, 150_000, 200_000],
            window: 50,
            start_level: 1,
            fixed_level: None,
        }
    }
}

impl CurriculumConfig {
    /// Plain level-4 training from the first step.
    pub fn without_curriculum() -> Self {
        Self {
            fixed_level: Some(MAX_LEVEL),
            ..Self::default()
        }
    }

    pub fn initial_level(&self) -> u8 {
        self.fixed_level.unwrap_or(self.start_level).clamp(1, MAX_LEVEL)
    }
}

/// Next curriculum level from the recent exploiter returns (newest last)
/// and the environment steps spent at `level`. Levels never go down.
pub fn curriculum_advance(recent: &[f64], level: u8, steps_at_level: u64, cfg: &CurriculumConfig) -> u8 {
    if cfg.fixed_level.is_some() || level >= MAX_LEVEL || level == 0 {
        return level;
    }
    let i = (level - 1) as usize;
    if steps_at_level >= cfg.budgets[i] {
        return level + 1;
    }
    if cfg.window > 0 && recent.len() >= cfg.window {
        let tail = &recent[recent.len() - cfg.window..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        if mean >= cfg.thresholds[i] {
            return level + 1;
        }
    }
    level
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub agent: AgentConfig,
    pub mode: ActionMode,
    pub curriculum: CurriculumConfig,
    /// Environment steps summed over all workers.
    pub total_steps: u64,
    pub explorers: usize,
    pub exploiters: usize,
    /// Transitions in the buffer before the first update.
    pub warmup: usize,
    /// Environment steps per learner update.
    pub steps_per_update: u64,
    pub noise_start: f64,
    pub noise_end: f64,
    pub noise_decay_steps: u64,
    /// Threaded collection; off means the deterministic single-thread loop.
    pub parallel: bool,
    pub publish_every: u64,
    /// Environment steps between learning-curve points.
    pub log_every: u64,
    /// Exploiter episodes averaged into one learning-curve point.
    pub curve_window: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            agent: AgentConfig::default(),
            mode: ActionMode::Goal,
            curriculum: CurriculumConfig::default(),
            total_steps: 600_000,
            explorers: 3,
            exploiters: 1,
            warmup: 2_000,
            steps_per_update: 4,
            noise_start: 0.2,
            noise_end: 0.05,
            noise_decay_steps: 300_000,
            parallel: true,
            publish_every: 20,
            log_every: 5_000,
            curve_window: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.agent.action_dim != 2 {
            return Err(Error::Config("policies emit two actions".into()));
        }
        if self.explorers + self.exploiters == 0 {
            return Err(Error::Config("training needs at least one worker".into()));
        }
        if self.steps_per_update == 0 || self.publish_every == 0 || self.log_every == 0 || self.curve_window == 0 {
            return Err(Error::Config("update, publish and log cadences must be positive".into()));
        }
        if self.warmup < self.agent.batch_size {
            return Err(Error::Config("warmup must cover one batch".into()));
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return Err(Error::Config("exploration noise must be non-negative".into()));
        }
        Ok(())
    }

    pub fn noise_at(&self, step: u64) -> f64 {
        if self.noise_decay_steps == 0 {
            return self.noise_end;
        }
        if step >= self.noise_decay_steps {
            return self.noise_end;
        }
        let f = step as f64 / self.noise_decay_steps as f64;
        self.noise_start + (self.noise_end - self.noise_start) * f
    }
}

/// One learning-curve sample: mean and standard deviation of the latest
/// exploiter returns at a given environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub reward: f64,
    pub std: f64,
    pub level: u8,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    /// Every exploiter episode as (environment step, return, level).
    pub episodes: Vec<(u64, f64, u8)>,
    pub losses: Vec<TrainStats>,
    pub steps: u64,
    pub level: u8,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Exploiter bookkeeping shared by both loops.
#[derive(Debug)]
struct Progress {
    level: u8,
    level_start: u64,
    returns: Vec<f64>,
    episodes: Vec<(u64, f64, u8)>,
    curve: Vec<CurvePoint>,
    next_log: u64,
}

impl Progress {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            level: cfg.curriculum.initial_level(),
            level_start: 0,
            returns: Vec::new(),
            episodes: Vec::new(),
            curve: Vec::new(),
            next_log: cfg.log_every,
        }
    }

    fn episode_done(&mut self, step: u64, ret: f64, cfg: &TrainConfig) {
        self.returns.push(ret);
        self.episodes.push((step, ret, self.level));
        let next = curriculum_advance(&self.returns, self.level, step - self.level_start, &cfg.curriculum);
        if next != self.level {
            log::info!("curriculum: level {} -> {} at step {step}", self.level, next);
            self.level = next;
            self.level_start = step;
            self.returns.clear();
        }
    }

    fn maybe_log(&mut self, step: u64, cfg: &TrainConfig) {
        while step >= self.next_log {
            let tail: Vec<f64> = self
                .episodes
                .iter()
                .rev()
                .take(cfg.curve_window)
                .map(|e| e.1)
                .collect();
            let (reward, std) = mean_std(&tail);
            self.curve.push(CurvePoint {
                step: self.next_log,
                reward,
                std,
                level: self.level,
            });
            log::debug!("step {}: exploiter return {reward:.2} ± {std:.2}", self.next_log);
            self.next_log += cfg.log_every;
        }
    }

    /// Applies the budget rule even when no episode is finishing.
    fn check_budget(&mut self, step: u64, cfg: &TrainConfig) {
        let next = curriculum_advance(&[], self.level, step - self.level_start, &cfg.curriculum);
        if next != self.level {
            log::info!("curriculum: level {} -> {} at step {step} (budget)", self.level, next);
            self.level = next;
            self.level_start = step;
            self.returns.clear();
        }
    }
}

struct Worker {
    env: FollowEnv,
    exploit: bool,
    rng: ChaCha8Rng,
    nstep: NStepAccumulator,
    perception: Option<Perception>,
    episode_return: f64,
}

struct WorkerStep {
    transitions: Vec<Transition>,
    finished: Option<f64>,
}

impl Worker {
    fn new(env: FollowEnv, exploit: bool, seed: u64, cfg: &TrainConfig) -> Self {
        Self {
            env,
            exploit,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nstep: NStepAccumulator::new(cfg.agent.n_step, cfg.agent.gamma),
            perception: None,
            episode_return: 0.0,
        }
    }

    fn step(&mut self, actor: &Mlp, sigma: f64, level: u8, mode: ActionMode, planner: &PlannerConfig) -> Result<WorkerStep> {
        let p = match self.perception {
            Some(p) => p,
            None => {
                self.nstep.clear();
                self.episode_return = 0.0;
                self.env.reset(level)?
            }
        };
        let mut raw = actor_forward(actor, p.observation.as_slice());
        if !self.exploit && sigma > 0.0 {
            let noise = Normal::new(0.0, sigma).expect("sigma is positive");
            raw.iter_mut().for_each(|a| *a += noise.sample(&mut self.rng));
        }
        let action = to_action(&raw);
        let decision = mode.execute(action, &p, &self.env.world().robot, planner)?;
        let (outcome, next) = self.env.step(decision.command);
        let reward = outcome.reward.total;
        self.episode_return += reward;
        let end = outcome.end.map(|e| e.is_failure());
        let transitions = self.nstep.push(
            p.observation.as_slice(),
            &action,
            reward,
            next.observation.as_slice(),
            end,
        );
        let finished = if outcome.end.is_some() {
            self.perception = None;
            Some(self.episode_return)
        } else {
            self.perception = Some(next);
            None
        };
        Ok(WorkerStep { transitions, finished })
    }
}

/// Everything a training run needs besides its hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainSetup {
    pub episode: EpisodeConfig,
    pub planner: PlannerConfig,
    pub library: Arc<TrajectoryLibrary>,
    pub seed: u64,
}

fn worker_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1 + i as u64)
}

fn make_workers(cfg: &TrainConfig, setup: &TrainSetup) -> Result<Vec<Worker>> {
    (0..cfg.explorers + cfg.exploiters)
        .map(|i| {
            let env = FollowEnv::new(setup.episode, setup.library.clone(), worker_seed(setup.seed, 2 * i))?;
            let exploit = i >= cfg.explorers;
            Ok(Worker::new(env, exploit, worker_seed(setup.seed, 2 * i + 1), cfg))
        })
        .collect()
}

/// Trains a fresh agent. The report's curve comes from exploiter episodes.
pub fn train(cfg: &TrainConfig, setup: &TrainSetup) -> Result<(Agent, TrainReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let agent = Agent::new(cfg.agent.clone(), &mut rng)?;
    if cfg.parallel {
        train_parallel(cfg, setup, agent, rng)
    } else {
        train_deterministic(cfg, setup, agent, rng)
    }
}

fn train_deterministic(cfg: &TrainConfig, setup: &TrainSetup, mut agent: Agent, mut rng: ChaCha8Rng) -> Result<(Agent, TrainReport)> {
    let mut workers = make_workers(cfg, setup)?;
    let mut buffer = ReplayBuffer::new(cfg.agent.buffer_capacity);
    let mut progress = Progress::new(cfg);
    let mut losses = Vec::new();
    let mut step = 0u64;
    let mut updates = 0u64;
    while step < cfg.total_steps {
        for w in workers.iter_mut() {
            if step >= cfg.total_steps {
                break;
            }
            let out = w.step(&agent.actor, cfg.noise_at(step), progress.level, cfg.mode, &setup.planner)?;
            step += 1;
            for t in out.transitions {
                buffer.push(t);
            }
            if let (true, Some(ret)) = (w.exploit, out.finished) {
                progress.episode_done(step, ret, cfg);
            }
            progress.check_budget(step, cfg);
            progress.maybe_log(step, cfg);
        }
        if buffer.len() >= cfg.warmup {
            while updates * cfg.steps_per_update < step {
                let batch = buffer.sample(cfg.agent.batch_size, &mut rng)?;
                losses.push(agent.train_step(&batch)?);
                updates += 1;
            }
        }
    }
    let report = TrainReport {
        curve: progress.curve,
        episodes: progress.episodes,
        losses,
        steps: step,
        level: progress.level,
    };
    Ok((agent, report))
}

fn train_parallel(cfg: &TrainConfig, setup: &TrainSetup, mut agent: Agent, mut rng: ChaCha8Rng) -> Result<(Agent, TrainReport)> {
    let workers = make_workers(cfg, setup)?;
    let buffer = SharedReplay::new(cfg.agent.buffer_capacity);
    let snapshot = RwLock::new(Arc::new(agent.actor.clone()));
    let steps = AtomicU64::new(0);
    let level = AtomicU8::new(cfg.curriculum.initial_level());
    let stop = AtomicBool::new(false);
    let progress = Mutex::new(Progress::new(cfg));
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    let mut losses = Vec::new();

    std::thread::scope(|scope| {
        for mut w in workers {
            let (buffer, snapshot, steps, level, stop, progress, failure) =
                (&buffer, &snapshot, &steps, &level, &stop, &progress, &failure);
            scope.spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    let step = steps.fetch_add(1, Ordering::AcqRel);
                    if step >= cfg.total_steps {
                        break;
                    }
                    let actor = snapshot.read().clone();
                    let lvl = level.load(Ordering::Acquire);
                    match w.step(&actor, cfg.noise_at(step), lvl, cfg.mode, &setup.planner) {
                        Ok(out) => {
                            buffer.push_all(out.transitions);
                            let mut pr = progress.lock();
                            if let (true, Some(ret)) = (w.exploit, out.finished) {
                                pr.episode_done(step + 1, ret, cfg);
                            }
                            pr.check_budget(step + 1, cfg);
                            pr.maybe_log(step + 1, cfg);
                            level.store(pr.level, Ordering::Release);
                        }
                        Err(e) => {
                            *failure.lock() = Some(e);
                            stop.store(true, Ordering::Release);
                        }
                    }
                }
            });
        }

        // learner on this thread
        let mut updates = 0u64;
        loop {
            if stop.load(Ordering::Acquire) {
                break;
            }
            let collected = steps.load(Ordering::Acquire).min(cfg.total_steps);
            let due = buffer.len() >= cfg.warmup && updates * cfg.steps_per_update < collected;
            if !due {
                if collected >= cfg.total_steps {
                    break;
                }
                std::thread::yield_now();
                continue;
            }
            let result = buffer
                .sample(cfg.agent.batch_size, &mut rng)
                .and_then(|batch| agent.train_step(&batch));
            match result {
                Ok(s) => losses.push(s),
                Err(e) => {
                    *failure.lock() = Some(e);
                    stop.store(true, Ordering::Release);
                    break;
                }
            }
            updates += 1;
            if updates % cfg.publish_every == 0 {
                *snapshot.write() = Arc::new(agent.actor.clone());
            }
        }
    });

    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let progress = progress.into_inner();
    let report = TrainReport {
        curve: progress.curve,
        episodes: progress.episodes,
        losses,
        steps: steps.load(Ordering::Acquire).min(cfg.total_steps),
        level: progress.level,
    };
    Ok((agent, report))
}

/// Greedy returns of `episodes` fresh episodes at `level`.
pub fn evaluate_policy(
    actor: &Mlp,
    mode: ActionMode,
    level: u8,
    episodes: usize,
    setup: &TrainSetup,
) -> Result<Vec<f64>> {
    let mut controller = PolicyController::new(actor.clone(), mode, setup.planner)?;
    evaluate_controller(&mut controller, level, episodes, setup)
}

/// Returns of `episodes` fresh episodes at `level` under any controller.
/// Spawns and person motions depend only on `setup.seed`, so different
/// controllers face the same episodes.
pub fn evaluate_controller(
    controller: &mut dyn Controller,
    level: u8,
    episodes: usize,
    setup: &TrainSetup,
) -> Result<Vec<f64>> {
    let mut env = FollowEnv::new(setup.episode, setup.library.clone(), setup.seed)?;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut p = env.reset(level)?;
        controller.reset();
        let mut total = 0.0;
        loop {
            let d = controller.act(&p, &env.world().robot)?;
            let (out, next) = env.step(d.command);
            total += out.reward.total;
            p = next;
            if out.end.is_some() {
                break;
            }
        }
        returns.push(total);
    }
    Ok(returns)
}

/// Moving average over the trailing `window` values, same length as `xs`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut q = VecDeque::new();
    let mut sum = 0.0;
    for x in xs {
        q.push_back(*x);
        sum += x;
        if q.len() > window.max(1) {
            sum -= q.pop_front().unwrap();
        }
        out.push(sum / q.len() as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curriculum_rules() {
        let cfg = CurriculumConfig::default();
        assert_eq!(curriculum_advance(&[100.0; 60], 4, 10_000_000, &cfg), 4);
        assert_eq!(curriculum_advance(&[10.0; 60], 1, 1_000, &cfg), 1);
        assert_eq!(curriculum_advance(&[26.0; 60], 1, 1_000, &cfg), 2);
        assert_eq!(curriculum_advance(&[19.0; 60], 2, 1_000, &cfg), 3);
        assert_eq!(curriculum_advance(&[14.0; 50], 3, 1_000, &cfg), 4);
        // too few episodes for the window
        assert_eq!(curriculum_advance(&[30.0; 49], 1, 1_000, &cfg), 1);
        // budget expiry
        assert_eq!(curriculum_advance(&[], 1, 100_000, &cfg), 2);
        assert_eq!(curriculum_advance(&[], 3, 199_999, &cfg), 3);
        // only the latest window counts
        let mut hist = vec![100.0; 50];
        hist.extend([0.0; 50]);
        assert_eq!(curriculum_advance(&hist, 1, 0, &cfg), 1);
        let fixed = CurriculumConfig::without_curriculum();
        assert_eq!(fixed.initial_level(), 4);
        assert_eq!(curriculum_advance(&[100.0; 60], 1, 1_000_000, &fixed), 1);
    }

    #[test]
    fn noise_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.noise_at(0), 0.2);
        assert!((cfg.noise_at(150_000) - 0.125).abs() < 1e-12);
        assert_eq!(cfg.noise_at(10_000_000), 0.05);
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        assert!(moving_average(&[], 3).is_empty());
    }
}
