//! Actor, distributional critic and their target copies.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::distribution::{categorical_project, softmax, Support, ValueDistribution};
use super::mlp::{clip_grad_norm, soft_update, Activation, Mlp};
use super::replay::Transition;
use crate::error::{Error, Result};
use crate::sim::OBS_DIM;

/// Learner hyperparameters. None of these come from published values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub gamma: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub grad_clip: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            obs_dim: OBS_DIM,
            action_dim: 2,
            actor_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            atoms: 51,
            v_min: -100.0,
            v_max: 100.0,
            gamma: 0.99,
            n_step: 5,
            batch_size: 256,
            buffer_capacity: 200_000,
            tau: 5e-3,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            grad_clip: 40.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.obs_dim > 0
            && self.action_dim > 0
            && self.atoms >= 2
            && self.v_max > self.v_min
            && (0.0..1.0).contains(&self.gamma)
            && self.n_step >= 1
            && self.batch_size >= 1
            && self.buffer_capacity >= self.batch_size
            && (0.0..=1.0).contains(&self.tau)
            && self.actor_lr > 0.0
            && self.critic_lr > 0.0
            && self.grad_clip > 0.0
            && !self.actor_hidden.contains(&0)
            && !self.critic_hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid agent config: {self:?}")))
        }
    }

    pub fn support(&self) -> Support {
        Support::new(self.v_min, self.v_max, self.atoms)
    }

    fn actor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_dim];
        s.extend(&self.actor_hidden);
        s.push(self.action_dim);
        s
    }

    fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.obs_dim + self.action_dim];
        s.extend(&self.critic_hidden);
        s.push(self.atoms);
        s
    }
}

pub fn actor_forward(net: &Mlp, obs: &[f64]) -> Vec<f64> {
    net.forward(obs)
}

fn critic_input(obs: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(obs.len() + action.len());
    x.extend_from_slice(obs);
    x.extend_from_slice(action);
    x
}

pub fn critic_forward(net: &Mlp, support: Support, obs: &[f64], action: &[f64]) -> ValueDistribution {
    ValueDistribution::from_logits(support, &net.forward(&critic_input(obs, action)))
}

/// Cross-entropy of the critic's distribution at `(obs, action)` against
/// `target`; the parameter gradient is added into `grad`.
pub fn critic_loss_grad(critic: &Mlp, obs: &[f64], action: &[f64], target: &[f64], grad: &mut [f64]) -> Result<f64> {
    let cache = critic.forward_cached(&critic_input(obs, action));
    let p = softmax(cache.output());
    let loss = -target
        .iter()
        .zip(&p)
        .map(|(m, q)| if *m > 0.0 { m * q.max(1e-300).ln() } else { 0.0 })
        .sum::<f64>();
    let total: f64 = target.iter().sum();
    let dlogits: Vec<f64> = p.iter().zip(target).map(|(q, m)| q * total - m).collect();
    critic.backward(&cache, &dlogits, grad)?;
    Ok(loss)
}

/// Negative expected critic value at the actor's action. The gradient with
/// respect to the actor parameters, taken through the critic, is added into
/// `grad`; the critic is left untouched.
pub fn actor_loss_grad(actor: &Mlp, critic: &Mlp, support: Support, obs: &[f64], grad: &mut [f64]) -> Result<f64> {
    let a_cache = actor.forward_cached(obs);
    let action = a_cache.output();
    let c_cache = critic.forward_cached(&critic_input(obs, action));
    let p = softmax(c_cache.output());
    let z = support.values();
    let q: f64 = p.iter().zip(&z).map(|(pi, zi)| pi * zi).sum();
    // d(-Q)/d logit_i = -p_i (z_i - Q)
    let dlogits: Vec<f64> = p.iter().zip(&z).map(|(pi, zi)| -pi * (zi - q)).collect();
    let mut scratch = vec![0.0; critic.params().len()];
    let d_input = critic.backward(&c_cache, &dlogits, &mut scratch)?;
    actor.backward(&a_cache, &d_input[obs.len()..], grad)?;
    Ok(-q)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub critic_grad_norm: f64,
    pub actor_grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub cfg: AgentConfig,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    updates: u64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(cfg: AgentConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let actor = Mlp::new(&cfg.actor_sizes(), Activation::Relu, Activation::Tanh, 3e-3, rng);
        let critic = Mlp::new(&cfg.critic_sizes(), Activation::Relu, Activation::Identity, 3e-3, rng);
        Ok(Self::from_nets(cfg, actor, critic))
    }

    /// Wraps existing networks; the targets start as copies.
    pub fn from_nets(cfg: AgentConfig, actor: Mlp, critic: Mlp) -> Self {
        let actor_opt = Adam::new(actor.params().len(), cfg.actor_lr);
        let critic_opt = Adam::new(critic.params().len(), cfg.critic_lr);
        Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            updates: 0,
            cfg,
        }
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn support(&self) -> Support {
        self.cfg.support()
    }

    pub fn act(&self, obs: &[f64]) -> Vec<f64> {
        actor_forward(&self.actor, obs)
    }

    pub fn value(&self, obs: &[f64], action: &[f64]) -> ValueDistribution {
        critic_forward(&self.critic, self.support(), obs, action)
    }

    /// Projected n-step target distribution from the target networks.
    pub fn target_distribution(&self, t: &Transition) -> Vec<f64> {
        let support = self.support();
        let gamma_n = self.cfg.gamma.powi(t.n as i32);
        if t.done {
            return categorical_project(t.reward_n, true, &[1.0], 0.0, &support);
        }
        let next_action = actor_forward(&self.target_actor, &t.next_obs);
        let next = critic_forward(&self.target_critic, support, &t.next_obs, &next_action);
        categorical_project(t.reward_n, false, &next.probs, gamma_n, &support)
    }

    /// One critic step towards the projected targets. Returns (loss, grad norm).
    pub fn critic_update(&mut self, batch: &[Transition]) -> Result<(f64, f64)> {
        let mut grad = vec![0.0; self.critic.params().len()];
        let mut loss = 0.0;
        for t in batch {
            let target = self.target_distribution(t);
            loss += critic_loss_grad(&self.critic, &t.obs, &t.action, &target, &mut grad)?;
        }
        let scale = 1.0 / batch.len() as f64;
        loss *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        let norm = clip_grad_norm(&mut grad, self.cfg.grad_clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Diverged(format!(
                "critic loss {loss}, gradient norm {norm} after {} updates",
                self.updates
            )));
        }
        self.critic_opt.step(self.critic.params_mut(), &grad);
        Ok((loss, norm))
    }

    /// One actor step up the critic's expected value. Returns (loss, grad norm).
    pub fn actor_update(&mut self, batch: &[Transition]) -> Result<(f64, f64)> {
        let support = self.support();
        let mut grad = vec![0.0; self.actor.params().len()];
        let mut loss = 0.0;
        for t in batch {
            loss += actor_loss_grad(&self.actor, &self.critic, support, &t.obs, &mut grad)?;
        }
        let scale = 1.0 / batch.len() as f64;
        loss *= scale;
        grad.iter_mut().for_each(|g| *g *= scale);
        let norm = clip_grad_norm(&mut grad, self.cfg.grad_clip);
        if !loss.is_finite() || !norm.is_finite() {
            return Err(Error::Diverged(format!(
                "actor loss {loss}, gradient norm {norm} after {} updates",
                self.updates
            )));
        }
        self.actor_opt.step(self.actor.params_mut(), &grad);
        Ok((loss, norm))
    }

    /// Critic step, actor step, then target averaging.
    pub fn train_step(&mut self, batch: &[Transition]) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let (critic_loss, critic_grad_norm) = self.critic_update(batch)?;
        let (actor_loss, actor_grad_norm) = self.actor_update(batch)?;
        soft_update(&mut self.target_critic, &self.critic, self.cfg.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.cfg.tau)?;
        self.updates += 1;
        Ok(TrainStats {
            critic_loss,
            actor_loss,
            critic_grad_norm,
            actor_grad_norm,
        })
    }
}
