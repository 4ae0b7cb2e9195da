//! Independent reference evaluators and instance generators shared by the
//! integration tests and the acceptance run.

#![allow(dead_code)]

use rand::Rng;

use followahead::geometry::Pose;
use followahead::planner::{band_cost, Band, DynamicObstacle, PlannerConfig};
use followahead::rl::agent::{actor_loss_grad, critic_forward};
use followahead::rl::distribution::Support;
use followahead::rl::mlp::{Activation, Mlp};

/// The reward written out case by case, with the angle folded to [0, 180].
pub fn reward_oracle(d: f64, alpha_deg: f64) -> f64 {
    let r_d = if d < 0.5 {
        -1.0
    } else if d < 1.0 {
        d - 1.0
    } else if d < 1.5 {
        0.5 * (d - 1.0)
    } else if d < 2.0 {
        0.5 * (2.0 - d)
    } else if d <= 5.0 {
        0.25 - 0.25 * d
    } else {
        -1.0
    };
    let a = if alpha_deg < 0.0 { -alpha_deg } else { alpha_deg };
    let r_o = if a < 25.0 { 0.5 - a / 50.0 } else { -a / 720.0 };
    let r = r_d + r_o;
    if r > 1.0 {
        1.0
    } else if r < -1.0 {
        -1.0
    } else {
        r
    }
}

/// Projection through the triangular kernel: every shifted atom spreads its
/// mass over the output atoms by `max(0, 1 - |Tz - z_i| / Δz)`.
pub fn projection_oracle(reward: f64, done: bool, probs: &[f64], gamma_n: f64, s: &Support) -> Vec<f64> {
    let dz = (s.v_max - s.v_min) / (s.atoms - 1) as f64;
    let mut out = vec![0.0; s.atoms];
    for (j, p) in probs.iter().enumerate() {
        let zj = s.v_min + j as f64 * dz;
        let tz = if done { reward } else { reward + gamma_n * zj };
        let tz = tz.max(s.v_min).min(s.v_max);
        for (i, o) in out.iter_mut().enumerate() {
            let zi = s.v_min + i as f64 * dz;
            let w = 1.0 - (tz - zi).abs() / dz;
            if w > 0.0 {
                *o += p * w;
            }
        }
    }
    out
}

/// Central differences of `f` at `x`.
pub fn finite_difference(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = work[i];
            work[i] = orig + h;
            let up = f(&work);
            work[i] = orig - h;
            let down = f(&work);
            work[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖, 1e-8).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

pub fn random_pose<R: Rng>(rng: &mut R) -> Pose {
    Pose::new(
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
        rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

fn random_activation<R: Rng>(rng: &mut R) -> Activation {
    match rng.random_range(0..3) {
        0 => Activation::Relu,
        1 => Activation::Tanh,
        _ => Activation::Identity,
    }
}

/// Small random network with random layer sizes and activations.
pub fn random_mlp<R: Rng>(rng: &mut R, input: usize, output: usize) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![input];
    for _ in 0..depth {
        sizes.push(rng.random_range(2..=12));
    }
    sizes.push(output);
    let acts: Vec<Activation> = (0..sizes.len() - 1).map(|_| random_activation(rng)).collect();
    let mut net = Mlp::zeros(&sizes, &acts).unwrap();
    for p in net.params_mut() {
        *p = rng.random_range(-0.8..0.8);
    }
    net
}

/// Worst relative error of MLP backprop on `instances` random networks,
/// each scored through a random linear read-out of its output.
pub fn mlp_gradient_error<R: Rng>(rng: &mut R, instances: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (n_in, n_out) = (rng.random_range(1..=8), rng.random_range(1..=5));
        let net = random_mlp(rng, n_in, n_out);
        let x = random_vec(rng, n_in, 1.0);
        let c = random_vec(rng, n_out, 1.0);
        let mut grad = vec![0.0; net.params().len()];
        net.backward(&net.forward_cached(&x), &c, &mut grad).unwrap();
        let mut probe = net.clone();
        let fd = finite_difference(net.params(), 1e-6, |p| {
            probe.params_mut().copy_from_slice(p);
            probe.forward(&x).iter().zip(&c).map(|(y, c)| y * c).sum()
        });
        worst = worst.max(relative_error(&grad, &fd));
    }
    worst
}

/// Worst relative error of the actor gradient taken through a categorical
/// critic, on `instances` random actor/critic pairs.
pub fn actor_gradient_error<R: Rng>(rng: &mut R, instances: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let obs_dim = rng.random_range(1..=6);
        let atoms = rng.random_range(3..=11);
        let support = Support::new(-5.0, 5.0, atoms);
        let mut actor = random_mlp(rng, obs_dim, 2);
        // keep the bounded output layer the agent uses
        let sizes = actor.sizes().to_vec();
        let mut acts = actor.activations().to_vec();
        *acts.last_mut().unwrap() = Activation::Tanh;
        actor = Mlp::from_parts(sizes, acts, actor.params().to_vec()).unwrap();
        let critic = random_mlp(rng, obs_dim + 2, atoms);
        let obs = random_vec(rng, obs_dim, 1.0);
        let mut grad = vec![0.0; actor.params().len()];
        actor_loss_grad(&actor, &critic, support, &obs, &mut grad).unwrap();
        let mut probe = actor.clone();
        let fd = finite_difference(actor.params(), 1e-6, |p| {
            probe.params_mut().copy_from_slice(p);
            -critic_forward(&critic, support, &obs, &probe.forward(&obs)).mean()
        });
        worst = worst.max(relative_error(&grad, &fd));
    }
    worst
}

/// A perturbed straight band with one or two people nearby.
pub fn random_band<R: Rng>(rng: &mut R, cfg: &PlannerConfig) -> (Band, Vec<DynamicObstacle>) {
    let start = Pose::new(0.0, 0.0, rng.random_range(-1.0..1.0)).with_velocity(rng.random_range(-0.5..1.0), rng.random_range(-1.0..1.0));
    let goal = Pose::new(rng.random_range(0.5..3.0), rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5));
    let mut band = Band::straight(&start, &goal, cfg);
    let mut vars = band.free_vars();
    let n_pose_vars = 3 * (band.poses.len() - 2);
    for (i, v) in vars.iter_mut().enumerate() {
        if i < n_pose_vars {
            *v += rng.random_range(-0.2..0.2);
        } else {
            *v = (*v * rng.random_range(0.6..1.6)).clamp(cfg.dt_min * 1.5, cfg.dt_max);
        }
    }
    band.set_free_vars(&vars);
    let obstacles = (0..rng.random_range(1..=2))
        .map(|_| {
            DynamicObstacle::new(
                rng.random_range(0.0..3.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                cfg.prediction_horizon,
            )
        })
        .collect();
    (band, obstacles)
}

/// Worst relative error of the analytic band-cost gradient.
pub fn band_gradient_error<R: Rng>(rng: &mut R, instances: usize) -> f64 {
    let cfg = PlannerConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let (band, obstacles) = random_band(rng, &cfg);
        let analytic = band_cost(&band, &obstacles, &cfg).gradient;
        let mut probe = band.clone();
        let fd = finite_difference(&band.free_vars(), 1e-6, |v| {
            probe.set_free_vars(v);
            band_cost(&probe, &obstacles, &cfg).total
        });
        worst = worst.max(relative_error(&analytic, &fd));
    }
    worst
}
