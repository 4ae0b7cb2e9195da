//! Timed-elastic-band local planner, reduced to what following a person
//! needs: one dynamic obstacle, soft constraints, and a projected gradient
//! descent solver.
//!
//! A band is a chain of poses `P_0 .. P_{n-1}` separated by time intervals
//! `dt_0 .. dt_{n-2}`. The start pose is pinned to the robot and the last pose
//! to the goal; everything else is free. The cost is
//!
//! ```text
//!   w_time * Σ dt
//! + w_obs  * Σ hinge(ρ' - clearance_k)²        intermediate poses vs. person
//! + w_vel  * Σ hinge(|v| - v_max)² + hinge(|ω| - ω_max)²
//! + w_acc  * Σ hinge(|a| - a_max)² + hinge(|α| - α_max)²
//! + w_nh   * Σ ((cos θ_i + cos θ_{i+1}) Δy - (sin θ_i + sin θ_{i+1}) Δx)²
//! ```
//!
//! where `ρ' = ρ + margin` and the person is extrapolated at constant
//! velocity to each pose's timestamp. The acceleration chain is anchored to
//! the robot's current velocity at the start and to rest at the goal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose};
use crate::human_motion::MotionCommand;

/// Regulariser inside square roots so gradients stay finite at zero length.
const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub w_time: f64,
    pub w_obstacle: f64,
    pub w_velocity: f64,
    pub w_acceleration: f64,
    pub w_nonholonomic: f64,
    /// Minimum person clearance ρ, meters.
    pub clearance: f64,
    /// Extra distance added to ρ inside the obstacle hinge.
    pub clearance_margin: f64,
    /// The person is extrapolated at constant velocity up to this many
    /// seconds into the band and held there afterwards.
    pub prediction_horizon: f64,
    pub max_v: f64,
    pub max_omega: f64,
    pub max_acc: f64,
    pub max_angular_acc: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub n_poses: usize,
    /// Time span of the initial band, seconds.
    pub horizon: f64,
    pub max_iterations: usize,
    /// Time the extracted command is executed for before the next replan.
    /// When the first band segment is shorter, the command aims at the band
    /// position reached after this long.
    pub control_period: f64,
    /// The command filter rolls a candidate out this long against the
    /// person's constant-velocity prediction.
    pub shield_horizon: f64,
    /// Extra distance over `clearance` the filter keeps.
    pub shield_buffer: f64,
    /// Dynamic window of the filter: reachable change of v and ω in one
    /// control period.
    pub shield_max_dv: f64,
    pub shield_max_domega: f64,
    /// First trial step of the line search.
    pub step_size: f64,
    /// Stop once the relative cost improvement falls below this.
    pub tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            w_time: 1.0,
            w_obstacle: 50.0,
            w_velocity: 10.0,
            w_acceleration: 5.0,
            w_nonholonomic: 20.0,
            clearance: 0.5,
            clearance_margin: 0.3,
            prediction_horizon: 1.0,
            max_v: 1.0,
            max_omega: 2.0,
            max_acc: 1.0,
            max_angular_acc: 2.0,
            dt_min: 0.01,
            dt_max: 0.6,
            n_poses: 15,
            horizon: 3.0,
            max_iterations: 150,
            control_period: 0.2,
            shield_horizon: 0.6,
            shield_buffer: 0.1,
            shield_max_dv: 0.5,
            shield_max_domega: 2.0,
            step_size: 0.01,
            tolerance: 1e-6,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            self.w_time,
            self.w_obstacle,
            self.w_velocity,
            self.w_acceleration,
            self.w_nonholonomic,
        ];
        let ok = weights.iter().all(|w| *w >= 0.0)
            && self.clearance > 0.0
            && self.clearance_margin >= 0.0
            && self.prediction_horizon >= 0.0
            && self.max_v > 0.0
            && self.max_omega > 0.0
            && self.max_acc > 0.0
            && self.max_angular_acc > 0.0
            && 0.0 < self.dt_min
            && self.dt_min <= self.dt_max
            && self.n_poses >= 3
            && self.horizon > 0.0
            && self.control_period > 0.0
            && self.shield_horizon >= 0.0
            && self.shield_buffer >= 0.0
            && self.shield_max_dv >= 0.0
            && self.shield_max_domega >= 0.0
            && self.step_size > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid planner config: {self:?}")))
        }
    }

    fn effective_clearance(&self) -> f64 {
        self.clearance + self.clearance_margin
    }
}

/// The person as a point moving at constant velocity until `horizon`
/// seconds, then standing still.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicObstacle {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub horizon: f64,
}

impl DynamicObstacle {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64, horizon: f64) -> Self {
        Self { x, y, vx, vy, horizon }
    }

    pub fn fixed(x: f64, y: f64) -> Self {
        Self::new(x, y, 0.0, 0.0, 0.0)
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        let t = t.min(self.horizon);
        (self.x + self.vx * t, self.y + self.vy * t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub poses: Vec<BandPose>,
    pub dts: Vec<f64>,
    /// Velocity of the robot when the band was created; anchors the
    /// acceleration chain.
    pub start_v: f64,
    pub start_omega: f64,
    /// Set when the optimiser stopped on the iteration cap.
    pub degraded: bool,
    pub iterations: usize,
}

impl Band {
    /// Straight-line band from `start` to `goal` spanning the configured
    /// horizon. Intermediate headings follow the line.
    pub fn straight(start: &Pose, goal: &Pose, cfg: &PlannerConfig) -> Self {
        let n = cfg.n_poses.max(3);
        let dx = goal.x - start.x;
        let dy = goal.y - start.y;
        let line_heading = if dx.hypot(dy) > 1e-3 { Some(dy.atan2(dx)) } else { None };
        let dtheta = wrap_angle(goal.phi - start.phi);
        let poses = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                let theta = if k == 0 {
                    start.phi
                } else if k == n - 1 {
                    goal.phi
                } else {
                    line_heading.unwrap_or_else(|| wrap_angle(start.phi + s * dtheta))
                };
                BandPose {
                    x: start.x + s * dx,
                    y: start.y + s * dy,
                    theta,
                }
            })
            .collect();
        let dt = (cfg.horizon / (n - 1) as f64).clamp(cfg.dt_min, cfg.dt_max);
        Self {
            poses,
            dts: vec![dt; n - 1],
            start_v: start.v,
            start_omega: start.omega,
            degraded: false,
            iterations: 0,
        }
    }

    /// Band along a cubic Hermite curve leaving `start` along its heading
    /// and arriving along the goal heading, driven forward or in reverse,
    /// whichever curve is shorter (reverse counts 1.5 times its length).
    /// Time intervals follow a trapezoidal speed profile from the robot's
    /// current speed to rest.
    pub fn hermite(start: &Pose, goal: &Pose, cfg: &PlannerConfig) -> Self {
        let n = cfg.n_poses.max(3);
        let chord = (goal.x - start.x).hypot(goal.y - start.y);
        if chord < 1e-3 {
            return Self::straight(start, goal, cfg);
        }
        let curve = |dir: f64| -> Vec<(f64, f64, f64)> {
            let (t0x, t0y) = (dir * chord * start.phi.cos(), dir * chord * start.phi.sin());
            let (t1x, t1y) = (dir * chord * goal.phi.cos(), dir * chord * goal.phi.sin());
            (0..n)
                .map(|k| {
                    let u = k as f64 / (n - 1) as f64;
                    let (u2, u3) = (u * u, u * u * u);
                    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
                    let h10 = u3 - 2.0 * u2 + u;
                    let h01 = -2.0 * u3 + 3.0 * u2;
                    let h11 = u3 - u2;
                    let x = h00 * start.x + h10 * t0x + h01 * goal.x + h11 * t1x;
                    let y = h00 * start.y + h10 * t0y + h01 * goal.y + h11 * t1y;
                    // derivative gives the travel direction
                    let d00 = 6.0 * u2 - 6.0 * u;
                    let d10 = 3.0 * u2 - 4.0 * u + 1.0;
                    let d01 = -6.0 * u2 + 6.0 * u;
                    let d11 = 3.0 * u2 - 2.0 * u;
                    let dx = d00 * start.x + d10 * t0x + d01 * goal.x + d11 * t1x;
                    let dy = d00 * start.y + d10 * t0y + d01 * goal.y + d11 * t1y;
                    let travel = dy.atan2(dx);
                    let theta = if dir > 0.0 { travel } else { wrap_angle(travel + std::f64::consts::PI) };
                    (x, y, theta)
                })
                .collect()
        };
        let length = |pts: &[(f64, f64, f64)]| pts.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum::<f64>();
        let forward = curve(1.0);
        let reverse = curve(-1.0);
        let pts = if length(&reverse) * 1.5 < length(&forward) { reverse } else { forward };

        let seg: Vec<f64> = pts.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).collect();
        let total: f64 = seg.iter().sum();
        let acc = 0.8 * cfg.max_acc;
        let cruise = 0.8 * cfg.max_v;
        let v0 = start.v.abs().min(cruise);
        let speed_at = |s: f64| -> f64 {
            let up = (v0 * v0 + 2.0 * acc * s).sqrt();
            let down = (2.0 * acc * (total - s).max(0.0)).sqrt();
            cruise.min(up).min(down)
        };
        let mut s0 = 0.0;
        let mut dts = Vec::with_capacity(n - 1);
        for (i, len) in seg.iter().enumerate() {
            let (p, q) = (&pts[i], &pts[i + 1]);
            let v = 0.5 * (speed_at(s0) + speed_at(s0 + len));
            let turn = wrap_angle(q.2 - p.2).abs() / (0.8 * cfg.max_omega);
            let dt = (len / v.max(0.05)).max(turn);
            dts.push(dt.clamp(cfg.dt_min, cfg.dt_max));
            s0 += len;
        }
        let mut poses: Vec<BandPose> = pts.iter().map(|&(x, y, theta)| BandPose { x, y, theta }).collect();
        poses[0] = BandPose {
            x: start.x,
            y: start.y,
            theta: start.phi,
        };
        poses[n - 1] = BandPose {
            x: goal.x,
            y: goal.y,
            theta: goal.phi,
        };
        Self {
            poses,
            dts,
            start_v: start.v,
            start_omega: start.omega,
            degraded: false,
            iterations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Timestamp of every pose, starting at zero.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut t = 0.0;
        let mut out = Vec::with_capacity(self.poses.len());
        out.push(0.0);
        for dt in &self.dts {
            t += dt;
            out.push(t);
        }
        out
    }

    pub fn duration(&self) -> f64 {
        self.dts.iter().sum()
    }

    /// Smallest distance between any band pose and the extrapolated obstacle.
    pub fn min_clearance(&self, obstacle: &DynamicObstacle) -> f64 {
        self.poses
            .iter()
            .zip(self.timestamps())
            .map(|(p, t)| {
                let (ox, oy) = obstacle.at(t);
                (p.x - ox).hypot(p.y - oy)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Number of free optimisation variables.
    pub fn n_free(&self) -> usize {
        3 * (self.poses.len() - 2) + self.dts.len()
    }

    /// Free variables packed as `[x_1, y_1, θ_1, …, x_{n-2}, y_{n-2}, θ_{n-2}, dt_0, …]`.
    pub fn free_vars(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_free());
        for p in &self.poses[1..self.poses.len() - 1] {
            out.extend_from_slice(&[p.x, p.y, p.theta]);
        }
        out.extend_from_slice(&self.dts);
        out
    }

    pub fn set_free_vars(&mut self, vars: &[f64]) {
        let n = self.poses.len();
        for k in 1..n - 1 {
            let b = 3 * (k - 1);
            self.poses[k] = BandPose {
                x: vars[b],
                y: vars[b + 1],
                theta: vars[b + 2],
            };
        }
        self.dts.copy_from_slice(&vars[3 * (n - 2)..]);
    }
}

/// Cost split into its terms, plus the gradient over the free variables.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCost {
    pub total: f64,
    pub time: f64,
    pub obstacle: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub nonholonomic: f64,
    pub gradient: Vec<f64>,
}

fn hinge(x: f64) -> f64 {
    x.max(0.0)
}

pub fn band_cost(band: &Band, obstacles: &[DynamicObstacle], cfg: &PlannerConfig) -> BandCost {
    let n = band.poses.len();
    let m = n - 1;
    let p = &band.poses;
    let dts = &band.dts;

    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut gth = vec![0.0; n];
    let mut gdt = vec![0.0; m];

    // time
    let time = cfg.w_time * dts.iter().sum::<f64>();
    gdt.iter_mut().for_each(|g| *g += cfg.w_time);

    // per-segment kinematics
    let mut v = vec![0.0; m];
    let mut w = vec![0.0; m];
    let mut seg = vec![(0.0, 0.0, 0.0); m]; // (dx, dy, length)
    for i in 0..m {
        let dx = p[i + 1].x - p[i].x;
        let dy = p[i + 1].y - p[i].y;
        let s = (dx * dx + dy * dy + EPS).sqrt();
        seg[i] = (dx, dy, s);
        v[i] = s / dts[i];
        w[i] = wrap_angle(p[i + 1].theta - p[i].theta) / dts[i];
    }
    // dC/dv, dC/dω collected first, then pushed through the kinematics
    let mut gv = vec![0.0; m];
    let mut gw = vec![0.0; m];

    let mut velocity = 0.0;
    for i in 0..m {
        let hv = hinge(v[i] - cfg.max_v);
        let hw = hinge(w[i].abs() - cfg.max_omega);
        velocity += cfg.w_velocity * (hv * hv + hw * hw);
        gv[i] += cfg.w_velocity * 2.0 * hv;
        gw[i] += cfg.w_velocity * 2.0 * hw * w[i].signum();
    }

    let mut acceleration = 0.0;
    let mut acc_term = |a: f64, limit: f64| -> (f64, f64) {
        let h = hinge(a.abs() - limit);
        acceleration += cfg.w_acceleration * h * h;
        // derivative of the penalty with respect to a
        (cfg.w_acceleration * 2.0 * h * a.signum(), h)
    };
    // start: robot's current velocity to the first segment
    {
        let a = (v[0] - band.start_v.abs()) / dts[0];
        let (da, _) = acc_term(a, cfg.max_acc);
        gv[0] += da / dts[0];
        gdt[0] += da * (-a / dts[0]);
        let al = (w[0] - band.start_omega) / dts[0];
        let (da, _) = acc_term(al, cfg.max_angular_acc);
        gw[0] += da / dts[0];
        gdt[0] += da * (-al / dts[0]);
    }
    for i in 0..m.saturating_sub(1) {
        let mid = 0.5 * (dts[i] + dts[i + 1]);
        let a = (v[i + 1] - v[i]) / mid;
        let (da, _) = acc_term(a, cfg.max_acc);
        gv[i + 1] += da / mid;
        gv[i] -= da / mid;
        gdt[i] += da * (-0.5 * a / mid);
        gdt[i + 1] += da * (-0.5 * a / mid);
        let al = (w[i + 1] - w[i]) / mid;
        let (da, _) = acc_term(al, cfg.max_angular_acc);
        gw[i + 1] += da / mid;
        gw[i] -= da / mid;
        gdt[i] += da * (-0.5 * al / mid);
        gdt[i + 1] += da * (-0.5 * al / mid);
    }
    // goal: come to rest on the last segment
    {
        let last = m - 1;
        let a = -v[last] / dts[last];
        let (da, _) = acc_term(a, cfg.max_acc);
        gv[last] += da * (-1.0 / dts[last]);
        gdt[last] += da * (-a / dts[last]);
    }

    // v = s / dt and ω = Δθ / dt back to poses and dts
    for i in 0..m {
        let (dx, dy, s) = seg[i];
        let dt = dts[i];
        let dvdx = dx / (s * dt);
        let dvdy = dy / (s * dt);
        gx[i + 1] += gv[i] * dvdx;
        gx[i] -= gv[i] * dvdx;
        gy[i + 1] += gv[i] * dvdy;
        gy[i] -= gv[i] * dvdy;
        gdt[i] += gv[i] * (-v[i] / dt) + gw[i] * (-w[i] / dt);
        gth[i + 1] += gw[i] / dt;
        gth[i] -= gw[i] / dt;
    }

    // nonholonomic drift
    let mut nonholonomic = 0.0;
    for i in 0..m {
        let (dx, dy, _) = seg[i];
        let (s0, c0) = p[i].theta.sin_cos();
        let (s1, c1) = p[i + 1].theta.sin_cos();
        let h = (c0 + c1) * dy - (s0 + s1) * dx;
        nonholonomic += cfg.w_nonholonomic * h * h;
        let g = cfg.w_nonholonomic * 2.0 * h;
        gth[i] += g * (-s0 * dy - c0 * dx);
        gth[i + 1] += g * (-s1 * dy - c1 * dx);
        gx[i] += g * (s0 + s1);
        gx[i + 1] -= g * (s0 + s1);
        gy[i] -= g * (c0 + c1);
        gy[i + 1] += g * (c0 + c1);
    }

    // dynamic obstacle against the intermediate poses
    let mut obstacle = 0.0;
    let rho = cfg.effective_clearance();
    for o in obstacles {
        let mut tau = 0.0;
        for k in 1..n - 1 {
            tau += dts[k - 1];
            let (ox, oy) = o.at(tau);
            let ex = p[k].x - ox;
            let ey = p[k].y - oy;
            let c = (ex * ex + ey * ey + EPS).sqrt();
            let h = hinge(rho - c);
            if h == 0.0 {
                continue;
            }
            obstacle += cfg.w_obstacle * h * h;
            let dc = -cfg.w_obstacle * 2.0 * h;
            gx[k] += dc * ex / c;
            gy[k] += dc * ey / c;
            // τ_k = Σ_{j<k} dt_j moves the obstacle until the horizon
            if tau < o.horizon {
                let dtau = dc * (-(ex * o.vx + ey * o.vy) / c);
                for g in &mut gdt[..k] {
                    *g += dtau;
                }
            }
        }
    }

    let mut gradient = Vec::with_capacity(band.n_free());
    for k in 1..n - 1 {
        gradient.extend_from_slice(&[gx[k], gy[k], gth[k]]);
    }
    gradient.extend_from_slice(&gdt);

    BandCost {
        total: time + obstacle + velocity + acceleration + nonholonomic,
        time,
        obstacle,
        velocity,
        acceleration,
        nonholonomic,
        gradient,
    }
}

/// Descent on the free variables with an Armijo backtracking line search.
/// The search direction is limited-memory BFGS, falling back to the plain
/// negative gradient whenever that fails to make progress. Accepted iterates
/// never increase the cost; the time intervals are projected into
/// `[dt_min, dt_max]`.
pub fn optimize_band(band: &Band, obstacles: &[DynamicObstacle], cfg: &PlannerConfig) -> Result<Band> {
    optimize_band_traced(band, obstacles, cfg).map(|(b, _)| b)
}

const LBFGS_MEMORY: usize = 8;

/// Two-loop recursion: approximates `-H⁻¹ g` from the stored curvature pairs.
fn lbfgs_direction(g: &[f64], pairs: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Like [`optimize_band`] but also returns the cost after every accepted
/// iteration (first entry is the initial cost).
pub fn optimize_band_traced(
    band: &Band,
    obstacles: &[DynamicObstacle],
    cfg: &PlannerConfig,
) -> Result<(Band, Vec<f64>)> {
    let mut current = band.clone();
    let n_pose_vars = 3 * (band.poses.len() - 2);
    let project = |vars: &mut [f64]| {
        for dt in &mut vars[n_pose_vars..] {
            *dt = dt.clamp(cfg.dt_min, cfg.dt_max);
        }
    };

    let mut x = current.free_vars();
    project(&mut x);
    current.set_free_vars(&x);
    let mut eval = band_cost(&current, obstacles, cfg);
    check_finite(&eval, 0)?;
    let mut trace = vec![eval.total];
    let mut pairs: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(LBFGS_MEMORY);
    let mut converged = cfg.max_iterations == 0;
    let mut iterations = 0;

    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        // time intervals pinned at a bound with the gradient pushing outward
        let active: Vec<bool> = (0..x.len())
            .map(|i| {
                i >= n_pose_vars
                    && ((x[i] <= cfg.dt_min && eval.gradient[i] > 0.0)
                        || (x[i] >= cfg.dt_max && eval.gradient[i] < 0.0))
            })
            .collect();
        let masked_grad: Vec<f64> = eval
            .gradient
            .iter()
            .zip(&active)
            .map(|(g, a)| if *a { 0.0 } else { *g })
            .collect();

        let mut accepted = None;
        for use_memory in [true, false] {
            if !use_memory {
                pairs.clear();
            }
            let (mut direction, mut step) = if pairs.is_empty() {
                let gnorm = masked_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                let dir: Vec<f64> = masked_grad.iter().map(|g| -g).collect();
                (dir, (cfg.step_size / gnorm.max(1e-12)).max(cfg.step_size))
            } else {
                (lbfgs_direction(&masked_grad, &pairs), 1.0)
            };
            direction.iter_mut().zip(&active).for_each(|(d, a)| {
                if *a {
                    *d = 0.0;
                }
            });
            let slope: f64 = direction.iter().zip(&masked_grad).map(|(d, g)| d * g).sum();
            if slope >= 0.0 {
                continue;
            }
            for _ in 0..40 {
                let mut trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
                project(&mut trial);
                let predicted: f64 = eval
                    .gradient
                    .iter()
                    .zip(x.iter().zip(&trial))
                    .map(|(g, (a, b))| g * (b - a))
                    .sum();
                let mut candidate = current.clone();
                candidate.set_free_vars(&trial);
                let c = band_cost(&candidate, obstacles, cfg);
                check_finite(&c, it + 1)?;
                if c.total <= eval.total + 1e-4 * predicted.min(0.0) && c.total <= eval.total {
                    accepted = Some((trial, candidate, c));
                    break;
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((trial, candidate, c)) = accepted else {
            converged = true;
            break;
        };
        let improvement = (eval.total - c.total) / eval.total.abs().max(1e-12);
        let s_k: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_k: Vec<f64> = c.gradient.iter().zip(&eval.gradient).map(|(a, b)| a - b).collect();
        let sy: f64 = s_k.iter().zip(&y_k).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            if pairs.len() == LBFGS_MEMORY {
                pairs.remove(0);
            }
            pairs.push((s_k, y_k, 1.0 / sy));
        }
        x = trial;
        current = candidate;
        eval = c;
        trace.push(eval.total);
        if improvement < cfg.tolerance {
            converged = true;
            break;
        }
    }
    current.degraded = !converged;
    current.iterations = iterations;
    Ok((current, trace))
}

fn check_finite(c: &BandCost, iteration: usize) -> Result<()> {
    if c.total.is_finite() && c.gradient.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteCost(format!(
            "iteration {iteration}: total={} time={} obstacle={} velocity={} acceleration={} nonholonomic={}",
            c.total, c.time, c.obstacle, c.velocity, c.acceleration, c.nonholonomic
        )))
    }
}

/// Initial band that sidesteps the person when the straight line runs
/// through them, so the optimiser does not start on a symmetric saddle.
fn initial_band(robot: &Pose, goal: &Pose, obstacle: Option<&DynamicObstacle>, cfg: &PlannerConfig) -> Band {
    let mut band = Band::hermite(robot, goal, cfg);
    let Some(o) = obstacle else { return band };
    let (dx, dy) = (goal.x - robot.x, goal.y - robot.y);
    let len = dx.hypot(dy);
    if len < 1e-6 {
        return band;
    }
    let (nx, ny) = (-dy / len, dx / len);
    let rho = cfg.effective_clearance();
    let times = band.timestamps();
    let n = band.len();
    let inside: Vec<usize> = (1..n - 1)
        .filter(|&k| {
            let (ox, oy) = o.at(times[k]);
            (band.poses[k].x - ox).hypot(band.poses[k].y - oy) < rho
        })
        .collect();
    if inside.is_empty() {
        return band;
    }
    // one side for the whole band, away from where the poses already lean
    let side: f64 = inside
        .iter()
        .map(|&k| {
            let (ox, oy) = o.at(times[k]);
            (band.poses[k].x - ox) * nx + (band.poses[k].y - oy) * ny
        })
        .sum();
    let sign = if side < 0.0 { -1.0 } else { 1.0 };
    for k in inside {
        let (ox, oy) = o.at(times[k]);
        let p = &mut band.poses[k];
        let lateral = (p.x - ox) * nx + (p.y - oy) * ny;
        let push = sign * (rho + 0.05) - lateral;
        p.x += push * nx;
        p.y += push * ny;
    }
    band
}

/// Plans from the robot to `goal`, avoiding the person extrapolated at
/// `person_velocity` (world frame, m/s).
pub fn plan(
    robot: &Pose,
    goal: &Pose,
    person_now: &Pose,
    person_velocity: (f64, f64),
    cfg: &PlannerConfig,
) -> Result<Band> {
    let obstacle = DynamicObstacle::new(
        person_now.x,
        person_now.y,
        person_velocity.0,
        person_velocity.1,
        cfg.prediction_horizon,
    );
    let goal = admissible_goal(goal, robot, &obstacle, cfg);
    let band = initial_band(robot, &goal, Some(&obstacle), cfg);
    optimize_band(&band, &[obstacle], cfg)
}

/// Plans toward `goal`, extracts the command and passes it through
/// [`shield_command`].
pub fn command_toward(
    robot: &Pose,
    goal: &Pose,
    person_now: &Pose,
    person_velocity: (f64, f64),
    cfg: &PlannerConfig,
) -> Result<(Band, MotionCommand)> {
    let band = plan(robot, goal, person_now, person_velocity, cfg)?;
    let obstacle = DynamicObstacle::new(
        person_now.x,
        person_now.y,
        person_velocity.0,
        person_velocity.1,
        cfg.prediction_horizon,
    );
    let cmd = shield_command(extract_command(&band, cfg), robot, &obstacle, cfg);
    Ok((band, cmd))
}

/// Smallest distance to the person while driving `cmd` for `cfg.shield_horizon`.
fn rollout_clearance(cmd: MotionCommand, robot: &Pose, obstacle: &DynamicObstacle, cfg: &PlannerConfig) -> f64 {
    const SUBSTEP: f64 = 0.05;
    let n = (cfg.shield_horizon / SUBSTEP).ceil().max(1.0) as usize;
    let h = cfg.shield_horizon / n as f64;
    let (mut x, mut y, mut th) = (robot.x, robot.y, robot.phi);
    let mut best = f64::INFINITY;
    for k in 1..=n {
        let mid = th + 0.5 * cmd.omega * h;
        x += cmd.v * h * mid.cos();
        y += cmd.v * h * mid.sin();
        th += cmd.omega * h;
        let (ox, oy) = obstacle.at(k as f64 * h);
        best = best.min((x - ox).hypot(y - oy));
    }
    best
}

/// Keeps the executed command clear of the person. A command whose short
/// rollout stays `clearance + shield_buffer` away from the predicted person
/// passes unchanged. Otherwise the nearest safe command in the dynamic
/// window around the robot's current velocity is used, or, when none is
/// safe, the one that keeps the largest distance.
pub fn shield_command(cmd: MotionCommand, robot: &Pose, obstacle: &DynamicObstacle, cfg: &PlannerConfig) -> MotionCommand {
    let safe = cfg.clearance + cfg.shield_buffer;
    if cfg.shield_horizon <= 0.0 || rollout_clearance(cmd, robot, obstacle, cfg) >= safe {
        return cmd;
    }
    const GRID: usize = 11;
    let v_lo = (robot.v - cfg.shield_max_dv).max(-cfg.max_v);
    let v_hi = (robot.v + cfg.shield_max_dv).min(cfg.max_v);
    let w_lo = (robot.omega - cfg.shield_max_domega).max(-cfg.max_omega);
    let w_hi = (robot.omega + cfg.shield_max_domega).min(cfg.max_omega);
    let lerp = |lo: f64, hi: f64, i: usize| if hi > lo { lo + (hi - lo) * i as f64 / (GRID - 1) as f64 } else { lo };
    let mut best_safe: Option<(f64, MotionCommand)> = None;
    let mut best_any = (f64::NEG_INFINITY, cmd);
    for i in 0..GRID {
        for j in 0..GRID {
            let c = MotionCommand::new(lerp(v_lo, v_hi, i), lerp(w_lo, w_hi, j));
            let clearance = rollout_clearance(c, robot, obstacle, cfg);
            if clearance >= safe {
                let dev = ((c.v - cmd.v) / cfg.max_v).powi(2) + ((c.omega - cmd.omega) / cfg.max_omega).powi(2);
                if best_safe.is_none_or(|(d, _)| dev < d) {
                    best_safe = Some((dev, c));
                }
            } else if clearance > best_any.0 {
                best_any = (clearance, c);
            }
        }
    }
    best_safe.map_or(best_any.1, |(_, c)| c)
}

/// Moves a goal that lies inside the padded clearance disc around the
/// person's predicted resting point out to the disc edge. A goal exactly on
/// that point is pushed toward the robot.
pub fn admissible_goal(goal: &Pose, robot: &Pose, obstacle: &DynamicObstacle, cfg: &PlannerConfig) -> Pose {
    let (ox, oy) = obstacle.at(obstacle.horizon);
    let r = cfg.effective_clearance();
    let (mut dx, mut dy) = (goal.x - ox, goal.y - oy);
    let mut d = dx.hypot(dy);
    if d >= r {
        return *goal;
    }
    if d < 1e-9 {
        (dx, dy) = (robot.x - ox, robot.y - oy);
        d = dx.hypot(dy);
        if d < 1e-9 {
            (dx, dy, d) = (1.0, 0.0, 1.0);
        }
    }
    Pose {
        x: ox + dx / d * r,
        y: oy + dy / d * r,
        ..*goal
    }
}

/// Body command that drives along the first band segment.
pub fn extract_command(band: &Band, cfg: &PlannerConfig) -> MotionCommand {
    let p0 = band.poses[0];
    let dt0 = band.dts[0];
    if dt0 >= cfg.control_period || band.poses.len() == 2 {
        return segment_command(&p0, &band.poses[1], dt0, cfg);
    }
    // walk along the band until the control period has elapsed
    let mut t = 0.0;
    let mut target = *band.poses.last().unwrap();
    for (k, dt) in band.dts.iter().enumerate() {
        if t + dt >= cfg.control_period {
            let s = if *dt > 0.0 { (cfg.control_period - t) / dt } else { 1.0 };
            let (a, b) = (band.poses[k], band.poses[k + 1]);
            target = BandPose {
                x: a.x + s * (b.x - a.x),
                y: a.y + s * (b.y - a.y),
                theta: a.theta + s * wrap_angle(b.theta - a.theta),
            };
            t = cfg.control_period;
            break;
        }
        t += dt;
    }
    if t <= 0.0 {
        return MotionCommand::STOP;
    }
    let dx = target.x - p0.x;
    let dy = target.y - p0.y;
    let chord = dx.hypot(dy);
    if chord < 1e-6 {
        let omega = wrap_angle(target.theta - p0.theta) / t;
        return MotionCommand::new(0.0, omega.clamp(-cfg.max_omega, cfg.max_omega));
    }
    // circular arc leaving p0 along its heading (or against it) through the target
    let mut beta = wrap_angle(dy.atan2(dx) - p0.theta);
    let mut sign = 1.0;
    if beta.abs() > std::f64::consts::FRAC_PI_2 {
        beta = wrap_angle(beta - std::f64::consts::PI);
        sign = -1.0;
    }
    let arc = if beta.abs() < 1e-6 { chord } else { chord * beta / beta.sin() };
    MotionCommand::new(
        (sign * arc / t).clamp(-cfg.max_v, cfg.max_v),
        (2.0 * beta / t).clamp(-cfg.max_omega, cfg.max_omega),
    )
}

fn segment_command(p0: &BandPose, p1: &BandPose, dt: f64, cfg: &PlannerConfig) -> MotionCommand {
    let dx = p1.x - p0.x;
    let dy = p1.y - p0.y;
    let chord = dx.hypot(dy);
    let dtheta = wrap_angle(p1.theta - p0.theta);
    if (chord < 1e-6 && dtheta.abs() < 1e-6) || dt <= 0.0 {
        return MotionCommand::STOP;
    }
    // arc length of the circular segment through both poses
    let half = 0.5 * dtheta;
    let arc = if half.abs() < 1e-6 { chord } else { chord * half / half.sin() };
    let forward = dx * p0.theta.cos() + dy * p0.theta.sin();
    let v = if forward < 0.0 { -arc / dt } else { arc / dt };
    MotionCommand::new(
        v.clamp(-cfg.max_v, cfg.max_v),
        (dtheta / dt).clamp(-cfg.max_omega, cfg.max_omega),
    )
}
