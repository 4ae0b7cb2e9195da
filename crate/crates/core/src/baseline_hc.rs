//! Hand-crafted follow-ahead baseline.
//!
//! An extended Kalman filter tracks the person with a constant-(v, ω)
//! unicycle model; the robot is sent to a point a fixed distance ahead of
//! where the filter predicts the person will be, and the planner drives it
//! there.

use nalgebra::{Matrix3, Matrix3x5, Matrix5, Matrix5x3, Vector3, Vector5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose};
use crate::human_motion::MotionCommand;
use crate::planner::{self, PlannerConfig};
use crate::sim::step_unicycle;

/// Filter state over `(X, Y, Φ, v, ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub mean: Vector5<f64>,
    pub covariance: Matrix5<f64>,
}

impl EkfState {
    /// Starts from a pose measurement with unknown velocities.
    pub fn from_measurement(z: &Pose, r: &Matrix3<f64>, velocity_var: f64) -> Self {
        let mut covariance = Matrix5::zeros();
        covariance.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        covariance[(3, 3)] = velocity_var;
        covariance[(4, 4)] = velocity_var;
        Self {
            mean: Vector5::new(z.x, z.y, z.phi, 0.0, 0.0),
            covariance,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.mean[0], self.mean[1], self.mean[2]).with_velocity(self.mean[3], self.mean[4])
    }

    /// Symmetric within 1e-9 and no eigenvalue below -1e-9.
    pub fn covariance_is_psd(&self) -> bool {
        let p = &self.covariance;
        if (p - p.transpose()).abs().max() > 1e-9 {
            return false;
        }
        p.symmetric_eigenvalues().iter().all(|&e| e >= -1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    /// Process noise spectral densities for (X, Y, Φ, v, ω); Q = diag(q)·dt.
    pub process_noise: [f64; 5],
    pub measurement_pos_std: f64,
    pub measurement_ang_std: f64,
    /// Initial variance of the velocity states.
    pub initial_velocity_var: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            process_noise: [1e-4, 1e-4, 1e-4, 1e-2, 1e-2],
            measurement_pos_std: 0.05,
            measurement_ang_std: 0.02,
            initial_velocity_var: 1.0,
        }
    }
}

impl EkfConfig {
    pub fn process_cov(&self, dt: f64) -> Matrix5<f64> {
        Matrix5::from_diagonal(&Vector5::from(self.process_noise)) * dt
    }

    pub fn measurement_cov(&self) -> Matrix3<f64> {
        let p = self.measurement_pos_std.powi(2);
        let a = self.measurement_ang_std.powi(2);
        Matrix3::from_diagonal(&Vector3::new(p, p, a))
    }
}

/// Mean propagation and its Jacobian for the exact-arc unicycle model.
fn motion_model(x: &Vector5<f64>, dt: f64) -> (Vector5<f64>, Matrix5<f64>) {
    let (px, py, phi, v, w) = (x[0], x[1], x[2], x[3], x[4]);
    let next = step_unicycle(&Pose { x: px, y: py, phi, v, omega: w }, MotionCommand::new(v, w), dt);
    let mut f = Matrix5::identity();
    let (s0, c0) = phi.sin_cos();
    if w.abs() < 1e-4 {
        f[(0, 2)] = -v * dt * s0;
        f[(0, 3)] = dt * c0;
        f[(0, 4)] = -0.5 * v * dt * dt * s0;
        f[(1, 2)] = v * dt * c0;
        f[(1, 3)] = dt * s0;
        f[(1, 4)] = 0.5 * v * dt * dt * c0;
    } else {
        let (s1, c1) = (phi + w * dt).sin_cos();
        f[(0, 2)] = v / w * (c1 - c0);
        f[(0, 3)] = (s1 - s0) / w;
        f[(0, 4)] = -v / (w * w) * (s1 - s0) + v / w * dt * c1;
        f[(1, 2)] = v / w * (s1 - s0);
        f[(1, 3)] = -(c1 - c0) / w;
        f[(1, 4)] = v / (w * w) * (c1 - c0) + v / w * dt * s1;
    }
    f[(2, 4)] = dt;
    (Vector5::new(next.x, next.y, next.phi, v, w), f)
}

pub fn ekf_predict(s: &EkfState, dt: f64, cfg: &EkfConfig) -> EkfState {
    let (mean, f) = motion_model(&s.mean, dt);
    let p = f * s.covariance * f.transpose() + cfg.process_cov(dt);
    EkfState {
        mean,
        covariance: 0.5 * (p + p.transpose()),
    }
}

/// Correction with a pose measurement. The heading innovation is wrapped and
/// the covariance uses the Joseph form.
pub fn ekf_update(s: &EkfState, z: &Pose, r: &Matrix3<f64>) -> Result<EkfState> {
    let h = Matrix3x5::new(
        1.0, 0.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0, 0.0,
    );
    let innovation = Vector3::new(
        z.x - s.mean[0],
        z.y - s.mean[1],
        wrap_angle(z.phi - s.mean[2]),
    );
    let p = &s.covariance;
    let innovation_cov = h * p * h.transpose() + r;
    let inv = innovation_cov.try_inverse().ok_or(Error::SingularInnovation)?;
    let gain: Matrix5x3<f64> = p * h.transpose() * inv;
    let mut mean = s.mean + gain * innovation;
    mean[2] = wrap_angle(mean[2]);
    let i_kh = Matrix5::identity() - gain * h;
    let p = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();
    Ok(EkfState {
        mean,
        covariance: 0.5 * (p + p.transpose()),
    })
}

/// Goal a fixed distance ahead of the person's predicted pose.
pub fn ahead_goal(s: &EkfState, desired_distance: f64, horizon: f64) -> Pose {
    let (pred, _) = motion_model(&s.mean, horizon);
    let heading = pred[2];
    Pose::new(
        pred[0] + desired_distance * heading.cos(),
        pred[1] + desired_distance * heading.sin(),
        heading,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HcConfig {
    pub ekf: EkfConfig,
    pub desired_distance: f64,
    /// Look-ahead of the person prediction, seconds.
    pub horizon: f64,
}

impl Default for HcConfig {
    fn default() -> Self {
        Self {
            ekf: EkfConfig::default(),
            desired_distance: 1.5,
            horizon: 1.5,
        }
    }
}

/// What the baseline decided on one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcDecision {
    pub command: MotionCommand,
    pub goal: Pose,
    /// The planner hit its iteration cap.
    pub degraded: bool,
}

#[derive(Debug, Clone)]
pub struct HcController {
    pub cfg: HcConfig,
    pub planner: PlannerConfig,
    pub dt: f64,
    filter: Option<EkfState>,
}

impl HcController {
    pub fn new(cfg: HcConfig, planner: PlannerConfig, dt: f64) -> Self {
        Self { cfg, planner, dt, filter: None }
    }

    pub fn reset(&mut self) {
        self.filter = None;
    }

    pub fn filter(&self) -> Option<&EkfState> {
        self.filter.as_ref()
    }

    /// Consumes the newest person measurement and returns the robot command.
    pub fn step(&mut self, measurement: &Pose, robot: &Pose) -> Result<HcDecision> {
        let r = self.cfg.ekf.measurement_cov();
        let state = match &self.filter {
            None => EkfState::from_measurement(measurement, &r, self.cfg.ekf.initial_velocity_var),
            Some(s) => ekf_update(&ekf_predict(s, self.dt, &self.cfg.ekf), measurement, &r)?,
        };
        self.filter = Some(state);
        let goal = ahead_goal(&state, self.cfg.desired_distance, self.cfg.horizon);
        let person = state.pose();
        let (band, command) = planner::command_toward(robot, &goal, &person, person.world_velocity(), &self.planner)?;
        Ok(HcDecision {
            command,
            goal,
            degraded: band.degraded,
        })
    }
}
