//! Planar poses and the human-centred coordinate frame.
//!
//! Every learned and hand-crafted component reasons about the robot in the
//! walking person's body frame: +x along the person's heading, +y to their
//! left. A robot directly ahead of the person therefore sits at `(d, 0)` with
//! a person-robot angle of zero.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid maps -π to π already; this catches rounding right at the edge.
    if r <= -PI {
        r += TAU;
    }
    r
}

/// Global pose of an agent together with its current body velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    /// meters
    pub x: f64,
    /// meters
    pub y: f64,
    /// heading, radians in (-π, π]
    pub phi: f64,
    /// linear velocity, m/s
    pub v: f64,
    /// angular velocity, rad/s
    pub omega: f64,
}

impl Pose {
    /// Pose at rest. The heading is wrapped.
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
            v: 0.0,
            omega: 0.0,
        }
    }

    pub fn with_velocity(mut self, v: f64, omega: f64) -> Self {
        self.v = v;
        self.omega = omega;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.phi.is_finite()
            && self.v.is_finite()
            && self.omega.is_finite()
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Velocity vector in the world frame.
    pub fn world_velocity(&self) -> (f64, f64) {
        (self.v * self.phi.cos(), self.v * self.phi.sin())
    }
}

/// A pose expressed in the current frame of the person.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

impl RelativeState {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        Self {
            x,
            y,
            phi: wrap_angle(phi),
        }
    }

    /// Relative placement from a distance and a person-robot angle.
    pub fn from_polar(distance: f64, alpha: f64, phi: f64) -> Self {
        Self::new(distance * alpha.cos(), distance * alpha.sin(), phi)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Expresses `subject` in the frame of `reference_human`.
///
/// The position difference is rotated by `-Φ_h`, so a subject straight ahead
/// of the person lands on the positive x axis.
pub fn world_to_relative(subject: &Pose, reference_human: &Pose) -> RelativeState {
    let dx = subject.x - reference_human.x;
    let dy = subject.y - reference_human.y;
    let (s, c) = reference_human.phi.sin_cos();
    RelativeState {
        x: c * dx + s * dy,
        y: -s * dx + c * dy,
        phi: wrap_angle(subject.phi - reference_human.phi),
    }
}

/// Inverse of [`world_to_relative`]. The returned pose carries zero velocity.
pub fn relative_to_world(rel: &RelativeState, reference_human: &Pose) -> Pose {
    let (s, c) = reference_human.phi.sin_cos();
    Pose {
        x: reference_human.x + c * rel.x - s * rel.y,
        y: reference_human.y + s * rel.x + c * rel.y,
        phi: wrap_angle(rel.phi + reference_human.phi),
        v: 0.0,
        omega: 0.0,
    }
}

/// Person-robot angle `atan2(y, x)` of a relative state, in `(-π, π]`.
pub fn person_robot_angle(rel: &RelativeState) -> Result<f64> {
    if rel.x == 0.0 && rel.y == 0.0 {
        return Err(Error::DegenerateGeometry(
            "person-robot angle is undefined when robot and person coincide",
        ));
    }
    Ok(wrap_angle(rel.y.atan2(rel.x)))
}

pub fn person_robot_distance(robot: &Pose, human: &Pose) -> f64 {
    robot.distance_to(human)
}
