//! Step reward and episode termination.
//!
//! The person-robot angle enters in degrees here (the thresholds 25 and 180
//! are degree constants); everything outside this module uses radians.

use serde::{Deserialize, Serialize};

pub const DESIRED_DISTANCE: f64 = 1.5;
pub const TOO_CLOSE: f64 = 0.5;
pub const TOO_FAR: f64 = 5.0;

/// Distance term. Each boundary point {0.5, 1, 2, 5} belongs to the case on
/// its right.
pub fn distance_reward(d: f64) -> f64 {
    if d < 0.5 || d > 5.0 {
        -1.0
    } else if d < 1.0 {
        -(1.0 - d)
    } else if d < 2.0 {
        0.5 * (0.5 - (d - 1.5).abs())
    } else {
        // 2 <= d <= 5
        -0.25 * (d - 1.0)
    }
}

pub fn orientation_reward(alpha_deg: f64) -> f64 {
    let a = alpha_deg.abs();
    if a < 25.0 {
        0.5 * (25.0 - a) / 25.0
    } else {
        -0.25 * a / 180.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub distance: f64,
    pub alpha_deg: f64,
    pub r_distance: f64,
    pub r_orientation: f64,
    /// `clamp(r_distance + r_orientation, -1, 1)`
    pub total: f64,
}

pub fn step_reward(d: f64, alpha_deg: f64) -> RewardTerms {
    let r_distance = distance_reward(d);
    let r_orientation = orientation_reward(alpha_deg);
    RewardTerms {
        distance: d,
        alpha_deg,
        r_distance,
        r_orientation,
        total: (r_distance + r_orientation).clamp(-1.0, 1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Termination {
    Continue,
    TooClose,
    TooFar,
}

pub fn is_terminal(d: f64) -> Termination {
    if d < TOO_CLOSE {
        Termination::TooClose
    } else if d > TOO_FAR {
        Termination::TooFar
    } else {
        Termination::Continue
    }
}
