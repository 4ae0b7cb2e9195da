//! Following a walking person from the front.
//!
//! A learned policy proposes short-term goals in the person's frame and a
//! timed-elastic-band planner drives the robot there. The crate also carries
//! the simulated world, the person-motion curriculum, a Kalman-filter
//! baseline, an end-to-end baseline and the evaluation harness.

pub mod baseline_hc;
pub mod config;
pub mod bridge;
pub mod controller;
pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod human_motion;
pub mod reward;
pub mod rl;
pub mod planner;
pub mod sim;

pub use error::{Error, Result};
