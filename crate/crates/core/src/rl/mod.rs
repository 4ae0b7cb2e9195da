//! Distributional deterministic actor-critic training.

pub mod adam;
pub mod distribution;
pub mod mlp;
pub mod agent;
pub mod replay;
pub mod trainer;
pub mod checkpoint;
