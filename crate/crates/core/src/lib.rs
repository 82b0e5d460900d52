//! Goal-aware adversarial imitation learning on desk-scale benchmarks.
//!
//! The generator is an entropy-regularized preference network trained with
//! soft value-iteration targets; the reward comes from two discriminators,
//! one separating demonstration states from generated ones and one
//! separating labeled goal states from generated ones.

pub mod adversarial;
pub mod config;
pub mod demos;
pub mod envs;
pub mod error;
pub mod generator;
pub mod mdp;
pub mod nn;
pub mod rng;
pub mod soft;
pub mod trainer;

pub use error::{Error, Result};
