//! Closed-loop driving reinforcement learning with soft entropy-KL control
//! toward a behavioral-cloning teacher.

pub mod agents;
pub mod error;
pub mod evalkit;
pub mod experiment;
pub mod geometry;
pub mod kinematics;
pub mod neuralnet;
pub mod oracle;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
