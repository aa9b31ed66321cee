//! Batched 6-DOF underwater-vehicle simulation with domain randomization,
//! benchmark tasks and a small evolutionary baseline.

pub mod actuation;
pub mod bench;
pub mod cem;
pub mod dr;
pub mod engine;
pub mod error;
pub mod eval;
pub mod hydrodynamics;
pub mod kinematics;
pub mod records;
mod serde_util;
pub mod task;
pub mod vehicle;

pub use error::{Error, Result};
