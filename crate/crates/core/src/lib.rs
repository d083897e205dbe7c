//! Approximate minimum-weight constrained triangulations of 2D segment scenes,
//! and operation-counting ray traversal through triangulations, BVHs and
//! roped kd-trees.

pub mod accel;
pub mod anneal;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod objective;
pub mod scene;
pub mod trimesh;

pub use error::{Error, Result};
pub use scene::Scene;
