//! Experience-based biased sampling for sampling-based manipulator planning.

pub mod bench;
pub mod db;
pub mod error;
pub mod flame;
pub mod geometry;
pub mod pipeline;
pub mod planner;
pub mod robot;
pub mod sampling;
pub mod scenes;
pub mod spark;

pub use error::{Error, Result};
