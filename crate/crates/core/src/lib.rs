//! Joint LiDAR perception and local motion planning in a deterministic
//! closed-loop simulator.

pub mod geometry;
pub mod harness;
pub mod lidar;
pub mod perception;
pub mod planner;
pub mod tracking;
pub mod world;
