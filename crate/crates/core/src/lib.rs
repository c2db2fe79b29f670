//! Line-of-sight navigation for a small mobile robot: planar geometry, a
//! world model with simulated sensors, camera-zone perception, a reactive
//! controller, a UDP message protocol and a deterministic simulator.

pub mod cli;
pub mod controller;
pub mod geometry;
pub mod perception;
pub mod protocol;
pub mod sim;
pub mod world;
