//! Kinematics for cable-driven parallel robots: exact inverse kinematics, a
//! bounded least-squares forward solver, and a graph neural network that
//! learns forward kinematics from IK-labelled trajectories.

pub mod cli;
pub mod data;
pub mod experiments;
pub mod fk_opt;
pub mod geometry;
pub mod graph;
pub mod nn;
