//! Railway traffic scheduling over a node/edge graph with slot-capacitated
//! nodes: finite-horizon disjunctive scheduling problems, an exact
//! branch-and-bound solver, safe-horizon computation that guarantees
//! deadlock-free closed-loop operation, and the receding-horizon controller
//! with time-wise and train-wise decompositions.

pub mod control;
pub mod error;
pub mod fixtures;
pub mod model;
pub mod network;
pub mod safety;
pub mod solver;

pub use error::{Error, Result};

/// Feasibility tolerance for schedule times, in minutes.
pub const TIME_TOL: f64 = 1e-6;
