//! Benchmark harness for the scheduling engine: bundled networks, random
//! instance generation, the experiment suite, and train-graph rendering.

pub mod files;
pub mod instance;
pub mod nets;
pub mod suite;
pub mod traingraph;

pub use instance::{generate_instance, Instance};
pub use nets::{synthetic_network_27, synthetic_network_69};
