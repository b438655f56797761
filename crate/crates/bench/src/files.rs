//! On-disk document formats used by the command line.

use serde::{Deserialize, Serialize};

use railsched_core::error::{Error, Result};
use railsched_core::model::{HorizonVector, Solution, SystemState};
use railsched_core::network::{Network, TrainSpec};

use crate::suite::NamedStrategy;
use crate::traingraph::TrainPlot;

/// Self-contained schedule document: enough to replot or inspect without
/// the originating network file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub t: f64,
    pub objective: f64,
    pub trains: Vec<SolutionTrain>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionTrain {
    pub id: String,
    /// Nodes covered by the schedule, first entry being the position the
    /// schedule was built from.
    pub nodes: Vec<String>,
    pub departures: Vec<f64>,
    pub travel_min: Vec<f64>,
}

impl SolutionFile {
    pub fn build(
        network: &Network,
        trains: &[TrainSpec],
        state: &SystemState,
        horizons: &HorizonVector,
        solution: &Solution,
        t: f64,
        objective: f64,
    ) -> SolutionFile {
        let plots = crate::traingraph::plots_from_solution(network, trains, state, horizons, solution);
        SolutionFile {
            t,
            objective,
            trains: plots
                .into_iter()
                .map(|p| SolutionTrain {
                    id: p.id,
                    nodes: p.nodes,
                    departures: p.departures,
                    travel_min: p.travel,
                })
                .collect(),
        }
    }

    pub fn plots(&self) -> Vec<TrainPlot> {
        self.trains
            .iter()
            .map(|t| TrainPlot {
                id: t.id.clone(),
                nodes: t.nodes.clone(),
                departures: t.departures.clone(),
                travel: t.travel_min.clone(),
            })
            .collect()
    }
}

/// Closed-loop simulation setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfigFile {
    pub network: String,
    /// Optional state snapshot; trains start at their path origins otherwise.
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default = "default_delta_t")]
    pub delta_t: f64,
    #[serde(default = "default_max_sim")]
    pub max_sim_time: f64,
    pub strategy: NamedStrategy,
    #[serde(default = "default_time_limit")]
    pub time_limit: f64,
    #[serde(default = "default_gap")]
    pub gap_target: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Benchmark suite setup.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfigFile {
    /// `synthetic-27`, `synthetic-69`, or a path to a network document.
    pub network: String,
    pub traffic_levels: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub n_seeds: u64,
    /// Strategy labels from the default set, or explicit strategy objects.
    #[serde(default)]
    pub strategies: Vec<NamedStrategy>,
    #[serde(default = "default_bench_time_limit")]
    pub time_limit: f64,
    #[serde(default = "default_gap")]
    pub gap_target: f64,
}

fn default_delta_t() -> f64 {
    15.0
}
fn default_max_sim() -> f64 {
    24.0 * 60.0
}
fn default_time_limit() -> f64 {
    120.0
}
fn default_bench_time_limit() -> f64 {
    30.0
}
fn default_gap() -> f64 {
    0.001
}
fn default_seeds() -> u64 {
    50
}

pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
}
