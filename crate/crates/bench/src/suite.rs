//! Experiment orchestration: solve the time-zero problem of many random
//! instances under several strategies and tabulate times and gaps.

use serde::{Deserialize, Serialize};

use railsched_core::control::{solve_timewise, solve_trainwise, Strategy};
use railsched_core::error::{Error, Result};
use railsched_core::model::{build_problem, remaining_stages, validate_solution, HorizonVector};
use railsched_core::network::Network;
use railsched_core::safety::compute_safe_horizon;
use railsched_core::solver::{solve, SolveStatus, SolverConfig};

use crate::instance::generate_instance;

/// Wall times are floored here to keep log-scale plots finite.
pub const TIME_FLOOR_S: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub instance: String,
    pub seed: u64,
    pub strategy: String,
    pub trains: usize,
    pub status: String,
    pub time_s: f64,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
}

/// Strategy under a short label for tables and CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedStrategy {
    pub name: String,
    pub strategy: Strategy,
}

/// The strategy set used throughout the experiments.
pub fn default_strategies() -> Vec<NamedStrategy> {
    vec![
        NamedStrategy { name: "mono".into(), strategy: Strategy::Monolithic },
        NamedStrategy {
            name: "timewise-30".into(),
            strategy: Strategy::TimeWise {
                window_min: 30.0,
                relax_tail_min: 15.0,
                use_relaxation: false,
            },
        },
        NamedStrategy {
            name: "timewise-30-relax".into(),
            strategy: Strategy::TimeWise {
                window_min: 30.0,
                relax_tail_min: 15.0,
                use_relaxation: true,
            },
        },
        NamedStrategy {
            name: "timewise-60".into(),
            strategy: Strategy::TimeWise {
                window_min: 60.0,
                relax_tail_min: 15.0,
                use_relaxation: false,
            },
        },
        NamedStrategy {
            name: "timewise-60-relax".into(),
            strategy: Strategy::TimeWise {
                window_min: 60.0,
                relax_tail_min: 15.0,
                use_relaxation: true,
            },
        },
        NamedStrategy {
            name: "trainwise-inc-1".into(),
            strategy: Strategy::TrainWiseIncremental { subset_size: 1 },
        },
        NamedStrategy {
            name: "trainwise-inc-5".into(),
            strategy: Strategy::TrainWiseIncremental { subset_size: 5 },
        },
        NamedStrategy {
            name: "trainwise-part-1".into(),
            strategy: Strategy::TrainWisePartition { subset_size: 1 },
        },
        NamedStrategy {
            name: "trainwise-part-5".into(),
            strategy: Strategy::TrainWisePartition { subset_size: 5 },
        },
    ]
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::FeasibleTimeout => "feasible-timeout",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::NoIncumbentTimeout => "no-incumbent",
    }
}

/// Solve the time-zero problem of each random instance under every
/// strategy. Gaps are measured against the best lower bound known for the
/// instance (the monolithic bound when available, zero otherwise).
pub fn run_suite(
    network: &Network,
    traffic_levels: &[usize],
    n_seeds: u64,
    strategies: &[NamedStrategy],
    solver: &SolverConfig,
) -> Result<Vec<ResultRecord>> {
    let mut records = Vec::new();
    for &level in traffic_levels {
        for seed in 0..n_seeds {
            let inst = generate_instance(network, level, seed)?;
            let horizons: HorizonVector = inst
                .trains
                .iter()
                .zip(&inst.state.positions)
                .map(|(t, p)| remaining_stages(t, p))
                .collect();
            let base = compute_safe_horizon(
                0.0,
                network,
                &inst.trains,
                &inst.state,
                solver,
                Some(horizons.clone()),
            )?;
            let target = base.horizons;
            let problem = build_problem(0.0, network, &inst.trains, &inst.state, &target)?;

            let mut per_instance: Vec<ResultRecord> = Vec::new();
            let mut best_bound = 0.0f64;
            for ns in strategies {
                let (status, time_s, objective, valid) = match &ns.strategy {
                    Strategy::Monolithic => {
                        let r = solve(&problem, solver, None, None)?;
                        best_bound = best_bound
                            .max(r.lower_bound.min(r.objective.unwrap_or(f64::INFINITY)));
                        let ok = r
                            .incumbent
                            .as_ref()
                            .map(|s| {
                                validate_solution(&problem, s).map(|v| v.is_empty()).unwrap_or(false)
                            })
                            .unwrap_or(false);
                        (status_name(r.status).to_string(), r.stats.wall_time_s, r.objective, ok)
                    }
                    Strategy::TimeWise { window_min, relax_tail_min, use_relaxation } => {
                        match solve_timewise(
                            0.0,
                            network,
                            &inst.trains,
                            &inst.state,
                            &target,
                            *window_min,
                            *relax_tail_min,
                            *use_relaxation,
                            solver,
                        ) {
                            Ok(run) => {
                                let ok = validate_solution(&problem, &run.solution)
                                    .map(|v| v.is_empty())
                                    .unwrap_or(false);
                                let obj = problem.objective_value(&run.solution);
                                ("feasible".to_string(), run.stats.wall_time_s, Some(obj), ok)
                            }
                            Err(e) => (format!("error:{e}"), 0.0, None, true),
                        }
                    }
                    Strategy::TrainWiseIncremental { subset_size }
                    | Strategy::TrainWisePartition { subset_size } => {
                        let incremental =
                            matches!(ns.strategy, Strategy::TrainWiseIncremental { .. });
                        match solve_trainwise(
                            0.0,
                            network,
                            &inst.trains,
                            &inst.state,
                            &target,
                            incremental,
                            *subset_size,
                            solver,
                            seed,
                        ) {
                            Ok(run) => {
                                let ok = validate_solution(&problem, &run.solution)
                                    .map(|v| v.is_empty())
                                    .unwrap_or(false);
                                let obj = problem.objective_value(&run.solution);
                                ("feasible".to_string(), run.stats.wall_time_s, Some(obj), ok)
                            }
                            Err(e) => (format!("error:{e}"), 0.0, None, true),
                        }
                    }
                };
                per_instance.push(ResultRecord {
                    instance: inst.id.clone(),
                    seed,
                    strategy: ns.name.clone(),
                    trains: level,
                    status: if valid { status } else { "invalid".to_string() },
                    time_s: time_s.max(TIME_FLOOR_S),
                    objective,
                    gap: None,
                });
            }
            for rec in &mut per_instance {
                rec.gap = rec.objective.map(|obj| ((obj - best_bound) / obj.max(1.0)).max(0.0));
            }
            records.extend(per_instance);
        }
    }
    Ok(records)
}

// --- CSV ------------------------------------------------------------------------

pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from("instance,seed,strategy,trains,status,time_s,objective,gap\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{:.4},{},{}\n",
            r.instance,
            r.seed,
            r.strategy,
            r.trains,
            r.status,
            r.time_s,
            r.objective.map(|v| format!("{v:.6}")).unwrap_or_default(),
            r.gap.map(|v| format!("{v:.6}")).unwrap_or_default(),
        ));
    }
    out
}

pub fn from_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Schema(format!("csv line {} malformed", ln + 1)));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>().map(Some).map_err(|e| Error::Schema(e.to_string()))
            }
        };
        out.push(ResultRecord {
            instance: parts[0].to_string(),
            seed: parts[1].parse().map_err(|_| Error::Schema("seed".into()))?,
            strategy: parts[2].to_string(),
            trains: parts[3].parse().map_err(|_| Error::Schema("trains".into()))?,
            status: parts[4].to_string(),
            time_s: parts[5].parse().map_err(|_| Error::Schema("time".into()))?,
            objective: parse_opt(parts[6])?,
            gap: parse_opt(parts[7])?,
        });
    }
    Ok(out)
}

// --- Aggregation -----------------------------------------------------------------

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

/// Median wall time of one strategy at one traffic level.
pub fn median_time(records: &[ResultRecord], strategy: &str, trains: usize) -> Option<f64> {
    let mut times: Vec<f64> = records
        .iter()
        .filter(|r| r.strategy == strategy && r.trains == trains)
        .map(|r| r.time_s)
        .collect();
    if times.is_empty() {
        return None;
    }
    times.sort_by(|a, b| a.total_cmp(b));
    Some(quantile(&times, 0.5))
}

/// Fixed-width summary table: per strategy and traffic level, median wall
/// time and the quartiles of the optimality gap.
pub fn summarize(records: &[ResultRecord]) -> String {
    let mut strategies: Vec<String> = records.iter().map(|r| r.strategy.clone()).collect();
    strategies.sort();
    strategies.dedup();
    let mut levels: Vec<usize> = records.iter().map(|r| r.trains).collect();
    levels.sort_unstable();
    levels.dedup();
    let mut out = format!(
        "{:<20} {:>7} {:>6} {:>10} {:>9} {:>9} {:>9}\n",
        "strategy", "trains", "n", "med_time_s", "gap_q25", "gap_q50", "gap_q75"
    );
    for s in &strategies {
        for &lvl in &levels {
            let subset: Vec<&ResultRecord> =
                records.iter().filter(|r| &r.strategy == s && r.trains == lvl).collect();
            if subset.is_empty() {
                continue;
            }
            let mut times: Vec<f64> = subset.iter().map(|r| r.time_s).collect();
            times.sort_by(|a, b| a.total_cmp(b));
            let mut gaps: Vec<f64> = subset.iter().filter_map(|r| r.gap).collect();
            gaps.sort_by(|a, b| a.total_cmp(b));
            out.push_str(&format!(
                "{:<20} {:>7} {:>6} {:>10.3} {:>9.4} {:>9.4} {:>9.4}\n",
                s,
                lvl,
                subset.len(),
                quantile(&times, 0.5),
                quantile(&gaps, 0.25),
                quantile(&gaps, 0.5),
                quantile(&gaps, 0.75),
            ));
        }
    }
    out
}
