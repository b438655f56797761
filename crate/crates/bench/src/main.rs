//! Command line for the scheduling engine.
//!
//! Exit codes: 0 success, 2 the state is deadlocked, 3 a forced assignment
//! is infeasible, 4 the solver hit its time limit without an incumbent.

use std::fs;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use railsched_bench::files::{parse_json, SimConfigFile, SolutionFile, SuiteConfigFile};
use railsched_bench::nets;
use railsched_bench::suite::{self, NamedStrategy};
use railsched_bench::traingraph::render_train_graph;
use railsched_core::control::{
    run_closed_loop, solve_timewise, solve_trainwise, ClosedLoopConfig, Strategy, StrategyRun,
};
use railsched_core::error::Error;
use railsched_core::model::{
    build_problem, remaining_stages, state_from_json, SystemState, TrainPos,
};
use railsched_core::network::{load_network, Network, TrainSpec};
use railsched_core::safety::compute_safe_horizon;
use railsched_core::solver::{solve, SolveStatus, SolverConfig};

#[derive(Parser)]
#[command(name = "railsched", about = "Railway traffic scheduling with safe horizons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the scheduling problem for a measured state under safe horizons.
    Solve {
        #[arg(long)]
        network: String,
        #[arg(long)]
        state: Option<String>,
        #[arg(long, default_value = "mono")]
        strategy: String,
        /// Growth per step of the time-wise decomposition, minutes.
        #[arg(long, default_value_t = 30.0)]
        window: f64,
        /// Tail of the previous step left unforced, minutes.
        #[arg(long, default_value_t = 15.0)]
        relax_tail: f64,
        /// Trains added per train-wise step.
        #[arg(long, default_value_t = 5)]
        subset: usize,
        /// Solver wall-clock cap, seconds.
        #[arg(long, default_value_t = 120.0)]
        time_limit: f64,
        /// Relative optimality gap to stop at.
        #[arg(long, default_value_t = 0.001)]
        gap: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the schedule document here instead of stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Run the closed loop described by a config document.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
    },
    /// Report whether a state admits any schedule bringing all trains home.
    DetectDeadlock {
        #[arg(long)]
        network: String,
        #[arg(long)]
        state: String,
    },
    /// Run the benchmark suite and write a CSV of results.
    Bench {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        out: String,
    },
    /// Render a schedule document as a time-distance SVG diagram.
    Plot {
        #[arg(long)]
        solution: String,
        /// Comma-separated node ids defining the distance axis.
        #[arg(long)]
        corridor: String,
        #[arg(long)]
        out: String,
    },
}

fn load_net(path: &str) -> Result<(Network, Vec<TrainSpec>), Error> {
    if let Some(net) = nets::bundled(path) {
        return Ok((net, Vec::new()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Schema(format!("{path}: {e}")))?;
    load_network(&text)
}

fn origins(trains: &[TrainSpec]) -> SystemState {
    SystemState {
        positions: trains
            .iter()
            .map(|_| TrainPos { progress: 0, edge_fraction: 0.0, slot: Some(0), arrived: false })
            .collect(),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Deadlocked => ExitCode::from(2),
        Error::ForcedInfeasible => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_solve(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    t: f64,
    strategy: &Strategy,
    config: &SolverConfig,
    seed: u64,
) -> Result<(StrategyRun, Vec<usize>), Error> {
    let full: Vec<usize> = trains
        .iter()
        .zip(&state.positions)
        .map(|(tr, p)| if p.arrived { 0 } else { remaining_stages(tr, p) })
        .collect();
    let base = compute_safe_horizon(t, network, trains, state, config, Some(full))?;
    let horizons = base.horizons;
    let run = match strategy {
        Strategy::Monolithic => {
            let problem = build_problem(t, network, trains, state, &horizons)?;
            let result = solve(&problem, config, None, None)?;
            match result.incumbent {
                Some(solution) => StrategyRun { solution, stats: result.stats },
                None => {
                    return Err(match result.status {
                        SolveStatus::NoIncumbentTimeout => {
                            Error::Schema("solver timed out without an incumbent".into())
                        }
                        _ => Error::Deadlocked,
                    })
                }
            }
        }
        Strategy::TimeWise { window_min, relax_tail_min, use_relaxation } => solve_timewise(
            t,
            network,
            trains,
            state,
            &horizons,
            *window_min,
            *relax_tail_min,
            *use_relaxation,
            config,
        )?,
        Strategy::TrainWiseIncremental { subset_size } => {
            solve_trainwise(t, network, trains, state, &horizons, true, *subset_size, config, seed)?
        }
        Strategy::TrainWisePartition { subset_size } => solve_trainwise(
            t,
            network,
            trains,
            state,
            &horizons,
            false,
            *subset_size,
            config,
            seed,
        )?,
    };
    Ok((run, horizons))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            network,
            state,
            strategy,
            window,
            relax_tail,
            subset,
            time_limit,
            gap,
            seed,
            out,
        } => {
            let (net, trains) = match load_net(&network) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            if trains.is_empty() {
                eprintln!("error: network document declares no trains");
                return ExitCode::from(1);
            }
            let (t, st) = match state {
                None => (0.0, origins(&trains)),
                Some(path) => {
                    let text = match fs::read_to_string(&path) {
                        Ok(x) => x,
                        Err(e) => return fail(&Error::Schema(format!("{path}: {e}"))),
                    };
                    match state_from_json(&text, &net, &trains) {
                        Ok(x) => x,
                        Err(e) => return fail(&e),
                    }
                }
            };
            let strat = match strategy.as_str() {
                "mono" => Strategy::Monolithic,
                "timewise" => Strategy::TimeWise {
                    window_min: window,
                    relax_tail_min: relax_tail,
                    use_relaxation: relax_tail > 0.0,
                },
                "trainwise-inc" => Strategy::TrainWiseIncremental { subset_size: subset },
                "trainwise-part" => Strategy::TrainWisePartition { subset_size: subset },
                other => {
                    eprintln!("error: unknown strategy {other}");
                    return ExitCode::from(1);
                }
            };
            let config = SolverConfig { time_limit, gap_target: gap, rng_seed: seed };
            match run_solve(&net, &trains, &st, t, &strat, &config, seed) {
                Ok((run, horizons)) => {
                    let problem = build_problem(t, &net, &trains, &st, &horizons)
                        .expect("solved problem rebuilds");
                    let objective = problem.objective_value(&run.solution);
                    let doc = SolutionFile::build(
                        &net,
                        &trains,
                        &st,
                        &horizons,
                        &run.solution,
                        t,
                        objective,
                    );
                    let text = serde_json::to_string_pretty(&doc).expect("solution serializes");
                    match out {
                        Some(path) => {
                            if let Err(e) = fs::write(&path, text) {
                                return fail(&Error::Schema(format!("{path}: {e}")));
                            }
                            eprintln!(
                                "objective {objective:.3}, wall {:.3}s",
                                run.stats.wall_time_s
                            );
                        }
                        None => println!("{text}"),
                    }
                    ExitCode::SUCCESS
                }
                Err(Error::Schema(msg)) if msg.contains("timed out") => {
                    eprintln!("error: no incumbent within the time limit");
                    ExitCode::from(4)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Simulate { config, out } => {
            let text = match fs::read_to_string(&config) {
                Ok(x) => x,
                Err(e) => return fail(&Error::Schema(format!("{config}: {e}"))),
            };
            let sim: SimConfigFile = match parse_json(&text) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let (net, trains) = match load_net(&sim.network) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let state = match &sim.state {
                None => origins(&trains),
                Some(path) => {
                    let text = match fs::read_to_string(path) {
                        Ok(x) => x,
                        Err(e) => return fail(&Error::Schema(format!("{path}: {e}"))),
                    };
                    match state_from_json(&text, &net, &trains) {
                        Ok((_, s)) => s,
                        Err(e) => return fail(&e),
                    }
                }
            };
            let config = ClosedLoopConfig {
                delta_t: sim.delta_t,
                strategy: sim.strategy.strategy.clone(),
                solver: SolverConfig {
                    time_limit: sim.time_limit,
                    gap_target: sim.gap_target,
                    rng_seed: sim.seed,
                },
                max_sim_time: sim.max_sim_time,
                rng_seed: sim.seed,
                ..Default::default()
            };
            match run_closed_loop(&net, &trains, &state, &config) {
                Ok(log) => {
                    if let Err(e) = fs::write(&out, log.to_jsonl()) {
                        return fail(&Error::Schema(format!("{out}: {e}")));
                    }
                    eprintln!(
                        "iterations {}, all arrived: {}, deadlocks: {}",
                        log.iterations.len(),
                        log.all_arrived,
                        log.deadlocks
                    );
                    if log.deadlocks > 0 {
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::DetectDeadlock { network, state } => {
            let (net, trains) = match load_net(&network) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let text = match fs::read_to_string(&state) {
                Ok(x) => x,
                Err(e) => return fail(&Error::Schema(format!("{state}: {e}"))),
            };
            let (t, st) = match state_from_json(&text, &net, &trains) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            match compute_safe_horizon(t, &net, &trains, &st, &SolverConfig::default(), None) {
                Ok(r) => {
                    let problem = build_problem(t, &net, &trains, &st, &r.horizons)
                        .expect("certified problem rebuilds");
                    let doc = serde_json::json!({
                        "verdict": "clear",
                        "horizons": r.horizons,
                        "attempts": r.attempts,
                        "witness_objective": problem.objective_value(&r.witness),
                    });
                    println!("{doc}");
                    ExitCode::SUCCESS
                }
                Err(Error::Deadlocked) => {
                    let doc = serde_json::json!({
                        "verdict": "deadlocked",
                        "horizons": serde_json::Value::Null,
                        "attempts": serde_json::Value::Null,
                        "witness_objective": serde_json::Value::Null,
                    });
                    println!("{doc}");
                    ExitCode::from(2)
                }
                Err(e) => fail(&e),
            }
        }
        Command::Bench { suite: suite_path, out } => {
            let text = match fs::read_to_string(&suite_path) {
                Ok(x) => x,
                Err(e) => return fail(&Error::Schema(format!("{suite_path}: {e}"))),
            };
            let cfg: SuiteConfigFile = match parse_json(&text) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let (net, _) = match load_net(&cfg.network) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let strategies: Vec<NamedStrategy> = if cfg.strategies.is_empty() {
                suite::default_strategies()
            } else {
                cfg.strategies.clone()
            };
            let solver = SolverConfig {
                time_limit: cfg.time_limit,
                gap_target: cfg.gap_target,
                rng_seed: 0,
            };
            match suite::run_suite(&net, &cfg.traffic_levels, cfg.n_seeds, &strategies, &solver) {
                Ok(records) => {
                    if let Err(e) = fs::write(&out, suite::to_csv(&records)) {
                        return fail(&Error::Schema(format!("{out}: {e}")));
                    }
                    println!("{}", suite::summarize(&records));
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Plot { solution, corridor, out } => {
            let text = match fs::read_to_string(&solution) {
                Ok(x) => x,
                Err(e) => return fail(&Error::Schema(format!("{solution}: {e}"))),
            };
            let doc: SolutionFile = match parse_json(&text) {
                Ok(x) => x,
                Err(e) => return fail(&e),
            };
            let corridor: Vec<String> =
                corridor.split(',').map(|s| s.trim().to_string()).collect();
            match render_train_graph(&doc.plots(), &corridor) {
                Ok(svg) => {
                    if let Err(e) = fs::write(&out, svg) {
                        return fail(&Error::Schema(format!("{out}: {e}")));
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
