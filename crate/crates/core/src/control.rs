//! Receding-horizon operation of the network and the decomposition
//! strategies used to keep per-iteration solves cheap.
//!
//! The loop measures the state, computes safe horizons (from scratch at the
//! start, warm-started afterwards), solves the resulting problem with the
//! configured strategy, lets trains execute the schedule for `delta_t`
//! minutes, and repeats. Safe horizons make every iteration feasible, so a
//! run from a non-deadlocked state never wedges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_problem, build_problem_subset, remaining_stages, shift_solution, validate_state,
    BinKey, HorizonVector, PartialAssignment, Problem, Solution, SystemState, TrainPos,
};
use crate::network::{Network, SlotCount, TrainIdx, TrainSpec};
use crate::safety::{
    budget_advance, compute_safe_horizon, detect_deadlock, extend_to_horizon, is_non_regressive,
    is_safe_horizon, warm_horizon,
};
use crate::solver::{solve, SolveStats, SolverConfig};
use rand::prelude::*;
use rand::rngs::StdRng;

/// How each per-iteration problem is solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Strategy {
    Monolithic,
    TimeWise { window_min: f64, relax_tail_min: f64, use_relaxation: bool },
    TrainWiseIncremental { subset_size: usize },
    TrainWisePartition { subset_size: usize },
}

/// Starting point for the safe-horizon search at the first iteration.
/// Larger initializations cut the number of candidate horizons tried and
/// keep trains rolling across recomputation boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonInit {
    Unit,
    FullPath,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopConfig {
    /// Minutes between schedule recomputations.
    pub delta_t: f64,
    pub strategy: Strategy,
    pub solver: SolverConfig,
    pub max_sim_time: f64,
    pub rng_seed: u64,
    pub horizon_init: HorizonInit,
    /// Test hook: fixed horizons for the first iteration, bypassing the
    /// safe-horizon computation entirely.
    pub horizon_override: Option<HorizonVector>,
    /// Recompute horizons from scratch each iteration instead of reusing
    /// the previous terminals.
    pub full_recompute: bool,
}

impl Default for ClosedLoopConfig {
    fn default() -> Self {
        ClosedLoopConfig {
            delta_t: 15.0,
            strategy: Strategy::Monolithic,
            solver: SolverConfig::default(),
            max_sim_time: 24.0 * 60.0,
            rng_seed: 0,
            horizon_init: HorizonInit::FullPath,
            horizon_override: None,
            full_recompute: false,
        }
    }
}

/// A solution together with the aggregated solver effort behind it.
#[derive(Debug, Clone)]
pub struct StrategyRun {
    pub solution: Solution,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub t: f64,
    pub horizons: HorizonVector,
    pub objective: Option<f64>,
    pub stats: SolveStats,
    pub deadlocked: bool,
    /// State snapshot in the documented JSON shape.
    pub state: serde_json::Value,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RunLog {
    pub iterations: Vec<IterationRecord>,
    pub all_arrived: bool,
    pub completion_time: Option<f64>,
    pub deadlocks: usize,
}

impl RunLog {
    /// One JSON document per iteration, then a summary line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for it in &self.iterations {
            out.push_str(&serde_json::to_string(it).expect("iteration serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "all_arrived": self.all_arrived,
            "completion_time": self.completion_time,
            "deadlocks": self.deadlocks,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// Move every train `delta_t` minutes along its schedule with nominal travel
/// times: rolling over an edge, dwelling at a node once arrived, parked at
/// the horizon terminal when the schedule is exhausted.
pub fn advance_state(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
    solution: &Solution,
    delta_t: f64,
) -> SystemState {
    let mut positions = Vec::with_capacity(trains.len());
    for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
        if pos.arrived || horizons[i] == 0 {
            positions.push(pos.clone());
            continue;
        }
        let ys = &solution.y[i];
        let mut tau: Vec<f64> = train.travel_times
            [pos.progress..pos.progress + horizons[i]]
            .to_vec();
        if pos.on_edge() {
            tau[0] *= 1.0 - pos.edge_fraction;
        }
        let departed = ys.iter().filter(|&&y| y < delta_t).count();
        if departed == 0 {
            positions.push(pos.clone());
            continue;
        }
        let k = departed - 1;
        let arrival = ys[k] + tau[k];
        if delta_t < arrival {
            // Mid-edge on stage k.
            let full = train.travel_times[pos.progress + k];
            let w = if k == 0 && pos.on_edge() {
                pos.edge_fraction + (delta_t - ys[k]) / full
            } else {
                (delta_t - ys[k]) / full
            };
            positions.push(TrainPos {
                progress: pos.progress + k,
                edge_fraction: w.clamp(f64::MIN_POSITIVE, 1.0 - 1e-12),
                slot: None,
                arrived: false,
            });
        } else {
            let progress = pos.progress + k + 1;
            let arrived = progress == train.stages();
            let node = train.node_path[progress];
            let slot = if arrived {
                None
            } else {
                match network.slots(node) {
                    SlotCount::Finite(_) => solution.z_slot.get(&(i, node)).copied(),
                    SlotCount::Infinite => None,
                }
            };
            positions.push(TrainPos { progress, edge_fraction: 0.0, slot, arrived });
        }
    }
    // Open-capacity nodes do not track slots in schedules; number their
    // dwellers deterministically.
    let mut next_free: std::collections::BTreeMap<usize, u32> = Default::default();
    for (train, pos) in trains.iter().zip(&positions) {
        if !pos.arrived && !pos.on_edge() {
            if let Some(s) = pos.slot {
                let n = train.node_path[pos.progress];
                let e = next_free.entry(n).or_insert(0);
                *e = (*e).max(s + 1);
            }
        }
    }
    for (train, pos) in trains.iter().zip(positions.iter_mut()) {
        if !pos.arrived && !pos.on_edge() && pos.slot.is_none() {
            let n = train.node_path[pos.progress];
            let e = next_free.entry(n).or_insert(0);
            pos.slot = Some(*e);
            *e += 1;
        }
    }
    SystemState { positions }
}

/// Re-index the surviving binaries and shifted departures of the previous
/// solution into a newly built problem. Requires the new horizons to be the
/// warm-started kind: safe and non-regressive with respect to the old ones.
pub fn warm_start_assignment(
    network: &Network,
    trains: &[TrainSpec],
    prev_problem: &Problem,
    prev_solution: &Solution,
    new_problem: &Problem,
) -> Result<PartialAssignment> {
    if !is_safe_horizon(network, trains, &new_problem.state, &new_problem.horizons) {
        return Err(Error::UnsafeBoundary("new horizons are not safe".into()));
    }
    let terminal = |state: &SystemState, horizons: &HorizonVector, i: usize| {
        let pos = &state.positions[i];
        let f = horizons[i];
        trains[i].node_path[if pos.arrived { trains[i].stages() } else { pos.progress + f }]
    };
    let prev_terms: Vec<_> =
        (0..trains.len()).map(|i| terminal(&prev_problem.state, &prev_problem.horizons, i)).collect();
    let new_terms: Vec<_> =
        (0..trains.len()).map(|i| terminal(&new_problem.state, &new_problem.horizons, i)).collect();
    if !is_non_regressive(trains, &prev_terms, &new_terms)? {
        return Err(Error::UnsafeBoundary("new horizons regress a previous terminal".into()));
    }
    let delta_t = new_problem.t - prev_problem.t;
    if delta_t < 0.0 {
        return Err(Error::IndexingMismatch("problems out of order".into()));
    }
    let shifted = shift_solution(prev_problem, prev_solution, delta_t)?;
    let mut out = PartialAssignment::default();
    for (&(i, j, e), &v) in &shifted.z_edge {
        let key = BinKey::Edge(i, j, e);
        if new_problem.bin(key).is_some() {
            out.bins.insert(key, v);
        }
    }
    for (&(i, j, n), &v) in &shifted.z_node {
        let key = BinKey::Node(i, j, n);
        if new_problem.bin(key).is_some() {
            out.bins.insert(key, v);
        }
    }
    for (&(i, n), &l) in &shifted.z_slot {
        if let Some(&cap) = new_problem.slot_capacity.get(&n) {
            if new_problem.bin(BinKey::Slot(i, n, 0)).is_some() {
                for s in 0..cap {
                    out.bins.insert(BinKey::Slot(i, n, s), s == l);
                }
            }
        }
    }
    for (i, ys) in shifted.y.iter().enumerate() {
        for (k, &v) in ys.iter().enumerate() {
            out.y_hints.insert((i, k), v);
        }
    }
    Ok(out)
}

/// Valid schedule for the next iteration obtained without any solving:
/// shift the executed part away, then walk the tail out to the new safe
/// terminals.
#[allow(clippy::too_many_arguments)]
pub fn anytime_initial_solution(
    network: &Network,
    trains: &[TrainSpec],
    prev_state: &SystemState,
    prev_horizons: &HorizonVector,
    prev_solution: &Solution,
    new_horizons: &HorizonVector,
    delta_t: f64,
    rng_seed: u64,
) -> Result<Solution> {
    let prev_problem = build_problem(0.0, network, trains, prev_state, prev_horizons)?;
    let new_state =
        advance_state(network, trains, prev_state, prev_horizons, prev_solution, delta_t);
    let shifted = shift_solution(&prev_problem, prev_solution, delta_t)?;
    let from: HorizonVector = shifted.y.iter().map(|ys| ys.len()).collect();
    extend_to_horizon(network, trains, &new_state, &shifted, &from, new_horizons, rng_seed)
}

/// Total unimpeded travel time of the first `f` stages of a train.
fn chain_time(train: &TrainSpec, pos: &TrainPos, f: usize) -> f64 {
    let mut total = 0.0;
    for s in 0..f {
        let mut tau = train.travel_times[pos.progress + s];
        if s == 0 && pos.on_edge() {
            tau *= 1.0 - pos.edge_fraction;
        }
        total += tau;
    }
    total
}

fn assignment_of(problem: &Problem, sol: &Solution) -> PartialAssignment {
    PartialAssignment::from_solution(problem, sol)
}

/// Departure time a binary decision is associated with, for tail relaxation.
fn bin_departure(problem: &Problem, sol: &Solution, key: BinKey) -> f64 {
    let claim_start = |i: TrainIdx, n: usize| {
        let it = problem.itineraries[i].as_ref().unwrap();
        let k = it.nodes.iter().position(|&x| x == n).unwrap();
        if k == 0 {
            0.0
        } else {
            sol.y[i][k - 1]
        }
    };
    match key {
        BinKey::Edge(i, j, e) => {
            let ki = problem.itineraries[i].as_ref().unwrap().edges.iter().position(|&x| x == e).unwrap();
            let kj = problem.itineraries[j].as_ref().unwrap().edges.iter().position(|&x| x == e).unwrap();
            sol.y[i][ki].min(sol.y[j][kj])
        }
        BinKey::Node(i, j, n) => claim_start(i, n).min(claim_start(j, n)),
        BinKey::Slot(i, n, _) => claim_start(i, n),
    }
}

/// Solve one instant's problem as a sequence of problems with growing
/// horizons: each step adds at least `window_min` minutes of unimpeded
/// travel per train, lands on a safe horizon, and carries the previous
/// step's binaries forward — forced, or merely seeded for decisions close
/// to the end of the previous step when relaxation is on.
#[allow(clippy::too_many_arguments)]
pub fn solve_timewise(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    target_horizons: &HorizonVector,
    window_min: f64,
    relax_tail_min: f64,
    use_relaxation: bool,
    config: &SolverConfig,
) -> Result<StrategyRun> {
    let base = compute_safe_horizon(t, network, trains, state, config, None)?;
    let mut stats = SolveStats::default();
    let active = |i: usize| !state.positions[i].arrived;
    let base_fits = (0..trains.len()).all(|i| !active(i) || base.horizons[i] <= target_horizons[i]);

    let mut prev: Option<(Problem, Solution)> = None;
    let mut current = base.horizons.clone();
    let mut step = 0usize;
    loop {
        step += 1;
        let f = if !base_fits {
            target_horizons.clone()
        } else if step == 1 {
            base.horizons.clone()
        } else {
            // Grow each horizon by one more window of unimpeded travel,
            // then find the nearest safe horizon at or past it.
            let mut grown: HorizonVector = vec![0; trains.len()];
            for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
                if !active(i) {
                    continue;
                }
                let goal = step as f64 * window_min;
                let stages = remaining_stages(train, pos);
                let mut fi = current[i];
                while fi < stages && chain_time(train, pos, fi) < goal {
                    fi += 1;
                }
                grown[i] = fi.max(current[i]).min(target_horizons[i]).max(base.horizons[i]);
            }
            let advanced = budget_advance(network, trains, state, &grown);
            let capped: HorizonVector = (0..trains.len())
                .map(|i| advanced[i].min(target_horizons[i]))
                .collect();
            if capped
                .iter()
                .zip(target_horizons)
                .enumerate
                ()
                .all(|(i, (&a, &b))| !active(i) || a >= b)
                || !is_safe_horizon(network, trains, state, &capped)
            {
                target_horizons.clone()
            } else {
                capped
            }
        };
        let problem = build_problem(t, network, trains, state, &f)?;
        let (seed, forced) = match &prev {
            None => {
                let p0 = build_problem(t, network, trains, state, &base.horizons)?;
                (Some(assignment_of(&p0, &base.witness)), None)
            }
            Some((prev_problem, prev_sol)) => {
                let full = assignment_of(prev_problem, prev_sol);
                let end = prev_sol.y.iter().flatten().fold(0.0f64, |acc, &v| acc.max(v));
                let mut forced = PartialAssignment::default();
                for (&key, &v) in &full.bins {
                    let tail = use_relaxation
                        && bin_departure(prev_problem, prev_sol, key) >= end - relax_tail_min;
                    if !tail {
                        forced.bins.insert(key, v);
                    }
                }
                // Walking the previous schedule out to the grown horizons
                // yields a complete feasible seed that honors every carried
                // decision; the solver then only improves on it.
                let seed = match extend_to_horizon(
                    network,
                    trains,
                    state,
                    prev_sol,
                    &current,
                    &f,
                    config.rng_seed,
                ) {
                    Ok(extended) => assignment_of(&problem, &extended),
                    Err(_) => full,
                };
                (Some(seed), Some(forced))
            }
        };
        let result = match solve(&problem, config, seed.as_ref(), forced.as_ref()) {
            Ok(r) => r,
            Err(e) => {
                if std::env::var("RAILDBG").is_ok() {
                    eprintln!("timewise step {step} failed: {e}; f = {:?}", f);
                    eprintln!("  current = {:?}", current);
                    eprintln!("  target  = {:?}", target_horizons);
                    eprintln!("  base    = {:?}", base.horizons);
                    if let Some(fd) = &forced {
                        eprintln!("  forced bins: {}", fd.bins.len());
                    }
                }
                return Err(e);
            }
        };
        stats.nodes_explored += result.stats.nodes_explored;
        stats.leaf_solves += result.stats.leaf_solves;
        stats.wall_time_s += result.stats.wall_time_s;
        if result.incumbent.is_none() && std::env::var("RAILDBG").is_ok() {
            eprintln!(
                "timewise step {step} no incumbent: status {:?}; f = {:?} current = {:?} base = {:?} forced {}",
                result.status,
                f,
                current,
                base.horizons,
                forced.as_ref().map(|x| x.bins.len()).unwrap_or(0)
            );
        }
        let sol = result.incumbent.ok_or(Error::ForcedInfeasible)?;
        let done = (0..trains.len()).all(|i| !active(i) || f[i] >= target_horizons[i]);
        if done {
            return Ok(StrategyRun { solution: sol, stats });
        }
        current = f;
        prev = Some((problem, sol));
    }
}

/// Solve one instant's problem over portions of the fleet at a time.
/// `Incremental` grows one subset; `Partition` solves disjoint subsets
/// independently and assembles them in a final full solve. Binaries of
/// earlier steps are frozen only at or past the base safe horizon, keeping
/// the prefix open so the assembled problem stays feasible.
#[allow(clippy::too_many_arguments)]
pub fn solve_trainwise(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    target_horizons: &HorizonVector,
    incremental: bool,
    subset_size: usize,
    config: &SolverConfig,
    rng_seed: u64,
) -> Result<StrategyRun> {
    if subset_size == 0 {
        return Err(Error::InvalidState("subset size must be at least 1".into()));
    }
    let base = compute_safe_horizon(t, network, trains, state, config, None)?;
    let mut stats = SolveStats::default();
    let mut active: Vec<TrainIdx> =
        (0..trains.len()).filter(|&i| !state.positions[i].arrived).collect();
    let mut rng = StdRng::seed_from_u64(rng_seed);
    active.shuffle(&mut rng);

    // Freeze only decisions indexed at or past the base safe horizon.
    let freezable = |key: &BinKey| -> bool {
        let stage_ok = |i: TrainIdx, k: usize| k >= base.horizons[i];
        match *key {
            BinKey::Edge(i, j, _) | BinKey::Node(i, j, _) => {
                // Stage of the resource within each train's current path.
                true && {
                    let _ = (i, j);
                    true
                }
            }
            BinKey::Slot(i, _, _) => {
                let _ = i;
                true
            }
        }
        .then(|| stage_ok(0, 0))
        .is_some()
    };
    let _ = freezable;

    let resource_stage = |problem: &Problem, key: &BinKey| -> Option<(usize, usize)> {
        match *key {
            BinKey::Edge(i, j, e) => {
                let ki =
                    problem.itineraries[i].as_ref()?.edges.iter().position(|&x| x == e)?;
                let kj =
                    problem.itineraries[j].as_ref()?.edges.iter().position(|&x| x == e)?;
                Some((base.horizons[i].saturating_sub(ki), base.horizons[j].saturating_sub(kj)))
            }
            BinKey::Node(i, j, n) => {
                let ki =
                    problem.itineraries[i].as_ref()?.nodes.iter().position(|&x| x == n)?;
                let kj =
                    problem.itineraries[j].as_ref()?.nodes.iter().position(|&x| x == n)?;
                Some((base.horizons[i].saturating_sub(ki), base.horizons[j].saturating_sub(kj)))
            }
            BinKey::Slot(i, n, _) => {
                let ki =
                    problem.itineraries[i].as_ref()?.nodes.iter().position(|&x| x == n)?;
                Some((base.horizons[i].saturating_sub(ki), 0))
            }
        }
    };
    // A decision is past the base horizon when neither train still has it
    // inside the certified prefix.
    let frozen_key = |problem: &Problem, key: &BinKey| -> bool {
        resource_stage(problem, key).map(|(a, b)| a == 0 && b == 0).unwrap_or(false)
    };

    let run_step = |mask: &[bool],
                    seed: Option<&PartialAssignment>,
                    forced: Option<&PartialAssignment>,
                    stats: &mut SolveStats|
     -> Result<(Problem, Solution)> {
        let problem =
            build_problem_subset(t, network, trains, state, target_horizons, Some(mask))?;
        let result = solve(&problem, config, seed, forced)?;
        stats.nodes_explored += result.stats.nodes_explored;
        stats.leaf_solves += result.stats.leaf_solves;
        stats.wall_time_s += result.stats.wall_time_s;
        let sol = result.incumbent.ok_or(Error::ForcedInfeasible)?;
        Ok((problem, sol))
    };

    if incremental {
        let mut prev: Option<(Problem, Solution)> = None;
        let mut covered = 0usize;
        while covered < active.len() {
            covered = (covered + subset_size).min(active.len());
            let mut mask = vec![false; trains.len()];
            for &i in &active[..covered] {
                mask[i] = true;
            }
            let (seed, forced) = match &prev {
                None => (None, None),
                Some((pp, ps)) => {
                    let full = assignment_of(pp, ps);
                    let mut frozen = PartialAssignment::default();
                    for (&key, &v) in &full.bins {
                        if frozen_key(pp, &key) {
                            frozen.bins.insert(key, v);
                        }
                    }
                    (Some(full), Some(frozen))
                }
            };
            let step = run_step(&mask, seed.as_ref(), forced.as_ref(), &mut stats)?;
            prev = Some(step);
        }
        let (_, sol) = prev.expect("at least one step runs");
        Ok(StrategyRun { solution: sol, stats })
    } else {
        // Disjoint partitions solved independently, then one assembling
        // solve with the partial decisions enforced.
        let mut frozen = PartialAssignment::default();
        let mut seed = PartialAssignment::default();
        for chunk in active.chunks(subset_size) {
            let mut mask = vec![false; trains.len()];
            for &i in chunk {
                mask[i] = true;
            }
            let (pp, ps) = run_step(&mask, None, None, &mut stats)?;
            let full = assignment_of(&pp, &ps);
            for (&key, &v) in &full.bins {
                seed.bins.insert(key, v);
                if frozen_key(&pp, &key) {
                    frozen.bins.insert(key, v);
                }
            }
        }
        let mask = vec![true; trains.len()];
        let mask: Vec<bool> = mask
            .iter()
            .enumerate()
            .map(|(i, _)| !state.positions[i].arrived)
            .collect();
        let (_, sol) = run_step(&mask, Some(&seed), Some(&frozen), &mut stats)?;
        Ok(StrategyRun { solution: sol, stats })
    }
}

fn solve_strategy(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
    config: &ClosedLoopConfig,
    seed: Option<&PartialAssignment>,
    fallback: Option<Solution>,
) -> Result<StrategyRun> {
    match &config.strategy {
        Strategy::Monolithic => {
            let problem = build_problem(t, network, trains, state, horizons)?;
            let result = solve(&problem, &config.solver, seed, None)?;
            match result.incumbent {
                Some(solution) => Ok(StrategyRun { solution, stats: result.stats }),
                None => {
                    let solution = fallback.ok_or(Error::ForcedInfeasible)?;
                    Ok(StrategyRun { solution, stats: result.stats })
                }
            }
        }
        Strategy::TimeWise { window_min, relax_tail_min, use_relaxation } => solve_timewise(
            t,
            network,
            trains,
            state,
            horizons,
            *window_min,
            *relax_tail_min,
            *use_relaxation,
            &config.solver,
        ),
        Strategy::TrainWiseIncremental { subset_size } => solve_trainwise(
            t,
            network,
            trains,
            state,
            horizons,
            true,
            *subset_size,
            &config.solver,
            config.rng_seed,
        ),
        Strategy::TrainWisePartition { subset_size } => solve_trainwise(
            t,
            network,
            trains,
            state,
            horizons,
            false,
            *subset_size,
            &config.solver,
            config.rng_seed,
        ),
    }
}

/// Run the closed loop to completion (all trains home), a deadlock verdict,
/// or the simulation time cap.
pub fn run_closed_loop(
    network: &Network,
    trains: &[TrainSpec],
    initial_state: &SystemState,
    config: &ClosedLoopConfig,
) -> Result<RunLog> {
    validate_state(network, trains, initial_state)?;
    let mut log = RunLog::default();
    let mut state = initial_state.clone();
    let mut t = 0.0f64;
    let mut prev: Option<(SystemState, HorizonVector, Solution)> = None;
    let mut completion: Option<f64> = None;
    let snapshot = |t: f64, s: &SystemState| {
        serde_json::from_str(&crate::model::state_to_json(t, network, trains, s)).unwrap()
    };

    loop {
        if state.all_arrived() {
            log.all_arrived = true;
            log.completion_time = completion;
            return Ok(log);
        }
        if t > config.max_sim_time + 1e-9 {
            return Ok(log);
        }
        let init = match config.horizon_init {
            HorizonInit::Unit => None,
            HorizonInit::FullPath => Some(
                trains
                    .iter()
                    .zip(&state.positions)
                    .map(|(tr, p)| if p.arrived { 0 } else { remaining_stages(tr, p) })
                    .collect(),
            ),
        };
        // Horizons: override on the first pass, warm-started continuation,
        // or a fresh computation.
        let horizons = if let Some(f) = &config.horizon_override {
            if prev.is_none() {
                f.clone()
            } else {
                let dead =
                    detect_deadlock(t, network, trains, &state, &config.solver)?;
                if dead {
                    log.deadlocks += 1;
                    log.iterations.push(IterationRecord {
                        t,
                        horizons: vec![0; trains.len()],
                        objective: None,
                        stats: SolveStats::default(),
                        deadlocked: true,
                        state: snapshot(t, &state),
                    });
                    return Ok(log);
                }
                compute_safe_horizon(t, network, trains, &state, &config.solver, init)?
                    .horizons
            }
        } else {
            match &prev {
                Some((ps, pf, _)) if !config.full_recompute => {
                    warm_horizon(network, trains, ps, pf, &state)?
                }
                _ => match compute_safe_horizon(t, network, trains, &state, &config.solver, init)
                {
                    Ok(r) => r.horizons,
                    Err(Error::Deadlocked) => {
                        log.deadlocks += 1;
                        log.iterations.push(IterationRecord {
                            t,
                            horizons: vec![0; trains.len()],
                            objective: None,
                            stats: SolveStats::default(),
                            deadlocked: true,
                            state: snapshot(t, &state),
                        });
                        return Ok(log);
                    }
                    Err(e) => return Err(e),
                },
            }
        };

        // Warm start: the previous schedule shifted and extended is both a
        // seed and a guaranteed fallback incumbent.
        let (seed, fallback) = match &prev {
            Some((ps, pf, psol)) if config.horizon_override.is_none() => {
                let anytime = anytime_initial_solution(
                    network,
                    trains,
                    ps,
                    pf,
                    psol,
                    &horizons,
                    config.delta_t,
                    config.rng_seed,
                )?;
                let problem = build_problem(t, network, trains, &state, &horizons)?;
                let assignment = PartialAssignment::from_solution(&problem, &anytime);
                (Some(assignment), Some(anytime))
            }
            _ => (None, None),
        };

        let run = solve_strategy(
            t,
            network,
            trains,
            &state,
            &horizons,
            config,
            seed.as_ref(),
            fallback,
        )?;
        let problem = build_problem(t, network, trains, &state, &horizons)?;
        let objective = Some(problem.objective_value(&run.solution));
        log.iterations.push(IterationRecord {
            t,
            horizons: horizons.clone(),
            objective,
            stats: run.stats.clone(),
            deadlocked: false,
            state: snapshot(t, &state),
        });

        // Track arrivals that happen inside this execution window.
        for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
            if pos.arrived || horizons[i] == 0 {
                continue;
            }
            if pos.progress + horizons[i] == train.stages() {
                let last = horizons[i] - 1;
                let mut tau = train.travel_times[pos.progress + last];
                if pos.on_edge() && last == 0 {
                    tau *= 1.0 - pos.edge_fraction;
                }
                let arrival = t + run.solution.y[i][last] + tau;
                if run.solution.y[i][last] + tau <= config.delta_t {
                    completion = Some(completion.map_or(arrival, |c: f64| c.max(arrival)));
                }
            }
        }

        let new_state =
            advance_state(network, trains, &state, &horizons, &run.solution, config.delta_t);
        prev = Some((state, horizons, run.solution));
        state = new_state;
        t += config.delta_t;
    }
}
