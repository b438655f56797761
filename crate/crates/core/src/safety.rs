//! Safe states, safe horizon computation and deadlock detection.
//!
//! A configuration with every train dwelling at a node and a spare slot left
//! at every capacitated node is *safe*: from there, trains can always be
//! walked one at a time to any non-regressive safe configuration. Horizons
//! whose terminal configuration is safe therefore keep the closed loop
//! recursively feasible, and a state is deadlocked exactly when no safe
//! horizon admits a feasible schedule.

use std::collections::BTreeMap;

use rand::prelude::*;
use rand::rngs::StdRng;

use crate::error::{Error, Result};
use crate::model::{
    arrived_blocked_slots, build_problem, conflict_sets, remaining_stages, validate_state,
    HorizonVector, Solution, SystemState,
};
use crate::network::{Network, NodeIdx, SlotCount, TrainIdx, TrainSpec};
use crate::solver::{solve, SolverConfig};
use crate::TIME_TOL;

/// Safe horizons plus the feasible schedule found while certifying them.
#[derive(Debug, Clone)]
pub struct SafeHorizonResult {
    pub horizons: HorizonVector,
    pub witness: Solution,
    pub attempts: usize,
}

/// One single-train relocation: the train runs without stopping from its
/// current parking to `target_node`, taking `slot` there. `departures` are
/// the absolute departure times of each stage covered.
#[derive(Debug, Clone)]
pub struct Relocation {
    pub train: TrainIdx,
    pub target_node: NodeIdx,
    pub slot: Option<u32>,
    /// Path index of the node the move starts from.
    pub from_stage: usize,
    pub to_stage: usize,
    pub departures: Vec<f64>,
    /// Slot chosen at every node entered during the move, target included.
    pub transit_slots: Vec<(NodeIdx, Option<u32>)>,
}

/// An executable sequence of single-train relocations.
#[derive(Debug, Clone, Default)]
pub struct MovementSequence {
    pub moves: Vec<Relocation>,
    pub duration: f64,
}

/// All trains parked with a spare slot everywhere.
pub fn is_safe(network: &Network, trains: &[TrainSpec], state: &SystemState) -> bool {
    if validate_state(network, trains, state).is_err() {
        return false;
    }
    let mut occupants: BTreeMap<NodeIdx, u32> = BTreeMap::new();
    for (train, pos) in trains.iter().zip(&state.positions) {
        if pos.on_edge() {
            return false;
        }
        let node = if pos.arrived { train.destination() } else { train.node_path[pos.progress] };
        *occupants.entry(node).or_insert(0) += 1;
    }
    occupants.iter().all(|(&n, &c)| match network.slots(n) {
        SlotCount::Finite(cap) => c < cap,
        SlotCount::Infinite => true,
    })
}

/// Would parking every train at its horizon terminal leave a spare slot at
/// every capacitated node? Arrived trains are off the books; everyone else
/// counts, including trains ending at their own destination.
pub fn is_safe_horizon(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
) -> bool {
    if horizons.len() != trains.len() {
        return false;
    }
    let mut occupants: BTreeMap<NodeIdx, u32> = BTreeMap::new();
    for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
        if pos.arrived {
            continue;
        }
        let f = horizons[i];
        if f < 1 || f > remaining_stages(train, pos) {
            return false;
        }
        let terminal = train.node_path[pos.progress + f];
        *occupants.entry(terminal).or_insert(0) += 1;
    }
    occupants.iter().all(|(&n, &c)| match network.slots(n) {
        SlotCount::Finite(cap) => c < cap,
        SlotCount::Infinite => true,
    })
}

/// A horizon vector qualifies for the safe-horizon search when its terminal
/// configuration keeps a spare slot everywhere, or when it is the journey's
/// end for every remaining train: destinations play the open-ended terminal
/// role, and the feasibility check still accounts for the track they hold.
pub fn horizon_boundary_acceptable(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
) -> bool {
    if is_safe_horizon(network, trains, state, horizons) {
        return true;
    }
    trains.iter().zip(&state.positions).enumerate().all(|(i, (train, pos))| {
        pos.arrived || horizons[i] == remaining_stages(train, pos)
    })
}

/// Every new terminal lies at or beyond the previous one along its path.
pub fn is_non_regressive(
    trains: &[TrainSpec],
    prev_terminals: &[NodeIdx],
    new_terminals: &[NodeIdx],
) -> Result<bool> {
    if prev_terminals.len() != trains.len() || new_terminals.len() != trains.len() {
        return Err(Error::NotOnPath);
    }
    for (train, (&prev, &new)) in trains.iter().zip(prev_terminals.iter().zip(new_terminals)) {
        if train.node_stage(new)? < train.node_stage(prev)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Advance each horizon past nodes whose remaining slot budget would drop to
/// zero, consuming one budget unit per adopted terminal. Trains are handled
/// in index order; arrived trains are skipped.
pub fn budget_advance(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    base: &HorizonVector,
) -> HorizonVector {
    let mut eta: Vec<i64> = network
        .nodes
        .iter()
        .map(|n| match n.slots {
            SlotCount::Finite(c) => c as i64,
            SlotCount::Infinite => i64::MAX,
        })
        .collect();
    let mut out = vec![0usize; trains.len()];
    for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
        if pos.arrived {
            continue;
        }
        let stages = remaining_stages(train, pos);
        let mut f = base[i].max(1).min(stages);
        while f < stages && eta[train.node_path[pos.progress + f]] <= 1 {
            f += 1;
        }
        let terminal = train.node_path[pos.progress + f];
        if eta[terminal] != i64::MAX {
            eta[terminal] -= 1;
        }
        out[i] = f;
    }
    out
}

/// Compute safe horizons from scratch: start from unit horizons (or the
/// given initialization), push each past exhausted slot budgets, and extend
/// one train at a time until the resulting problem is feasible. Fails with
/// `Deadlocked` when no safe horizon within the full paths works, which
/// certifies an actual deadlock.
pub fn compute_safe_horizon(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    config: &SolverConfig,
    init: Option<HorizonVector>,
) -> Result<SafeHorizonResult> {
    validate_state(network, trains, state)?;
    if state.all_arrived() {
        return Err(Error::InvalidState("all trains have arrived".into()));
    }
    let mut base = init.unwrap_or_else(|| vec![1; trains.len()]);
    let feas_cfg = config.first_feasible();
    let mut attempts = 0usize;
    loop {
        attempts += 1;
        let f = budget_advance(network, trains, state, &base);
        if horizon_boundary_acceptable(network, trains, state, &f) {
            let problem = build_problem(t, network, trains, state, &f)?;
            let result = solve(&problem, &feas_cfg, None, None)?;
            if let Some(witness) = result.incumbent {
                return Ok(SafeHorizonResult { horizons: f, witness, attempts });
            }
        }
        // Extend the shortest extendable horizon, lowest train index first.
        let candidate = (0..trains.len())
            .filter(|&i| {
                !state.positions[i].arrived
                    && f[i] < remaining_stages(&trains[i], &state.positions[i])
            })
            .min_by_key(|&i| (f[i], i));
        match candidate {
            Some(i) => {
                base = f;
                base[i] += 1;
            }
            None => return Err(Error::Deadlocked),
        }
    }
}

/// Warm-started horizon computation: map the previous terminals into the
/// current path indexing and re-run the budget pass. The result is safe and
/// non-regressive, and the corresponding problem is feasible by construction,
/// so no solver check is needed.
pub fn warm_horizon(
    network: &Network,
    trains: &[TrainSpec],
    prev_state: &SystemState,
    prev_horizons: &HorizonVector,
    new_state: &SystemState,
) -> Result<HorizonVector> {
    let mut base = vec![0usize; trains.len()];
    for (i, train) in trains.iter().enumerate() {
        let (prev, new) = (&prev_state.positions[i], &new_state.positions[i]);
        if new.arrived {
            continue;
        }
        if prev.arrived {
            return Err(Error::PathMismatch(train.id.clone()));
        }
        let terminal = prev.progress + prev_horizons[i];
        if terminal < new.progress || terminal > train.stages() {
            return Err(Error::PathMismatch(train.id.clone()));
        }
        base[i] = (terminal - new.progress).max(1);
    }
    Ok(budget_advance(network, trains, new_state, &base))
}

/// True iff no sequence of forward movements brings every train home.
pub fn detect_deadlock(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    config: &SolverConfig,
) -> Result<bool> {
    if state.all_arrived() {
        return Ok(false);
    }
    // Full-path initialization makes the first candidate the full-horizon
    // problem, whose feasibility characterizes deadlock exactly, so the
    // verdict normally costs a single first-feasible solve.
    let full: HorizonVector = trains
        .iter()
        .zip(&state.positions)
        .map(|(tr, p)| if p.arrived { 0 } else { remaining_stages(tr, p) })
        .collect();
    match compute_safe_horizon(t, network, trains, state, config, Some(full)) {
        Ok(_) => Ok(false),
        Err(Error::Deadlocked) => Ok(true),
        Err(e) => Err(e),
    }
}

// --- Trivial safe-to-safe policy -------------------------------------------------

struct Occupancy {
    used: BTreeMap<NodeIdx, Vec<u32>>,
}

impl Occupancy {
    fn free_count(&self, network: &Network, n: NodeIdx) -> Option<u32> {
        network
            .slots(n)
            .finite()
            .map(|cap| cap - self.used.get(&n).map(|v| v.len() as u32).unwrap_or(0))
    }

    fn lowest_free(&self, network: &Network, n: NodeIdx) -> Option<u32> {
        match network.slots(n) {
            SlotCount::Infinite => None,
            SlotCount::Finite(cap) => {
                let used = self.used.get(&n);
                (0..cap).find(|s| used.map(|u| !u.contains(s)).unwrap_or(true))
            }
        }
    }

    fn occupy(&mut self, network: &Network, n: NodeIdx, slot: Option<u32>) {
        if network.slots(n).finite().is_some() {
            self.used.entry(n).or_default().push(slot.expect("capacitated nodes use slots"));
        }
    }

    fn release(&mut self, n: NodeIdx, slot: Option<u32>) {
        if let (Some(v), Some(s)) = (self.used.get_mut(&n), slot) {
            v.retain(|&x| x != s);
        }
    }
}

fn config_is_safe(
    network: &Network,
    parked: &[(NodeIdx, Option<u32>)],
    static_used: &BTreeMap<NodeIdx, Vec<u32>>,
) -> bool {
    let mut count: BTreeMap<NodeIdx, u32> = BTreeMap::new();
    for (n, v) in static_used {
        count.insert(*n, v.len() as u32);
    }
    for &(n, _) in parked {
        *count.entry(n).or_insert(0) += 1;
    }
    count.iter().all(|(&n, &c)| match network.slots(n) {
        SlotCount::Finite(cap) => c < cap,
        SlotCount::Infinite => true,
    })
}

/// Core of the safe-to-safe policy: walk each mover once from its `from`
/// parking to its `to` stage, choosing the next mover at random except that
/// filling a node hands the turn to a train still parked there.
#[allow(clippy::too_many_arguments)]
fn run_policy(
    network: &Network,
    trains: &[TrainSpec],
    movers: &[TrainIdx],
    from_stage: &[usize],
    from_slot: &[Option<u32>],
    to_stage: &[usize],
    static_used: &BTreeMap<NodeIdx, Vec<u32>>,
    start_time: f64,
    rng_seed: u64,
) -> Result<MovementSequence> {
    let from_cfg: Vec<(NodeIdx, Option<u32>)> =
        movers.iter().map(|&i| (trains[i].node_path[from_stage[i]], from_slot[i])).collect();
    let to_cfg: Vec<(NodeIdx, Option<u32>)> =
        movers.iter().map(|&i| (trains[i].node_path[to_stage[i]], None)).collect();
    if !config_is_safe(network, &from_cfg, static_used) {
        return Err(Error::UnsafeBoundary("source configuration has no spare slot".into()));
    }
    if !config_is_safe(network, &to_cfg, static_used) {
        return Err(Error::UnsafeBoundary("target configuration has no spare slot".into()));
    }
    for &i in movers {
        if to_stage[i] < from_stage[i] {
            return Err(Error::NonMonotoneHorizons);
        }
    }

    let mut occ = Occupancy { used: static_used.clone() };
    let mut parked_at: BTreeMap<TrainIdx, (NodeIdx, Option<u32>)> = BTreeMap::new();
    for (&i, &(n, s)) in movers.iter().zip(&from_cfg) {
        let slot = if network.slots(n).finite().is_some() {
            Some(match s {
                Some(s) => s,
                None => occ.lowest_free(network, n).expect("safe source has room"),
            })
        } else {
            None
        };
        occ.occupy(network, n, slot);
        parked_at.insert(i, (n, slot));
    }

    let mut rng = StdRng::seed_from_u64(rng_seed);
    let mut open: Vec<TrainIdx> = movers.to_vec();
    let mut seq = MovementSequence { moves: Vec::new(), duration: 0.0 };
    let mut clock = start_time;
    let mut forced: Option<TrainIdx> = None;
    while !open.is_empty() {
        let pick = match forced.take() {
            Some(i) => i,
            None => open[rng.gen_range(0..open.len())],
        };
        open.retain(|&x| x != pick);
        let train = &trains[pick];
        let (a, b) = (from_stage[pick], to_stage[pick]);
        let (cur_node, cur_slot) = parked_at.remove(&pick).unwrap();
        occ.release(cur_node, cur_slot);
        let mut departures = Vec::new();
        let mut transit_slots = Vec::new();
        let mut t = clock;
        for k in a..b {
            departures.push(t);
            t += train.travel_times[k];
            let entered = train.node_path[k + 1];
            let slot = match network.slots(entered) {
                SlotCount::Infinite => None,
                SlotCount::Finite(_) => Some(occ.lowest_free(network, entered).ok_or_else(
                    || {
                        Error::UnsafeBoundary(format!(
                            "no slot available at {} during relocation",
                            network.node_id(entered)
                        ))
                    },
                )?),
            };
            transit_slots.push((entered, slot));
        }
        let target = train.node_path[b];
        let final_slot = transit_slots.last().map(|&(_, s)| s).unwrap_or(cur_slot);
        occ.occupy(network, target, final_slot);
        parked_at.insert(pick, (target, final_slot));
        clock = t;
        if a != b {
            seq.moves.push(Relocation {
                train: pick,
                target_node: target,
                slot: final_slot,
                from_stage: a,
                to_stage: b,
                departures,
                transit_slots,
            });
        }
        // Hand over to a train parked at a node the move just filled.
        if occ.free_count(network, target).map(|c| c == 0).unwrap_or(false) {
            let stuck: Vec<TrainIdx> = open
                .iter()
                .copied()
                .filter(|&j| parked_at.get(&j).map(|&(n, _)| n == target).unwrap_or(false))
                .collect();
            if !stuck.is_empty() {
                forced = Some(stuck[rng.gen_range(0..stuck.len())]);
            }
        }
    }
    seq.duration = clock - start_time;
    Ok(seq)
}

/// Relocation sequence between two safe parked configurations: each train
/// moves exactly once, forward along its own path.
pub fn trivial_policy(
    network: &Network,
    trains: &[TrainSpec],
    safe_from: &[NodeIdx],
    safe_to: &[NodeIdx],
    rng_seed: u64,
) -> Result<MovementSequence> {
    if safe_from.len() != trains.len() || safe_to.len() != trains.len() {
        return Err(Error::NotOnPath);
    }
    let mut from_stage = vec![0usize; trains.len()];
    let mut to_stage = vec![0usize; trains.len()];
    for (i, train) in trains.iter().enumerate() {
        from_stage[i] = train.node_stage(safe_from[i])?;
        to_stage[i] = train.node_stage(safe_to[i])?;
    }
    let movers: Vec<TrainIdx> = (0..trains.len()).collect();
    let from_slot = vec![None; trains.len()];
    run_policy(
        network,
        trains,
        &movers,
        &from_stage,
        &from_slot,
        &to_stage,
        &BTreeMap::new(),
        0.0,
        rng_seed,
    )
}

// --- Solution extension -----------------------------------------------------------

/// Extend a feasible schedule ending in one safe configuration so that it
/// ends in a farther safe configuration, by appending serialized single-train
/// relocations. The result is a complete solution for the larger horizons.
pub fn extend_to_horizon(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    base: &Solution,
    from_horizons: &HorizonVector,
    to_horizons: &HorizonVector,
    rng_seed: u64,
) -> Result<Solution> {
    for i in 0..trains.len() {
        if base.y[i].len() != from_horizons[i] {
            return Err(Error::IndexingMismatch(format!(
                "train {} schedule has {} stages for horizon {}",
                trains[i].id,
                base.y[i].len(),
                from_horizons[i]
            )));
        }
        if to_horizons[i] < from_horizons[i] {
            return Err(Error::NonMonotoneHorizons);
        }
    }
    if to_horizons == from_horizons {
        return Ok(base.clone());
    }
    // Both ends of the extension must be spare-slot configurations. A
    // zero-length horizon means "already parked at the boundary node".
    let boundary_safe = |f: &HorizonVector| {
        let mut occupants: BTreeMap<NodeIdx, u32> = BTreeMap::new();
        let mut all_final = true;
        for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
            if pos.arrived {
                continue;
            }
            if pos.progress + f[i] == train.stages() {
                continue;
            }
            all_final = false;
            *occupants.entry(train.node_path[pos.progress + f[i]]).or_insert(0) += 1;
        }
        all_final
            || occupants.iter().all(|(&n, &c)| match network.slots(n) {
                SlotCount::Finite(cap) => c < cap,
                SlotCount::Infinite => true,
            })
    };
    if !boundary_safe(from_horizons) {
        return Err(Error::UnsafeBoundary("source horizons are not safe".into()));
    }
    if !boundary_safe(to_horizons) {
        return Err(Error::UnsafeBoundary("target horizons are not safe".into()));
    }

    let static_used = arrived_blocked_slots(network, trains, state)?;

    // Completion time of the base schedule.
    let mut t0 = 0.0f64;
    for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
        if pos.arrived || base.y[i].is_empty() {
            continue;
        }
        let mut tau: Vec<f64> =
            train.travel_times[pos.progress..pos.progress + from_horizons[i]].to_vec();
        if pos.on_edge() {
            tau[0] *= 1.0 - pos.edge_fraction;
        }
        let last = from_horizons[i] - 1;
        t0 = t0.max(base.y[i][last] + tau[last]);
    }

    let mut movers = Vec::new();
    let mut from_stage = vec![0usize; trains.len()];
    let mut from_slot = vec![None; trains.len()];
    let mut to_stage = vec![0usize; trains.len()];
    for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
        if pos.arrived {
            continue;
        }
        from_stage[i] = pos.progress + from_horizons[i];
        to_stage[i] = pos.progress + to_horizons[i];
        let from_node = train.node_path[from_stage[i]];
        from_slot[i] = if network.slots(from_node).finite().is_some() {
            if from_horizons[i] == 0 {
                pos.slot
            } else {
                base.z_slot.get(&(i, from_node)).copied()
            }
        } else {
            None
        };
        movers.push(i);
    }
    let seq = run_policy(
        network,
        trains,
        &movers,
        &from_stage,
        &from_slot,
        &to_stage,
        &static_used,
        t0,
        rng_seed,
    )?;

    // Assemble the combined schedule.
    let mut sol = Solution { y: base.y.clone(), z_slot: base.z_slot.clone(), ..Default::default() };
    for mv in &seq.moves {
        let i = mv.train;
        sol.y[i].extend_from_slice(&mv.departures);
        for &(n, s) in &mv.transit_slots {
            if let Some(s) = s {
                sol.z_slot.insert((i, n), s);
            }
        }
    }

    // Derive order binaries for every conflict of the extended problem from
    // the combined timeline.
    let sets = conflict_sets(network, trains, state, to_horizons);
    let eff_tau = |i: usize, local: usize| {
        let pos = &state.positions[i];
        let mut tau = trains[i].travel_times[pos.progress + local];
        if pos.on_edge() && local == 0 {
            tau *= 1.0 - pos.edge_fraction;
        }
        tau
    };
    for (&e, pairs) in &sets.edge_conflicts {
        for &(i, j) in pairs {
            let ki = trains[i].edge_path[state.positions[i].progress..]
                .iter()
                .position(|&x| x == e)
                .unwrap();
            let kj = trains[j].edge_path[state.positions[j].progress..]
                .iter()
                .position(|&x| x == e)
                .unwrap();
            sol.z_edge
                .insert((i, j, e), sol.y[i][ki] + eff_tau(i, ki) <= sol.y[j][kj] + TIME_TOL);
        }
    }
    let claim = |sol: &Solution, i: usize, n: NodeIdx| -> (f64, f64) {
        let k = trains[i].node_path[state.positions[i].progress..]
            .iter()
            .position(|&x| x == n)
            .unwrap();
        let start = if k == 0 { 0.0 } else { sol.y[i][k - 1] };
        let end = if k == to_horizons[i] { f64::INFINITY } else { sol.y[i][k] };
        (start, end)
    };
    for (&n, pairs) in &sets.node_conflicts {
        if network.slots(n).finite().is_none() {
            continue;
        }
        for &(i, j) in pairs {
            // A train dwelling at the node holds priority over it.
            let dwell = |x: usize| {
                !state.positions[x].on_edge()
                    && trains[x].node_path[state.positions[x].progress] == n
            };
            let v = if dwell(i) {
                true
            } else if dwell(j) {
                false
            } else {
                let (_, ei) = claim(&sol, i, n);
                let (sj, _) = claim(&sol, j, n);
                ei <= sj + TIME_TOL
            };
            sol.z_node.insert((i, j, n), v);
        }
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{validate_solution, TrainPos};

    fn merge() -> (Network, Vec<TrainSpec>, SystemState) {
        let (net, trains) = fixtures::merge_corridor();
        let state = fixtures::at_origins(&trains);
        (net, trains, state)
    }

    fn node(net: &Network, id: &str) -> NodeIdx {
        net.node_idx(id).unwrap()
    }

    #[test]
    fn safe_state_examples() {
        let (net, trains, state) = merge();
        // Origins are one-slot nodes fully taken: not safe.
        assert!(!is_safe(&net, &trains, &state));
        let mut rolling = state.clone();
        rolling.positions[0].edge_fraction = 0.5;
        rolling.positions[0].slot = None;
        assert!(!is_safe(&net, &trains, &rolling));
        // T1 and T3 both parked at the two-slot station: no spare slot.
        let parked = SystemState {
            positions: vec![
                TrainPos { progress: 3, edge_fraction: 0.0, slot: Some(0), arrived: false },
                TrainPos { progress: 0, edge_fraction: 0.0, slot: Some(0), arrived: false },
                TrainPos { progress: 2, edge_fraction: 0.0, slot: Some(1), arrived: false },
            ],
        };
        assert!(!is_safe(&net, &trains, &parked));
    }

    #[test]
    fn safe_horizon_examples() {
        let (net, trains, state) = merge();
        // Terminals station/yard/open end: one occupant each, spare left.
        assert!(is_safe_horizon(&net, &trains, &state, &vec![3, 4, 6]));
        // The short horizons park T2 at one-slot n4 and stack the station.
        assert!(!is_safe_horizon(&net, &trains, &state, &vec![3, 2, 2]));
        // Two trains terminating at the two-slot yard leave no spare.
        assert!(!is_safe_horizon(&net, &trains, &state, &vec![3, 4, 2]));
    }

    #[test]
    fn compute_safe_horizon_on_merge_corridor() {
        let (net, trains, state) = merge();
        let r = compute_safe_horizon(0.0, &net, &trains, &state, &SolverConfig::default(), None)
            .unwrap();
        assert_eq!(r.horizons, vec![3, 4, 6]);
        let terminals: Vec<&str> = trains
            .iter()
            .zip(&r.horizons)
            .map(|(t, &f)| net.node_id(t.node_path[f]))
            .collect();
        assert_eq!(terminals, vec!["n5", "n8", "n0"]);
        let p = build_problem(0.0, &net, &trains, &state, &r.horizons).unwrap();
        assert!(validate_solution(&p, &r.witness).unwrap().is_empty());
    }

    #[test]
    fn single_train_safe_horizon_is_one_stage() {
        let (net, trains) = crate::network::load_network(
            r#"{
            "nodes": [{"id":"a","slots":1},{"id":"b","slots":2},{"id":"c","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"},
                      {"id":"bc","between":["b","c"],"kind":"single"}],
            "trains": [{"id":"t","path":["a","b","c"],"travel_min":[5.0,5.0]}]
        }"#,
        )
        .unwrap();
        let state = fixtures::at_origins(&trains);
        let r = compute_safe_horizon(0.0, &net, &trains, &state, &SolverConfig::default(), None)
            .unwrap();
        assert_eq!(r.horizons, vec![1]);
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn wedged_state_is_deadlocked() {
        let (net, trains) = fixtures::merge_corridor();
        let state = SystemState {
            positions: vec![
                TrainPos { progress: 3, edge_fraction: 0.0, slot: None, arrived: true },
                TrainPos { progress: 2, edge_fraction: 0.0, slot: Some(0), arrived: false },
                TrainPos { progress: 2, edge_fraction: 0.0, slot: Some(0), arrived: false },
            ],
        };
        assert!(detect_deadlock(0.0, &net, &trains, &state, &SolverConfig::default()).unwrap());
    }

    #[test]
    fn all_arrived_is_not_deadlocked() {
        let (net, trains) = crate::network::load_network(
            r#"{
            "nodes": [{"id":"a","slots":1},{"id":"b","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"}],
            "trains": [{"id":"t","path":["a","b"],"travel_min":[5.0]}]
        }"#,
        )
        .unwrap();
        let state = SystemState {
            positions: vec![TrainPos {
                progress: 1,
                edge_fraction: 0.0,
                slot: None,
                arrived: true,
            }],
        };
        assert!(!detect_deadlock(0.0, &net, &trains, &state, &SolverConfig::default()).unwrap());
    }

    #[test]
    fn non_regressiveness_examples() {
        let (net, trains, _) = merge();
        let prev = vec![node(&net, "n5"), node(&net, "n8"), node(&net, "n0")];
        assert!(is_non_regressive(&trains, &prev, &prev).unwrap());
        // T2 pulled back from the yard to the station: regression.
        let back = vec![node(&net, "n5"), node(&net, "n5"), node(&net, "n0")];
        assert!(!is_non_regressive(&trains, &prev, &back).unwrap());
        let off = vec![node(&net, "n7"), node(&net, "n8"), node(&net, "n0")];
        assert!(matches!(is_non_regressive(&trains, &off, &prev), Err(Error::NotOnPath)));
    }

    #[test]
    fn warm_horizon_identity_when_nothing_moved() {
        let (net, trains, state) = merge();
        let prev = vec![3, 4, 6];
        let f = warm_horizon(&net, &trains, &state, &prev, &state).unwrap();
        assert_eq!(f, prev);
    }

    #[test]
    fn warm_horizon_reindexes_after_advance() {
        let (net, trains, state) = merge();
        let prev = vec![3, 4, 6];
        let mut moved = state.clone();
        moved.positions[0].progress = 1; // T1 now dwells at n3
        let f = warm_horizon(&net, &trains, &state, &prev, &moved).unwrap();
        assert_eq!(f, vec![2, 4, 6]);
        assert!(is_safe_horizon(&net, &trains, &moved, &f));
        let prev_terms: Vec<NodeIdx> =
            trains.iter().zip(&prev).map(|(t, &h)| t.node_path[h]).collect();
        let new_terms: Vec<NodeIdx> = trains
            .iter()
            .zip(&f)
            .zip(&moved.positions)
            .map(|((t, &h), p)| t.node_path[p.progress + h])
            .collect();
        assert!(is_non_regressive(&trains, &prev_terms, &new_terms).unwrap());
    }

    #[test]
    fn trivial_policy_single_train() {
        let (net, trains) = crate::network::load_network(
            r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":2},{"id":"c","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"},
                      {"id":"bc","between":["b","c"],"kind":"single"}],
            "trains": [{"id":"t","path":["a","b","c"],"travel_min":[5.0,5.0]}]
        }"#,
        )
        .unwrap();
        let seq = trivial_policy(
            &net,
            &trains,
            &[net.node_idx("a").unwrap()],
            &[net.node_idx("b").unwrap()],
            1,
        )
        .unwrap();
        assert_eq!(seq.moves.len(), 1);
        assert_eq!(seq.moves[0].departures, vec![0.0]);
        assert!((seq.duration - 5.0).abs() < 1e-9);
    }

    #[test]
    fn trivial_policy_hands_over_when_node_fills() {
        // A moves into B's node and fills it; B must move next.
        let (net, trains) = crate::network::load_network(
            r#"{
            "nodes": [{"id":"p","slots":2},{"id":"q","slots":2},{"id":"r","slots":"inf"}],
            "edges": [{"id":"pq","between":["p","q"],"kind":"single"},
                      {"id":"qr","between":["q","r"],"kind":"single"}],
            "trains": [{"id":"A","path":["p","q"],"travel_min":[5.0]},
                       {"id":"B","path":["q","r"],"travel_min":[5.0]}]
        }"#,
        )
        .unwrap();
        let p = net.node_idx("p").unwrap();
        let q = net.node_idx("q").unwrap();
        let r = net.node_idx("r").unwrap();
        for seed in 0..8 {
            let seq = trivial_policy(&net, &trains, &[p, q], &[q, r], seed).unwrap();
            let order: Vec<TrainIdx> = seq.moves.iter().map(|m| m.train).collect();
            if order == vec![0, 1] {
                // A filled q, so B was forced to move immediately after.
                assert_eq!(seq.moves[1].departures[0], seq.moves[0].departures[0] + 5.0);
            } else {
                assert_eq!(order, vec![1, 0]);
            }
        }
    }

    #[test]
    fn trivial_policy_rejects_unsafe_boundary() {
        let (net, trains, _) = merge();
        // Both T1 and T3 sent to the two-slot station: no spare slot.
        let from = vec![node(&net, "n1"), node(&net, "n2"), node(&net, "n7")];
        let to = vec![node(&net, "n5"), node(&net, "n8"), node(&net, "n5")];
        assert!(matches!(
            trivial_policy(&net, &trains, &from, &to, 0),
            Err(Error::UnsafeBoundary(_))
        ));
    }

    #[test]
    fn extension_to_same_horizons_is_identity() {
        let (net, trains, state) = merge();
        let f = vec![3, 4, 6];
        let p = build_problem(0.0, &net, &trains, &state, &f).unwrap();
        let sol = solve(&p, &SolverConfig::default(), None, None).unwrap().incumbent.unwrap();
        let same = extend_to_horizon(&net, &trains, &state, &sol, &f, &f, 0).unwrap();
        assert_eq!(same, sol);
    }

    #[test]
    fn witness_extends_to_full_horizons() {
        let (net, trains, state) = merge();
        let r = compute_safe_horizon(0.0, &net, &trains, &state, &SolverConfig::default(), None)
            .unwrap();
        let full: HorizonVector =
            trains.iter().zip(&state.positions).map(|(t, p)| t.stages() - p.progress).collect();
        let extended =
            extend_to_horizon(&net, &trains, &state, &r.witness, &r.horizons, &full, 3).unwrap();
        let pf = build_problem(0.0, &net, &trains, &state, &full).unwrap();
        let v = validate_solution(&pf, &extended).unwrap();
        assert!(v.is_empty(), "extension validates at full horizons: {v:?}");
    }

    #[test]
    fn extension_rejects_unsafe_target() {
        let (net, trains, state) = merge();
        let r = compute_safe_horizon(0.0, &net, &trains, &state, &SolverConfig::default(), None)
            .unwrap();
        // Horizons parking T2 at one-slot n4 are not a safe target.
        let bad = vec![3, 2, 6];
        assert!(matches!(
            extend_to_horizon(&net, &trains, &state, &r.witness, &r.horizons, &bad, 0),
            Err(Error::NonMonotoneHorizons) | Err(Error::UnsafeBoundary(_))
        ));
    }
}
