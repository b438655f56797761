//! Construction of the finite-horizon disjunctive scheduling problem.
//!
//! A problem instance is built from a measured system state and a per-train
//! horizon vector. Continuous variables are departure times `y[i][k]`
//! (minutes, relative to the instant the problem is built); binaries order
//! conflicting transits over single/double edges, order conflicting node
//! visits, and choose a slot at every capacitated node a train touches.
//! Big-M rows deactivate the inequality a binary turns off.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeIdx, EdgeKind, Network, NodeIdx, TrainIdx, TrainSpec};
use crate::TIME_TOL;

// --- System state -----------------------------------------------------------

/// Measured position of one train.
///
/// `progress` is the index in the train's full node path of the last node it
/// visited. `edge_fraction` is how much of the edge leaving that node has
/// been covered; zero means the train is dwelling at the node, in `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPos {
    pub progress: usize,
    pub edge_fraction: f64,
    pub slot: Option<u32>,
    pub arrived: bool,
}

impl TrainPos {
    pub fn on_edge(&self) -> bool {
        self.edge_fraction > 0.0
    }
}

/// Measured state of the whole fleet, aligned with the train list.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub positions: Vec<TrainPos>,
}

impl SystemState {
    pub fn all_arrived(&self) -> bool {
        self.positions.iter().all(|p| p.arrived)
    }
}

/// Per-train horizon lengths, 0 for arrived trains.
pub type HorizonVector = Vec<usize>;

/// Remaining stages of a train from its measured position.
pub fn remaining_stages(train: &TrainSpec, pos: &TrainPos) -> usize {
    train.stages() - pos.progress
}

/// Check the physical invariants of a state against the network and fleet.
pub fn validate_state(network: &Network, trains: &[TrainSpec], state: &SystemState) -> Result<()> {
    if state.positions.len() != trains.len() {
        return Err(Error::InvalidState("state and fleet sizes differ".into()));
    }
    let mut node_occupants: BTreeMap<(NodeIdx, u32), TrainIdx> = BTreeMap::new();
    let mut edge_users: BTreeMap<EdgeIdx, Vec<(TrainIdx, (NodeIdx, NodeIdx))>> = BTreeMap::new();
    for (i, (train, pos)) in trains.iter().zip(&state.positions).enumerate() {
        if pos.progress > train.stages() {
            return Err(Error::InvalidState(format!("train {} progress beyond path", train.id)));
        }
        if !(0.0..1.0).contains(&pos.edge_fraction) {
            return Err(Error::InvalidState(format!("train {} edge fraction out of range", train.id)));
        }
        if pos.arrived {
            if pos.progress != train.stages() || pos.on_edge() || pos.slot.is_some() {
                return Err(Error::InvalidState(format!("train {} arrival flags inconsistent", train.id)));
            }
            continue;
        }
        if pos.progress == train.stages() && !pos.arrived {
            return Err(Error::InvalidState(format!("train {} at destination but not arrived", train.id)));
        }
        if pos.on_edge() {
            if pos.slot.is_some() {
                return Err(Error::InvalidState(format!("train {} on an edge holds a slot", train.id)));
            }
            let e = train.edge_path[pos.progress];
            let dir = (train.node_path[pos.progress], train.node_path[pos.progress + 1]);
            edge_users.entry(e).or_default().push((i, dir));
        } else {
            let slot = pos
                .slot
                .ok_or_else(|| Error::InvalidState(format!("train {} dwelling without a slot", train.id)))?;
            let node = train.node_path[pos.progress];
            if let Some(cap) = network.slots(node).finite() {
                if slot >= cap {
                    return Err(Error::InvalidState(format!("train {} slot beyond capacity", train.id)));
                }
            }
            if node_occupants.insert((node, slot), i).is_some() {
                return Err(Error::InvalidState(format!(
                    "two trains share node {} slot {}",
                    network.node_id(node),
                    slot
                )));
            }
        }
    }
    for (e, users) in &edge_users {
        let edge = &network.edges[*e];
        match edge.kind {
            EdgeKind::Single if users.len() > 1 => {
                return Err(Error::InvalidState(format!("single edge {} carries {} trains", edge.id, users.len())));
            }
            EdgeKind::Double => {
                if users.len() > 2 {
                    return Err(Error::InvalidState(format!("double edge {} carries {} trains", edge.id, users.len())));
                }
                if users.len() == 2 && users[0].1 == users[1].1 {
                    return Err(Error::InvalidState(format!(
                        "double edge {} carries two same-direction trains",
                        edge.id
                    )));
                }
            }
            _ => {}
        }
    }
    // Arrived trains at capacitated nodes still take room; counting them in
    // keeps dwell counts within capacity.
    let mut counts: BTreeMap<NodeIdx, u32> = BTreeMap::new();
    for (train, pos) in trains.iter().zip(&state.positions) {
        if !pos.on_edge() {
            let n = if pos.arrived { train.destination() } else { train.node_path[pos.progress] };
            *counts.entry(n).or_insert(0) += 1;
        }
    }
    for (n, c) in counts {
        if let Some(cap) = network.slots(n).finite() {
            if c > cap {
                return Err(Error::InvalidState(format!(
                    "node {} holds {} trains with {} slots",
                    network.node_id(n),
                    c,
                    cap
                )));
            }
        }
    }
    Ok(())
}

/// Check horizon bounds against a state.
pub fn validate_horizons(
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
) -> Result<()> {
    if horizons.len() != trains.len() {
        return Err(Error::InvalidState("horizon and fleet sizes differ".into()));
    }
    for (i, (&f, pos)) in horizons.iter().zip(&state.positions).enumerate() {
        if pos.arrived {
            if f != 0 {
                return Err(Error::InvalidState(format!("arrived train {i} with nonzero horizon")));
            }
        } else if f < 1 || f > remaining_stages(&trains[i], pos) {
            return Err(Error::InvalidState(format!("train {i} horizon {f} out of range")));
        }
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TrainStateJson {
    id: String,
    last_node: String,
    w: f64,
    slot: Option<u32>,
    arrived: bool,
}

#[derive(Serialize, Deserialize)]
struct StateJson {
    t: f64,
    trains: Vec<TrainStateJson>,
}

/// Serialize a state snapshot.
pub fn state_to_json(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
) -> String {
    let doc = StateJson {
        t,
        trains: trains
            .iter()
            .zip(&state.positions)
            .map(|(train, pos)| TrainStateJson {
                id: train.id.clone(),
                last_node: network
                    .node_id(if pos.arrived {
                        train.destination()
                    } else {
                        train.node_path[pos.progress]
                    })
                    .to_string(),
                w: pos.edge_fraction,
                slot: pos.slot,
                arrived: pos.arrived,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("state serializes")
}

/// Parse a state snapshot; returns the timestamp and the state aligned with
/// the fleet order.
pub fn state_from_json(
    text: &str,
    network: &Network,
    trains: &[TrainSpec],
) -> Result<(f64, SystemState)> {
    let doc: StateJson = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let mut positions = vec![None; trains.len()];
    for ts in &doc.trains {
        let i = trains
            .iter()
            .position(|t| t.id == ts.id)
            .ok_or_else(|| Error::Schema(format!("unknown train {}", ts.id)))?;
        let node = network
            .node_idx(&ts.last_node)
            .ok_or_else(|| Error::DanglingEndpoint(ts.last_node.clone()))?;
        let progress = trains[i].node_stage(node).map_err(|_| {
            Error::Schema(format!("node {} is not on the path of {}", ts.last_node, ts.id))
        })?;
        positions[i] = Some(TrainPos {
            progress,
            edge_fraction: ts.w,
            slot: ts.slot,
            arrived: ts.arrived,
        });
    }
    let positions: Vec<TrainPos> = positions
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or_else(|| Error::Schema(format!("missing train {}", trains[i].id))))
        .collect::<Result<_>>()?;
    let state = SystemState { positions };
    validate_state(network, trains, &state)?;
    Ok((doc.t, state))
}

// --- Conflict sets ------------------------------------------------------------

/// Ordered conflicting train pairs per edge and per node, lower index first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConflictSets {
    pub edge_conflicts: BTreeMap<EdgeIdx, Vec<(TrainIdx, TrainIdx)>>,
    pub node_conflicts: BTreeMap<NodeIdx, Vec<(TrainIdx, TrainIdx)>>,
}

struct Traversal {
    /// Edge traversals within the horizon: local stage, oriented endpoints.
    edges: BTreeMap<EdgeIdx, (usize, (NodeIdx, NodeIdx))>,
    /// Node visits within the horizon: local node stage.
    nodes: BTreeMap<NodeIdx, usize>,
}

fn traversal(train: &TrainSpec, pos: &TrainPos, f: usize) -> Traversal {
    let mut edges = BTreeMap::new();
    let mut nodes = BTreeMap::new();
    for s in 0..f {
        let g = pos.progress + s;
        edges.insert(train.edge_path[g], (s, (train.node_path[g], train.node_path[g + 1])));
    }
    // A train in transit has already left the node behind it; that node no
    // longer constrains anyone.
    let first = if pos.on_edge() { 1 } else { 0 };
    for s in first..=f {
        nodes.insert(train.node_path[pos.progress + s], s);
    }
    Traversal { edges, nodes }
}

/// Collect every conflicting pair within the given horizons.
pub fn conflict_sets(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
) -> ConflictSets {
    conflict_sets_among(network, trains, state, horizons, None)
}

fn conflict_sets_among(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
    include: Option<&[bool]>,
) -> ConflictSets {
    let included = |i: usize| include.map(|m| m[i]).unwrap_or(true);
    let traversals: Vec<Option<Traversal>> = trains
        .iter()
        .zip(&state.positions)
        .zip(horizons)
        .enumerate()
        .map(|(i, ((t, p), &f))| {
            if p.arrived || !included(i) {
                None
            } else {
                Some(traversal(t, p, f))
            }
        })
        .collect();
    let mut sets = ConflictSets::default();
    for i in 0..trains.len() {
        let Some(ti) = &traversals[i] else { continue };
        for j in i + 1..trains.len() {
            let Some(tj) = &traversals[j] else { continue };
            for (&e, &(_, dir_i)) in &ti.edges {
                if let Some(&(_, dir_j)) = tj.edges.get(&e) {
                    let same_dir = dir_i == dir_j;
                    let conflicting = match network.edges[e].kind {
                        EdgeKind::Single => true,
                        EdgeKind::Double => same_dir,
                    };
                    if conflicting {
                        sets.edge_conflicts.entry(e).or_default().push((i, j));
                    }
                }
            }
            for &n in ti.nodes.keys() {
                if tj.nodes.contains_key(&n) {
                    sets.node_conflicts.entry(n).or_default().push((i, j));
                }
            }
        }
    }
    sets
}

// --- Problem ------------------------------------------------------------------

/// Key of a binary decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinKey {
    /// 1 iff the first train transits the edge before the second.
    Edge(TrainIdx, TrainIdx, EdgeIdx),
    /// 1 iff the first train transits the node before the second.
    Node(TrainIdx, TrainIdx, NodeIdx),
    /// 1 iff the train uses this slot at the node.
    Slot(TrainIdx, NodeIdx, u32),
}

pub type BinId = usize;

#[derive(Debug, Clone)]
pub struct BinVar {
    pub key: BinKey,
    pub fixed: Option<bool>,
}

/// Continuous variable reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRef {
    /// Departure of a train from its k-th horizon node.
    Y(TrainIdx, usize),
    /// Timetable deviation slack.
    Dev(usize),
}

/// A big-M gate: the row is enforced only while `bin == active_when`.
#[derive(Debug, Clone, Copy)]
pub struct Gate {
    pub bin: BinId,
    pub active_when: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Sequential,
    EdgeOrder,
    NodeOrder,
    Deviation,
}

/// One inequality `lhs ≥ rhs + c`, deactivated by big-M terms while any gate
/// binary sits on its inactive side. A missing side is the constant zero;
/// a row with both sides missing and `c > 0` forbids its gate combination.
#[derive(Debug, Clone)]
pub struct Row {
    pub name: String,
    pub kind: RowKind,
    pub to: Option<VarRef>,
    pub from: Option<VarRef>,
    pub c: f64,
    pub gates: Vec<Gate>,
}

/// Exactly-one slot choice for a train at a node.
#[derive(Debug, Clone)]
pub struct SlotChoice {
    pub train: TrainIdx,
    pub node: NodeIdx,
    pub bins: Vec<BinId>,
}

/// Horizon-restricted route of one active train.
#[derive(Debug, Clone)]
pub struct Itinerary {
    /// Nodes 0..=f of the horizon, `nodes[0]` being the last visited node.
    pub nodes: Vec<NodeIdx>,
    pub edges: Vec<EdgeIdx>,
    /// Effective durations; the first is scaled by the fraction left.
    pub tau: Vec<f64>,
    /// Oriented endpoints per traversed edge.
    pub dirs: Vec<(NodeIdx, NodeIdx)>,
    pub on_edge: bool,
}

/// Timetable adherence extension: one slack per referenced stage.
#[derive(Debug, Clone)]
pub struct DeviationExt {
    /// (train, local stage, reference departure time).
    pub refs: Vec<(TrainIdx, usize, f64)>,
}

/// One fully materialized scheduling problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub t: f64,
    pub state: SystemState,
    pub horizons: HorizonVector,
    pub conflicts: ConflictSets,
    pub itineraries: Vec<Option<Itinerary>>,
    pub train_ids: Vec<String>,
    pub node_ids: Vec<String>,
    pub edge_ids: Vec<String>,
    pub bins: Vec<BinVar>,
    pub bin_lookup: BTreeMap<BinKey, BinId>,
    pub rows: Vec<Row>,
    pub slot_choices: Vec<SlotChoice>,
    /// Trains whose first departure is pinned to zero (already in transit).
    pub y_fixed_zero: Vec<TrainIdx>,
    /// Node visits per capacitated node: (train, local node stage).
    pub visits: BTreeMap<NodeIdx, Vec<(TrainIdx, usize)>>,
    /// Slots unavailable because an arrived train occupies them.
    pub blocked_slots: BTreeMap<NodeIdx, Vec<u32>>,
    /// Slot capacity of each capacitated node that carries slot variables.
    pub slot_capacity: BTreeMap<NodeIdx, u32>,
    pub big_m: f64,
    /// Objective coefficients over continuous variables.
    pub objective: Vec<(VarRef, f64)>,
    pub deviation: Option<DeviationExt>,
}

impl Problem {
    pub fn horizon_of(&self, i: TrainIdx) -> usize {
        self.horizons[i]
    }

    pub fn is_active(&self, i: TrainIdx) -> bool {
        self.itineraries[i].is_some()
    }

    pub fn n_trains(&self) -> usize {
        self.itineraries.len()
    }

    /// Number of unfixed binary variables.
    pub fn free_bins(&self) -> usize {
        self.bins.iter().filter(|b| b.fixed.is_none()).count()
    }

    pub fn bin(&self, key: BinKey) -> Option<BinId> {
        self.bin_lookup.get(&key).copied()
    }

    /// Claim window of a visit: a train holds a node slot from the moment it
    /// departs toward the node until it departs from it (or forever, at its
    /// horizon terminal).
    pub fn claim_window(&self, solution_y: &[Vec<f64>], i: TrainIdx, stage: usize) -> (f64, f64) {
        let f = self.horizons[i];
        let start = if stage == 0 { 0.0 } else { solution_y[i][stage - 1] };
        let end = if stage == f { f64::INFINITY } else { solution_y[i][stage] };
        (start, end)
    }

    /// Objective value of a solution.
    pub fn objective_value(&self, sol: &Solution) -> f64 {
        self.objective
            .iter()
            .map(|(v, c)| match *v {
                VarRef::Y(i, k) => c * sol.y[i][k],
                VarRef::Dev(d) => c * sol.dev[d],
            })
            .sum()
    }
}

/// Values for every variable of a problem.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Departure times per train and local stage.
    pub y: Vec<Vec<f64>>,
    pub z_edge: BTreeMap<(TrainIdx, TrainIdx, EdgeIdx), bool>,
    pub z_node: BTreeMap<(TrainIdx, TrainIdx, NodeIdx), bool>,
    /// Chosen slot per (train, capacitated node).
    pub z_slot: BTreeMap<(TrainIdx, NodeIdx), u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dev: Vec<f64>,
}

/// Partial variable assignment used for seeding or forcing.
#[derive(Debug, Clone, Default)]
pub struct PartialAssignment {
    pub bins: BTreeMap<BinKey, bool>,
    pub y_hints: BTreeMap<(TrainIdx, usize), f64>,
}

impl PartialAssignment {
    /// All binary values of a full solution, keyed for another problem.
    pub fn from_solution(problem: &Problem, sol: &Solution) -> PartialAssignment {
        let mut bins = BTreeMap::new();
        for (&(i, j, e), &v) in &sol.z_edge {
            bins.insert(BinKey::Edge(i, j, e), v);
        }
        for (&(i, j, n), &v) in &sol.z_node {
            bins.insert(BinKey::Node(i, j, n), v);
        }
        for (&(i, n), &l) in &sol.z_slot {
            if let Some(&cap) = problem.slot_capacity.get(&n) {
                for s in 0..cap {
                    bins.insert(BinKey::Slot(i, n, s), s == l);
                }
            }
        }
        let mut y_hints = BTreeMap::new();
        for (i, ys) in sol.y.iter().enumerate() {
            for (k, &v) in ys.iter().enumerate() {
                y_hints.insert((i, k), v);
            }
        }
        PartialAssignment { bins, y_hints }
    }
}

/// Slots pinned down by arrived trains at capacitated terminals. Dwelling
/// trains keep their measured slots, so the blocked index is chosen among
/// the rest, highest first, deterministically.
pub fn arrived_blocked_slots(
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
) -> Result<BTreeMap<NodeIdx, Vec<u32>>> {
    let mut blocked_slots: BTreeMap<NodeIdx, Vec<u32>> = BTreeMap::new();
    let mut taken: BTreeMap<NodeIdx, Vec<u32>> = BTreeMap::new();
    for (train, pos) in trains.iter().zip(&state.positions) {
        if !pos.arrived && !pos.on_edge() {
            taken.entry(train.node_path[pos.progress]).or_default().push(pos.slot.unwrap());
        }
    }
    for (train, pos) in trains.iter().zip(&state.positions) {
        if pos.arrived {
            let n = train.destination();
            if let Some(cap) = network.slots(n).finite() {
                let used = taken.entry(n).or_default();
                let blocked = blocked_slots.entry(n).or_default();
                let free = (0..cap).rev().find(|s| !used.contains(s) && !blocked.contains(s));
                let slot = free.ok_or_else(|| {
                    Error::InvalidState(format!(
                        "no slot left for arrived train at {}",
                        network.node_id(n)
                    ))
                })?;
                blocked.push(slot);
            }
        }
    }
    Ok(blocked_slots)
}

/// Upper bound on any departure produced by moving trains one at a time:
/// the total of all horizon travel times plus one worst edge per train.
pub fn big_m_value(problem: &Problem) -> f64 {
    let mut total = 0.0;
    let mut max_tau: f64 = 0.0;
    let mut n_active = 0usize;
    for it in problem.itineraries.iter().flatten() {
        n_active += 1;
        for &d in &it.tau {
            total += d;
            max_tau = max_tau.max(d);
        }
    }
    total + n_active as f64 * max_tau
}

/// Build the scheduling problem for a state and horizon vector.
pub fn build_problem(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
) -> Result<Problem> {
    build_problem_subset(t, network, trains, state, horizons, None)
}

/// Build the problem over a subset of the fleet. Excluded trains are left
/// out entirely: the subproblem is unaware of them.
pub fn build_problem_subset(
    t: f64,
    network: &Network,
    trains: &[TrainSpec],
    state: &SystemState,
    horizons: &HorizonVector,
    include: Option<&[bool]>,
) -> Result<Problem> {
    validate_state(network, trains, state)?;
    validate_horizons(trains, state, horizons)?;
    let included = |i: usize| include.map(|m| m[i]).unwrap_or(true);

    let itineraries: Vec<Option<Itinerary>> = trains
        .iter()
        .zip(&state.positions)
        .zip(horizons)
        .enumerate()
        .map(|(i, ((train, pos), &f))| {
            if pos.arrived || !included(i) {
                return None;
            }
            let g0 = pos.progress;
            let nodes = train.node_path[g0..=g0 + f].to_vec();
            let edges = train.edge_path[g0..g0 + f].to_vec();
            let mut tau: Vec<f64> = train.travel_times[g0..g0 + f].to_vec();
            if pos.on_edge() && f > 0 {
                tau[0] *= 1.0 - pos.edge_fraction;
            }
            let dirs =
                (0..f).map(|s| (train.node_path[g0 + s], train.node_path[g0 + s + 1])).collect();
            Some(Itinerary { nodes, edges, tau, dirs, on_edge: pos.on_edge() })
        })
        .collect();

    let conflicts = conflict_sets_among(network, trains, state, horizons, include);

    // Visits at capacitated nodes, in deterministic order.
    let mut visits: BTreeMap<NodeIdx, Vec<(TrainIdx, usize)>> = BTreeMap::new();
    for (i, it) in itineraries.iter().enumerate() {
        let Some(it) = it else { continue };
        let first = if it.on_edge { 1 } else { 0 };
        for (s, &n) in it.nodes.iter().enumerate().skip(first) {
            if network.slots(n).finite().is_some() {
                visits.entry(n).or_default().push((i, s));
            }
        }
    }
    visits.retain(|_, v| !v.is_empty());

    // Arrived trains keep blocking their terminal slots even in subproblems;
    // they are no longer decisions, just occupied track.
    let blocked_slots = arrived_blocked_slots(network, trains, state)?;

    let mut bins: Vec<BinVar> = Vec::new();
    let mut bin_lookup: BTreeMap<BinKey, BinId> = BTreeMap::new();
    let mut add_bin = |bins: &mut Vec<BinVar>, lookup: &mut BTreeMap<BinKey, BinId>, key: BinKey| -> BinId {
        *lookup.entry(key).or_insert_with(|| {
            bins.push(BinVar { key, fixed: None });
            bins.len() - 1
        })
    };

    // Edge ordering binaries.
    for (&e, pairs) in &conflicts.edge_conflicts {
        for &(i, j) in pairs {
            add_bin(&mut bins, &mut bin_lookup, BinKey::Edge(i, j, e));
        }
    }
    // Node ordering and slot binaries, capacitated nodes only.
    let mut slot_capacity: BTreeMap<NodeIdx, u32> = BTreeMap::new();
    for (&n, nodes_visits) in &visits {
        let cap = network.slots(n).finite().expect("visits hold capacitated nodes");
        slot_capacity.insert(n, cap);
        if let Some(pairs) = conflicts.node_conflicts.get(&n) {
            for &(i, j) in pairs {
                add_bin(&mut bins, &mut bin_lookup, BinKey::Node(i, j, n));
            }
        }
        for &(i, _) in nodes_visits {
            for l in 0..cap {
                add_bin(&mut bins, &mut bin_lookup, BinKey::Slot(i, n, l));
            }
        }
    }

    let fix = |bins: &mut Vec<BinVar>, id: BinId, value: bool| -> Result<()> {
        match bins[id].fixed {
            Some(v) if v != value => Err(Error::InvalidState(format!(
                "contradictory fixings for {:?}",
                bins[id].key
            ))),
            _ => {
                bins[id].fixed = Some(value);
                Ok(())
            }
        }
    };

    let mut rows: Vec<Row> = Vec::new();
    let mut y_fixed_zero: Vec<TrainIdx> = Vec::new();

    // Transit sequentiality along each itinerary.
    for (i, it) in itineraries.iter().enumerate() {
        let Some(it) = it else { continue };
        for s in 1..it.edges.len() {
            rows.push(Row {
                name: format!("seq_{}_{}", trains[i].id, s),
                kind: RowKind::Sequential,
                to: Some(VarRef::Y(i, s)),
                from: Some(VarRef::Y(i, s - 1)),
                c: it.tau[s - 1],
                gates: vec![],
            });
        }
        if it.on_edge {
            y_fixed_zero.push(i);
        }
    }

    // Edge conflicts: one transit fully clears the edge before the other
    // starts, in the order the binary selects.
    for (&e, pairs) in &conflicts.edge_conflicts {
        for &(i, j) in pairs {
            let z = bin_lookup[&BinKey::Edge(i, j, e)];
            let iti = itineraries[i].as_ref().unwrap();
            let itj = itineraries[j].as_ref().unwrap();
            let ki = iti.edges.iter().position(|&x| x == e).unwrap();
            let kj = itj.edges.iter().position(|&x| x == e).unwrap();
            let eid = &network.edges[e].id;
            rows.push(Row {
                name: format!("edge_{}_{}_{}_a", trains[i].id, trains[j].id, eid),
                kind: RowKind::EdgeOrder,
                to: Some(VarRef::Y(i, ki)),
                from: Some(VarRef::Y(j, kj)),
                c: itj.tau[kj],
                gates: vec![Gate { bin: z, active_when: false }],
            });
            rows.push(Row {
                name: format!("edge_{}_{}_{}_b", trains[i].id, trains[j].id, eid),
                kind: RowKind::EdgeOrder,
                to: Some(VarRef::Y(j, kj)),
                from: Some(VarRef::Y(i, ki)),
                c: iti.tau[ki],
                gates: vec![Gate { bin: z, active_when: true }],
            });
            // A train already rolling on the edge goes first.
            if iti.on_edge && ki == 0 {
                fix(&mut bins, z, true)?;
            }
            if itj.on_edge && kj == 0 {
                fix(&mut bins, z, false)?;
            }
        }
    }

    // Node conflicts: per slot, if both trains take it, the later one may
    // depart toward the node only once the earlier one has left it.
    for (&n, pairs) in &conflicts.node_conflicts {
        let Some(&cap) = slot_capacity.get(&n) else { continue };
        let nid = &network.nodes[n].id;
        for &(i, j) in pairs {
            let zn = bin_lookup[&BinKey::Node(i, j, n)];
            let ki = itineraries[i].as_ref().unwrap().nodes.iter().position(|&x| x == n).unwrap();
            let kj = itineraries[j].as_ref().unwrap().nodes.iter().position(|&x| x == n).unwrap();
            let fi = horizons[i];
            let fj = horizons[j];
            for l in 0..cap {
                let zi = bin_lookup[&BinKey::Slot(i, n, l)];
                let zj = bin_lookup[&BinKey::Slot(j, n, l)];
                let shared = |ord_when: bool| {
                    vec![
                        Gate { bin: zn, active_when: ord_when },
                        Gate { bin: zi, active_when: true },
                        Gate { bin: zj, active_when: true },
                    ]
                };
                // i first: j departs toward n after i departs from n.
                let (to_a, from_a, c_a) = if ki == fi || kj == 0 {
                    (None, None, 1.0)
                } else {
                    (Some(VarRef::Y(j, kj - 1)), Some(VarRef::Y(i, ki)), 0.0)
                };
                rows.push(Row {
                    name: format!("node_{}_{}_{}_{}_a", trains[i].id, trains[j].id, nid, l),
                    kind: RowKind::NodeOrder,
                    to: to_a,
                    from: from_a,
                    c: c_a,
                    gates: shared(true),
                });
                // j first.
                let (to_b, from_b, c_b) = if kj == fj || ki == 0 {
                    (None, None, 1.0)
                } else {
                    (Some(VarRef::Y(i, ki - 1)), Some(VarRef::Y(j, kj)), 0.0)
                };
                rows.push(Row {
                    name: format!("node_{}_{}_{}_{}_b", trains[i].id, trains[j].id, nid, l),
                    kind: RowKind::NodeOrder,
                    to: to_b,
                    from: from_b,
                    c: c_b,
                    gates: shared(false),
                });
            }
            // A train dwelling at the node transited it first.
            if ki == 0 {
                fix(&mut bins, zn, true)?;
            } else if kj == 0 {
                fix(&mut bins, zn, false)?;
            }
        }
    }

    // Slot choice per visit, measured occupations pinned, arrived blocked.
    let mut slot_choices = Vec::new();
    for (&n, nodes_visits) in &visits {
        let cap = slot_capacity[&n];
        let blocked = blocked_slots.get(&n).cloned().unwrap_or_default();
        for &(i, s) in nodes_visits {
            let choice: Vec<BinId> = (0..cap).map(|l| bin_lookup[&BinKey::Slot(i, n, l)]).collect();
            for &b in &blocked {
                fix(&mut bins, choice[b as usize], false)?;
            }
            if s == 0 {
                let measured = state.positions[i].slot.unwrap();
                fix(&mut bins, choice[measured as usize], true)?;
                for l in 0..cap {
                    if l != measured {
                        fix(&mut bins, choice[l as usize], false)?;
                    }
                }
            }
            slot_choices.push(SlotChoice { train: i, node: n, bins: choice });
        }
    }

    let objective = itineraries
        .iter()
        .enumerate()
        .filter_map(|(i, it)| it.as_ref().map(|_| (VarRef::Y(i, horizons[i] - 1), 1.0)))
        .collect();

    let mut problem = Problem {
        t,
        state: state.clone(),
        horizons: horizons.clone(),
        conflicts,
        itineraries,
        train_ids: trains.iter().map(|t| t.id.clone()).collect(),
        node_ids: network.nodes.iter().map(|n| n.id.clone()).collect(),
        edge_ids: network.edges.iter().map(|e| e.id.clone()).collect(),
        bins,
        bin_lookup,
        rows,
        slot_choices,
        y_fixed_zero,
        visits,
        blocked_slots,
        slot_capacity,
        big_m: 0.0,
        objective,
        deviation: None,
    };
    problem.big_m = big_m_value(&problem);
    Ok(problem)
}

/// Add timetable-deviation slacks `|y - ref| <= dev` with unit objective
/// weight on every slack.
pub fn add_timetable_deviation(
    mut problem: Problem,
    refs: &[(TrainIdx, usize, f64)],
) -> Result<Problem> {
    for (d, &(i, k, r)) in refs.iter().enumerate() {
        if i >= problem.n_trains() || !problem.is_active(i) || k >= problem.horizons[i] {
            return Err(Error::UnknownStage);
        }
        problem.rows.push(Row {
            name: format!("dev_{}_{}_{}_lo", d, problem.train_ids[i], k),
            kind: RowKind::Deviation,
            to: Some(VarRef::Dev(d)),
            from: Some(VarRef::Y(i, k)),
            c: -r,
            gates: vec![],
        });
        problem.objective.push((VarRef::Dev(d), 1.0));
    }
    problem.deviation = Some(DeviationExt { refs: refs.to_vec() });
    Ok(problem)
}

// --- Validation ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: String,
    pub residual: f64,
}

fn value_of(problem: &Problem, sol: &Solution, v: VarRef) -> f64 {
    match v {
        VarRef::Y(i, k) => sol.y[i][k],
        VarRef::Dev(d) => sol.dev[d],
    }
}

fn bin_value(problem: &Problem, sol: &Solution, id: BinId) -> Result<bool> {
    let key = problem.bins[id].key;
    match key {
        BinKey::Edge(i, j, e) => sol
            .z_edge
            .get(&(i, j, e))
            .copied()
            .ok_or_else(|| Error::VariableMismatch(format!("missing {:?}", key))),
        BinKey::Node(i, j, n) => sol
            .z_node
            .get(&(i, j, n))
            .copied()
            .ok_or_else(|| Error::VariableMismatch(format!("missing {:?}", key))),
        BinKey::Slot(i, n, l) => {
            let chosen = sol
                .z_slot
                .get(&(i, n))
                .copied()
                .ok_or_else(|| Error::VariableMismatch(format!("missing {:?}", key)))?;
            Ok(chosen == l)
        }
    }
}

/// Check every constraint of a problem against a solution. Empty result
/// means the solution is feasible within tolerance.
pub fn validate_solution(problem: &Problem, sol: &Solution) -> Result<Vec<Violation>> {
    if sol.y.len() != problem.n_trains() {
        return Err(Error::VariableMismatch("train count differs".into()));
    }
    for (i, it) in problem.itineraries.iter().enumerate() {
        let want = it.as_ref().map(|_| problem.horizons[i]).unwrap_or(0);
        if sol.y[i].len() != want {
            return Err(Error::VariableMismatch(format!(
                "train {} has {} departures, expected {}",
                problem.train_ids[i],
                sol.y[i].len(),
                want
            )));
        }
    }
    if let Some(dev) = &problem.deviation {
        if sol.dev.len() != dev.refs.len() {
            return Err(Error::VariableMismatch("deviation slack count differs".into()));
        }
    }
    let mut violations = Vec::new();
    let mut push = |name: &str, residual: f64| {
        if residual < -TIME_TOL {
            violations.push(Violation { constraint: name.to_string(), residual });
        }
    };
    // Nonnegative departures, pinned initial departures.
    for (i, ys) in sol.y.iter().enumerate() {
        for (k, &v) in ys.iter().enumerate() {
            push(&format!("bound_{}_{}", problem.train_ids[i], k), v);
        }
        if problem.y_fixed_zero.contains(&i) && !ys.is_empty() {
            push(&format!("init_{}", problem.train_ids[i]), -ys[0].abs());
        }
    }
    for row in &problem.rows {
        let mut active = true;
        for g in &row.gates {
            if bin_value(problem, sol, g.bin)? != g.active_when {
                active = false;
                break;
            }
        }
        if !active {
            continue;
        }
        let lhs = row.to.map(|v| value_of(problem, sol, v)).unwrap_or(0.0);
        let rhs = row.from.map(|v| value_of(problem, sol, v)).unwrap_or(0.0) + row.c;
        push(&row.name, lhs - rhs);
    }
    // Upper side of each deviation bound.
    if let Some(devext) = &problem.deviation {
        for (d, &(i, k, r)) in devext.refs.iter().enumerate() {
            push(&format!("dev_{}_hi", d), sol.dev[d] - (r - sol.y[i][k]));
            push(&format!("dev_{}_pos", d), sol.dev[d]);
        }
    }
    // Slot choices: in range, not blocked, consistent with fixes.
    for sc in &problem.slot_choices {
        let chosen = sol
            .z_slot
            .get(&(sc.train, sc.node))
            .copied()
            .ok_or_else(|| Error::VariableMismatch(format!("missing slot for train {} node {}", sc.train, sc.node)))?;
        if chosen as usize >= sc.bins.len() {
            return Err(Error::VariableMismatch("slot index beyond capacity".into()));
        }
    }
    for (id, bv) in problem.bins.iter().enumerate() {
        if let Some(fixed) = bv.fixed {
            if bin_value(problem, sol, id)? != fixed {
                violations.push(Violation {
                    constraint: format!("fix_{:?}", bv.key),
                    residual: -1.0,
                });
            }
        }
    }
    Ok(violations)
}

// --- Shifting ------------------------------------------------------------------

/// Translate a schedule `delta_t` minutes into the future: completed stages
/// are dropped, an underway stage becomes the pinned zero departure of its
/// train, pending departures shift down by `delta_t`. Order binaries are
/// re-pinned to the new frame's initial conditions: a train now dwelling at
/// a node or rolling on an edge holds priority there.
pub fn shift_solution(problem: &Problem, sol: &Solution, delta_t: f64) -> Result<Solution> {
    if delta_t < 0.0 {
        return Err(Error::NegativeTime);
    }
    let mut shifted = Solution {
        y: Vec::with_capacity(sol.y.len()),
        z_edge: sol.z_edge.clone(),
        z_node: sol.z_node.clone(),
        z_slot: sol.z_slot.clone(),
        dev: Vec::new(),
    };
    // Where each train sits at delta_t: Ok(node) when dwelling, Err(edge)
    // when rolling.
    let mut situation: Vec<Option<std::result::Result<NodeIdx, EdgeIdx>>> =
        vec![None; sol.y.len()];
    for (i, ys) in sol.y.iter().enumerate() {
        let Some(it) = &problem.itineraries[i] else {
            shifted.y.push(Vec::new());
            continue;
        };
        let mut out = Vec::new();
        let mut past_done = true;
        for (k, &y) in ys.iter().enumerate() {
            let arrives = y + it.tau[k];
            if arrives <= delta_t + TIME_TOL {
                if !past_done {
                    return Err(Error::NegativeTime);
                }
                continue;
            }
            if y < delta_t {
                // Underway: becomes the in-transit stage with departure zero.
                if !past_done {
                    return Err(Error::NegativeTime);
                }
                out.push(0.0);
                situation[i] = Some(Err(it.edges[k]));
            } else {
                if past_done && situation[i].is_none() {
                    situation[i] = Some(Ok(it.nodes[k]));
                }
                out.push(y - delta_t);
            }
            past_done = false;
        }
        if situation[i].is_none() {
            // Every stage done: parked at the horizon terminal.
            situation[i] = Some(Ok(*it.nodes.last().unwrap()));
        }
        shifted.y.push(out);
    }
    for (&(i, j, e), v) in shifted.z_edge.iter_mut() {
        if situation[i] == Some(Err(e)) {
            *v = true;
        } else if situation[j] == Some(Err(e)) {
            *v = false;
        }
    }
    for (&(i, j, n), v) in shifted.z_node.iter_mut() {
        if situation[i] == Some(Ok(n)) {
            *v = true;
        } else if situation[j] == Some(Ok(n)) {
            *v = false;
        }
    }
    Ok(shifted)
}

// --- LP export ------------------------------------------------------------------

fn lp_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

fn fmt_num(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{}", x)
    }
}

/// Emit the problem in LP text format with deterministic variable names.
pub fn export_lp(problem: &Problem) -> String {
    let y_name =
        |i: TrainIdx, k: usize| format!("y_{}_{}", lp_name(&problem.train_ids[i]), k);
    let bin_name = |key: BinKey| match key {
        BinKey::Edge(i, j, e) => format!(
            "ze_{}_{}_{}",
            lp_name(&problem.train_ids[i]),
            lp_name(&problem.train_ids[j]),
            lp_name(&problem.edge_ids[e])
        ),
        BinKey::Node(i, j, n) => format!(
            "zn_{}_{}_{}",
            lp_name(&problem.train_ids[i]),
            lp_name(&problem.train_ids[j]),
            lp_name(&problem.node_ids[n])
        ),
        BinKey::Slot(i, n, l) => format!(
            "zs_{}_{}_{}",
            lp_name(&problem.train_ids[i]),
            lp_name(&problem.node_ids[n]),
            l
        ),
    };
    let var_name = |v: VarRef| match v {
        VarRef::Y(i, k) => y_name(i, k),
        VarRef::Dev(d) => format!("ydev_{}", d),
    };
    let m = problem.big_m;
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    for (idx, (v, c)) in problem.objective.iter().enumerate() {
        if idx > 0 || *c < 0.0 {
            out.push_str(if *c >= 0.0 { " +" } else { " -" });
        } else {
            out.push(' ');
        }
        let a = c.abs();
        if (a - 1.0).abs() > 1e-12 {
            out.push_str(&format!("{} ", fmt_num(a)));
        }
        out.push_str(&var_name(*v));
    }
    out.push_str("\nSubject To\n");
    let mut emit_terms = |out: &mut String, terms: &[(String, f64)], op: &str, rhs: f64| {
        let mut first = true;
        for (name, c) in terms {
            if *c == 0.0 {
                continue;
            }
            if first && *c > 0.0 {
                out.push(' ');
            } else {
                out.push_str(if *c >= 0.0 { " + " } else { " - " });
            }
            let a = c.abs();
            if (a - 1.0).abs() > 1e-12 {
                out.push_str(&format!("{} ", fmt_num(a)));
            }
            out.push_str(name);
            first = false;
        }
        out.push_str(&format!(" {} {}\n", op, fmt_num(rhs)));
    };
    for row in &problem.rows {
        let mut terms: Vec<(String, f64)> = Vec::new();
        if let Some(v) = row.to {
            terms.push((var_name(v), 1.0));
        }
        if let Some(v) = row.from {
            terms.push((var_name(v), -1.0));
        }
        let mut rhs = row.c;
        for g in &row.gates {
            let name = bin_name(problem.bins[g.bin].key);
            if g.active_when {
                terms.push((name, -m));
                rhs -= m;
            } else {
                terms.push((name, m));
            }
        }
        out.push_str(&format!(" {}:", lp_name(&row.name)));
        emit_terms(&mut out, &terms, ">=", rhs);
    }
    if let Some(devext) = &problem.deviation {
        for (d, &(i, k, r)) in devext.refs.iter().enumerate() {
            let terms = vec![(format!("ydev_{}", d), 1.0), (y_name(i, k), 1.0)];
            out.push_str(&format!(" dev_{}_hi:", d));
            emit_terms(&mut out, &terms, ">=", r);
        }
    }
    for sc in &problem.slot_choices {
        let terms: Vec<(String, f64)> =
            sc.bins.iter().map(|&b| (bin_name(problem.bins[b].key), 1.0)).collect();
        out.push_str(&format!(
            " slot_{}_{}:",
            lp_name(&problem.train_ids[sc.train]),
            lp_name(&problem.node_ids[sc.node])
        ));
        emit_terms(&mut out, &terms, "=", 1.0);
    }
    out.push_str("Bounds\n");
    for i in &problem.y_fixed_zero {
        out.push_str(&format!(" {} = 0\n", y_name(*i, 0)));
    }
    for bv in &problem.bins {
        if let Some(v) = bv.fixed {
            out.push_str(&format!(" {} = {}\n", bin_name(bv.key), if v { 1 } else { 0 }));
        }
    }
    out.push_str("Binary\n");
    for bv in &problem.bins {
        out.push_str(&format!(" {}\n", bin_name(bv.key)));
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn merge_setup() -> (Network, Vec<TrainSpec>, SystemState) {
        let (net, trains) = fixtures::merge_corridor();
        let state = fixtures::at_origins(&trains);
        (net, trains, state)
    }

    #[test]
    fn conflict_sets_on_full_horizons() {
        let (net, trains, state) = merge_setup();
        let horizons = vec![3, 4, 6];
        let sets = conflict_sets(&net, &trains, &state, &horizons);
        let e34 = net.edge_idx("e3-4").unwrap();
        let pairs = &sets.edge_conflicts[&e34];
        assert!(pairs.contains(&(0, 1)));
        assert!(pairs.contains(&(0, 2)));
        assert!(pairs.contains(&(1, 2)));
        let e45 = net.edge_idx("e4-5").unwrap();
        assert!(sets.edge_conflicts[&e45].contains(&(0, 2)));
        assert!(sets.edge_conflicts[&e45].contains(&(1, 2)));
    }

    #[test]
    fn disjoint_paths_have_no_conflicts() {
        let doc = r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":"inf"},
                      {"id":"c","slots":2},{"id":"d","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"},
                      {"id":"cd","between":["c","d"],"kind":"single"}],
            "trains": [{"id":"x","path":["a","b"],"travel_min":[5.0]},
                       {"id":"y","path":["c","d"],"travel_min":[5.0]}]
        }"#;
        let (net, trains) = crate::network::load_network(doc).unwrap();
        let state = fixtures::at_origins(&trains);
        let sets = conflict_sets(&net, &trains, &state, &vec![1, 1]);
        assert!(sets.edge_conflicts.is_empty());
        assert!(sets.node_conflicts.is_empty());
    }

    #[test]
    fn double_edge_conflicts_same_direction_only() {
        let doc = r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"double"}],
            "trains": [{"id":"x","path":["a","b"],"travel_min":[5.0]},
                       {"id":"y","path":["a","b"],"travel_min":[5.0]},
                       {"id":"z","path":["b","a"],"travel_min":[5.0]}]
        }"#;
        let (net, trains) = crate::network::load_network(doc).unwrap();
        let mut state = fixtures::at_origins(&trains);
        state.positions[1].slot = Some(1);
        let sets = conflict_sets(&net, &trains, &state, &vec![1, 1, 1]);
        let ab = net.edge_idx("ab").unwrap();
        assert_eq!(sets.edge_conflicts[&ab], vec![(0, 1)]);
    }

    #[test]
    fn single_train_problem_has_y_only() {
        let doc = r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":2},{"id":"c","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"},
                      {"id":"bc","between":["b","c"],"kind":"single"}],
            "trains": [{"id":"t","path":["a","b","c"],"travel_min":[5.0,10.0]}]
        }"#;
        let (net, trains) = crate::network::load_network(doc).unwrap();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![2]).unwrap();
        assert_eq!(p.horizons[0], 2);
        // One slot-choice binary pair at each of a and b, no order binaries.
        assert!(p.bins.iter().all(|b| matches!(b.key, BinKey::Slot(..))));
        assert_eq!(p.rows.iter().filter(|r| r.kind == RowKind::Sequential).count(), 1);
        assert_eq!(p.objective.len(), 1);
    }

    #[test]
    fn row_counts_match_closed_forms() {
        let (net, trains, state) = merge_setup();
        let horizons = vec![3, 4, 6];
        let p = build_problem(0.0, &net, &trains, &state, &horizons).unwrap();
        let n_edge_pairs: usize = p.conflicts.edge_conflicts.values().map(|v| v.len()).sum();
        let edge_rows = p.rows.iter().filter(|r| r.kind == RowKind::EdgeOrder).count();
        assert_eq!(edge_rows, 2 * n_edge_pairs);
        let node_rows = p.rows.iter().filter(|r| r.kind == RowKind::NodeOrder).count();
        let expect: usize = p
            .conflicts
            .node_conflicts
            .iter()
            .filter_map(|(n, pairs)| p.slot_capacity.get(n).map(|&c| pairs.len() * 2 * c as usize))
            .sum();
        assert_eq!(node_rows, expect);
    }

    #[test]
    fn big_m_examples() {
        let doc = r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":2},{"id":"c","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"},
                      {"id":"bc","between":["b","c"],"kind":"single"}],
            "trains": [{"id":"t","path":["a","b","c"],"travel_min":[5.0,10.0]}]
        }"#;
        let (net, trains) = crate::network::load_network(doc).unwrap();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![2]).unwrap();
        assert!(p.big_m >= 15.0);
        let empty = build_problem(
            0.0,
            &net,
            &trains,
            &SystemState {
                positions: vec![TrainPos { progress: 2, edge_fraction: 0.0, slot: None, arrived: true }],
            },
            &vec![0],
        )
        .unwrap();
        assert_eq!(empty.big_m, 0.0);
    }

    #[test]
    fn deviation_requires_stage_in_horizon() {
        let (net, trains, state) = merge_setup();
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 2, 2]).unwrap();
        assert!(matches!(
            add_timetable_deviation(p, &[(1, 3, 10.0)]),
            Err(Error::UnknownStage)
        ));
    }

    #[test]
    fn shift_identity_and_drop() {
        let (net, trains, state) = merge_setup();
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 2, 2]).unwrap();
        let sol = Solution {
            y: vec![vec![0.0, 5.0, 10.0], vec![5.0, 10.0], vec![0.0, 5.0]],
            ..Default::default()
        };
        let same = shift_solution(&p, &sol, 0.0).unwrap();
        assert_eq!(same.y, sol.y);
        let later = shift_solution(&p, &sol, 7.0).unwrap();
        // T1 departed stage 1 at 5, still rolling at 7: pinned zero, stage 2 at 3.
        assert_eq!(later.y[0], vec![0.0, 3.0]);
        assert_eq!(later.y[1], vec![0.0, 3.0]);
        assert_eq!(later.y[2], vec![0.0]);
    }

    #[test]
    fn shift_rejects_inconsistent_pending() {
        let (net, trains, state) = merge_setup();
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 2, 2]).unwrap();
        // Stage 2 "departs" before stage 1 completes; shifting past it must fail.
        let sol = Solution {
            y: vec![vec![0.0, 20.0, 2.0], vec![0.0, 5.0], vec![0.0, 5.0]],
            ..Default::default()
        };
        assert!(matches!(shift_solution(&p, &sol, 21.0), Err(Error::NegativeTime)));
    }

    #[test]
    fn lp_export_smoke() {
        let (net, trains, state) = merge_setup();
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 2, 2]).unwrap();
        let lp = export_lp(&p);
        assert!(lp.starts_with("Minimize"));
        assert!(lp.contains("Subject To"));
        assert!(lp.contains("Binary"));
        assert!(lp.trim_end().ends_with("End"));
        assert!(lp.contains("y_T1_0"));
        assert!(lp.contains("ze_T1_T2_e3_4"));
    }
}
