//! Exact solving of scheduling problems.
//!
//! With every binary decided, the remaining rows are two-variable difference
//! inequalities, so a leaf reduces to longest-path potentials over a
//! constraint graph (infeasibility shows up as a positive cycle). The search
//! is best-first branch-and-bound over the disjunctions, branching on the
//! first disjunction the relaxed schedule violates; node capacity violations
//! branch a pair into shared-slot and disjoint-slot children. A brute-force
//! enumerator over the raw binaries serves as an independent oracle.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, BTreeMap};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinId, BinKey, PartialAssignment, Problem, Solution, VarRef};
use crate::network::TrainIdx;
use crate::TIME_TOL;

// --- Difference-constraint engine ---------------------------------------------

/// Arc `y[to] >= y[from] + weight`; vertex 0 is the fixed time origin.
#[derive(Debug, Clone, Copy)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

/// System of difference constraints over `n_vars` variables plus the origin.
#[derive(Debug, Clone, Default)]
pub struct ConstraintGraph {
    pub n_vars: usize,
    pub arcs: Vec<Arc>,
}

impl ConstraintGraph {
    pub fn new(n_vars: usize) -> ConstraintGraph {
        ConstraintGraph { n_vars, arcs: Vec::new() }
    }

    /// y[v] >= y[u] + w
    pub fn ge(&mut self, v: usize, u: usize, w: f64) {
        self.arcs.push(Arc { from: u + 1, to: v + 1, weight: w });
    }

    /// y[v] >= w
    pub fn ge_const(&mut self, v: usize, w: f64) {
        self.arcs.push(Arc { from: 0, to: v + 1, weight: w });
    }

    /// y[v] <= w
    pub fn le_const(&mut self, v: usize, w: f64) {
        self.arcs.push(Arc { from: v + 1, to: 0, weight: -w });
    }
}

/// Componentwise-least nonnegative solution of the system, or a positive
/// cycle witness (vertex list) proving there is none.
pub enum EarliestTimes {
    Feasible(Vec<f64>),
    PositiveCycle(Vec<usize>),
}

pub fn earliest_times(graph: &ConstraintGraph) -> EarliestTimes {
    earliest_times_from(graph, None)
}

/// Longest-path potentials, optionally warm-started from a previous
/// solution of a subset of these constraints (potentials only grow).
pub fn earliest_times_from(graph: &ConstraintGraph, warm: Option<&[f64]>) -> EarliestTimes {
    let n = graph.n_vars + 1;
    let mut dist = vec![0.0f64; n];
    if let Some(w) = warm {
        if w.len() == graph.n_vars {
            dist[1..].copy_from_slice(w);
        }
    }
    let mut pred = vec![usize::MAX; n];
    let mut changed = true;
    let mut pass = 0usize;
    while changed {
        changed = false;
        // Implicit lower bounds y >= 0 relative to the origin: the origin
        // itself can be pushed up by upper-bound arcs, and everything must
        // follow it for those bounds to keep their meaning.
        for v in 1..n {
            if dist[0] > dist[v] + TIME_TOL * 0.5 {
                dist[v] = dist[0];
                pred[v] = 0;
                changed = true;
            }
        }
        for a in &graph.arcs {
            let cand = dist[a.from] + a.weight;
            if cand > dist[a.to] + TIME_TOL * 0.5 {
                dist[a.to] = cand;
                pred[a.to] = a.from;
                changed = true;
            }
        }
        pass += 1;
        if pass > n && changed {
            // A vertex still relaxing after n passes sits on or behind a
            // positive cycle; walk predecessors to find it.
            let mut v = graph
                .arcs
                .iter()
                .find(|a| dist[a.from] + a.weight > dist[a.to] + TIME_TOL * 0.5)
                .map(|a| a.to)
                .unwrap_or(0);
            for _ in 0..n {
                v = pred[v];
            }
            let start = v;
            let mut cycle = vec![start];
            let mut u = pred[start];
            while u != start && cycle.len() <= n {
                cycle.push(u);
                u = pred[u];
            }
            cycle.reverse();
            return EarliestTimes::PositiveCycle(cycle);
        }
    }
    let origin = dist[0];
    EarliestTimes::Feasible(dist[1..].iter().map(|d| d - origin).collect())
}

// --- Configuration and results --------------------------------------------------

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Wall-clock cap in seconds.
    pub time_limit: f64,
    /// Relative optimality gap at which the search stops.
    pub gap_target: f64,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { time_limit: 120.0, gap_target: 0.001, rng_seed: 0 }
    }
}

impl SolverConfig {
    /// Stop at the first incumbent, however far from optimal.
    pub fn first_feasible(&self) -> SolverConfig {
        SolverConfig { gap_target: 1.0, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    FeasibleTimeout,
    Infeasible,
    NoIncumbentTimeout,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub leaf_solves: u64,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub incumbent: Option<Solution>,
    pub objective: Option<f64>,
    pub lower_bound: f64,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn gap(&self) -> f64 {
        match self.objective {
            Some(obj) => ((obj - self.lower_bound) / obj.max(1.0)).max(0.0),
            None => f64::INFINITY,
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.incumbent.is_some()
    }
}

// --- Search context ---------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct EdgeDisj {
    bin: BinId,
    i: TrainIdx,
    j: TrainIdx,
    vi: usize,
    vj: usize,
    tau_i: f64,
    tau_j: f64,
}

#[derive(Debug, Clone, Copy)]
struct NodePair {
    ord: BinId,
    i: TrainIdx,
    j: TrainIdx,
    node: usize,
    ki: usize,
    kj: usize,
    i_terminal: bool,
    j_terminal: bool,
    i_origin: bool,
    j_origin: bool,
}

#[derive(Debug, Clone, Copy)]
struct Visit {
    train: TrainIdx,
    stage: usize,
}

struct NodeCtx {
    node: usize,
    capacity: u32,
    blocked: u32,
    visits: Vec<Visit>,
    /// Pair indices (into `pairs`) by visitor positions, keyed (a, b) a < b
    /// over positions in `visits`.
    pair_of: BTreeMap<(usize, usize), usize>,
}

/// Static per-problem search machinery.
struct Ctx<'p> {
    p: &'p Problem,
    y_offset: Vec<usize>,
    n_vars: usize,
    base: ConstraintGraph,
    edges: Vec<EdgeDisj>,
    pairs: Vec<NodePair>,
    nodes: Vec<NodeCtx>,
    /// Per bin id: slot group membership (train, node) for slot bins.
    slot_group: Vec<Option<(TrainIdx, usize, u32)>>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Rel {
    Free,
    Shared,
    Disjoint,
}

#[derive(Clone)]
struct AssignState {
    bins: Vec<Option<bool>>,
    rels: Vec<Rel>,
}

impl<'p> Ctx<'p> {
    fn new(p: &'p Problem) -> Ctx<'p> {
        let mut y_offset = vec![0usize; p.n_trains()];
        let mut n_vars = 0usize;
        for (i, it) in p.itineraries.iter().enumerate() {
            y_offset[i] = n_vars;
            if it.is_some() {
                n_vars += p.horizons[i];
            }
        }
        let yv = |i: TrainIdx, k: usize| y_offset[i] + k;

        let mut base = ConstraintGraph::new(n_vars);
        for (i, it) in p.itineraries.iter().enumerate() {
            let Some(it) = it else { continue };
            for s in 1..it.edges.len() {
                base.ge(yv(i, s), yv(i, s - 1), it.tau[s - 1]);
            }
        }
        for &i in &p.y_fixed_zero {
            base.le_const(yv(i, 0), 0.0);
        }

        let mut edges = Vec::new();
        let mut pairs = Vec::new();
        let mut pair_lookup: BTreeMap<(TrainIdx, TrainIdx, usize), usize> = BTreeMap::new();
        for bv in &p.bins {
            match bv.key {
                BinKey::Edge(i, j, e) => {
                    let iti = p.itineraries[i].as_ref().unwrap();
                    let itj = p.itineraries[j].as_ref().unwrap();
                    let ki = iti.edges.iter().position(|&x| x == e).unwrap();
                    let kj = itj.edges.iter().position(|&x| x == e).unwrap();
                    edges.push(EdgeDisj {
                        bin: p.bin(bv.key).unwrap(),
                        i,
                        j,
                        vi: yv(i, ki),
                        vj: yv(j, kj),
                        tau_i: iti.tau[ki],
                        tau_j: itj.tau[kj],
                    });
                }
                BinKey::Node(i, j, n) => {
                    let iti = p.itineraries[i].as_ref().unwrap();
                    let itj = p.itineraries[j].as_ref().unwrap();
                    let (Some(ki), Some(kj)) = (
                        iti.nodes.iter().position(|&x| x == n),
                        itj.nodes.iter().position(|&x| x == n),
                    ) else {
                        continue;
                    };
                    pair_lookup.insert((i, j, n), pairs.len());
                    pairs.push(NodePair {
                        ord: p.bin(bv.key).unwrap(),
                        i,
                        j,
                        node: n,
                        ki,
                        kj,
                        i_terminal: ki == p.horizons[i],
                        j_terminal: kj == p.horizons[j],
                        i_origin: ki == 0,
                        j_origin: kj == 0,
                    });
                }
                BinKey::Slot(..) => {}
            }
        }

        let mut nodes = Vec::new();
        for (&n, nv) in &p.visits {
            let visits: Vec<Visit> = nv.iter().map(|&(t, s)| Visit { train: t, stage: s }).collect();
            let mut pair_of = BTreeMap::new();
            for a in 0..visits.len() {
                for b in a + 1..visits.len() {
                    let (ti, tj) = (visits[a].train, visits[b].train);
                    let key = if ti < tj { (ti, tj, n) } else { (tj, ti, n) };
                    if let Some(&pi) = pair_lookup.get(&key) {
                        pair_of.insert((a, b), pi);
                    }
                }
            }
            nodes.push(NodeCtx {
                node: n,
                capacity: p.slot_capacity[&n],
                blocked: p.blocked_slots.get(&n).map(|b| b.len() as u32).unwrap_or(0),
                visits,
                pair_of,
            });
        }

        let mut slot_group = vec![None; p.bins.len()];
        for (id, bv) in p.bins.iter().enumerate() {
            if let BinKey::Slot(i, n, l) = bv.key {
                slot_group[id] = Some((i, n, l));
            }
        }

        Ctx { p, y_offset, n_vars, base, edges, pairs, nodes, slot_group }
    }

    fn yv(&self, i: TrainIdx, k: usize) -> usize {
        self.y_offset[i] + k
    }

    fn root_assign(&self) -> AssignState {
        AssignState {
            bins: self.p.bins.iter().map(|b| b.fixed).collect(),
            rels: vec![Rel::Free; self.pairs.len()],
        }
    }

    /// Pinned slot of a visitor under an assignment, if any.
    fn pinned_slot(&self, a: &AssignState, train: TrainIdx, node: usize) -> Option<u32> {
        let cap = self.p.slot_capacity[&node];
        (0..cap).find(|&l| {
            self.p
                .bin(BinKey::Slot(train, node, l))
                .and_then(|id| a.bins[id])
                .unwrap_or(false)
        })
    }

    fn forbidden_slots(&self, a: &AssignState, train: TrainIdx, node: usize) -> Vec<u32> {
        let cap = self.p.slot_capacity[&node];
        (0..cap)
            .filter(|&l| {
                self.p.bin(BinKey::Slot(train, node, l)).map(|id| a.bins[id] == Some(false)).unwrap_or(false)
            })
            .collect()
    }

    /// Relation of a pair, combining the branch state with slot pins.
    fn effective_rel(&self, a: &AssignState, pi: usize) -> Rel {
        if a.rels[pi] != Rel::Free {
            return a.rels[pi];
        }
        let pr = &self.pairs[pi];
        let si = self.pinned_slot(a, pr.i, pr.node);
        let sj = self.pinned_slot(a, pr.j, pr.node);
        match (si, sj) {
            (Some(x), Some(y)) if x == y => Rel::Shared,
            (Some(x), Some(y)) if x != y => Rel::Disjoint,
            _ => Rel::Free,
        }
    }

    /// Difference system implied by the decided part of an assignment.
    fn graph_for(&self, a: &AssignState) -> Option<ConstraintGraph> {
        let mut g = self.base.clone();
        g.arcs.reserve(self.edges.len() + self.pairs.len());
        for d in &self.edges {
            match a.bins[d.bin] {
                Some(true) => g.arcs.push(Arc { from: d.vi + 1, to: d.vj + 1, weight: d.tau_i }),
                Some(false) => g.arcs.push(Arc { from: d.vj + 1, to: d.vi + 1, weight: d.tau_j }),
                None => {}
            }
        }
        for (pi, pr) in self.pairs.iter().enumerate() {
            if self.effective_rel(a, pi) != Rel::Shared {
                continue;
            }
            match a.bins[pr.ord] {
                Some(true) => {
                    if pr.i_terminal || pr.j_origin {
                        return None;
                    }
                    g.arcs.push(Arc {
                        from: self.yv(pr.i, pr.ki) + 1,
                        to: self.yv(pr.j, pr.kj - 1) + 1,
                        weight: 0.0,
                    });
                }
                Some(false) => {
                    if pr.j_terminal || pr.i_origin {
                        return None;
                    }
                    g.arcs.push(Arc {
                        from: self.yv(pr.j, pr.kj) + 1,
                        to: self.yv(pr.i, pr.ki - 1) + 1,
                        weight: 0.0,
                    });
                }
                None => {}
            }
        }
        Some(g)
    }

    fn bound_of(&self, y: &[f64]) -> f64 {
        let mut obj = 0.0;
        for (v, c) in &self.p.objective {
            match *v {
                VarRef::Y(i, k) => obj += c * y[self.yv(i, k)],
                VarRef::Dev(d) => {
                    // Least possible deviation given y can only grow.
                    let (i, k, r) = self.p.deviation.as_ref().unwrap().refs[d];
                    obj += c * (y[self.yv(i, k)] - r).max(0.0);
                }
            }
        }
        obj
    }

    fn claim(&self, y: &[f64], v: Visit, horizon: usize) -> (f64, f64) {
        let start = if v.stage == 0 { 0.0 } else { y[self.yv(v.train, v.stage - 1)] };
        let end = if v.stage == horizon { f64::INFINITY } else { y[self.yv(v.train, v.stage)] };
        (start, end)
    }

    /// First violated edge disjunction, by construction order.
    fn violated_edge(&self, a: &AssignState, y: &[f64]) -> Option<usize> {
        self.edges.iter().position(|d| {
            a.bins[d.bin].is_none()
                && y[d.vj] + TIME_TOL < y[d.vi] + d.tau_i
                && y[d.vi] + TIME_TOL < y[d.vj] + d.tau_j
        })
    }

    /// Claim sets that exceed a node's capacity, with the branch to take.
    ///
    /// Two claims need different slots when neither fits entirely before the
    /// other; a zero-width claim (pure transit) conflicts only with windows
    /// it falls strictly inside. Ends release before coincident points and
    /// starts so that a boundary handover never counts double.
    fn violated_capacity(&self, a: &AssignState, y: &[f64]) -> CapacityScan {
        for nc in &self.nodes {
            let room = nc.capacity.saturating_sub(nc.blocked) as usize;
            // kind: 0 = end, 1 = point claim, 2 = start
            let mut events: Vec<(f64, u8, usize)> = Vec::new();
            for (vi, &v) in nc.visits.iter().enumerate() {
                let (s, e) = self.claim(y, v, self.p.horizons[v.train]);
                if e - s <= TIME_TOL {
                    events.push((s, 1, vi));
                } else {
                    events.push((s, 2, vi));
                    if e.is_finite() {
                        events.push((e, 0, vi));
                    }
                }
            }
            events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
            let mut active: Vec<usize> = Vec::new();
            for (_, kind, vi) in events {
                let mut clique: Option<Vec<usize>> = None;
                match kind {
                    0 => active.retain(|&x| x != vi),
                    1 => {
                        if active.len() + 1 > room {
                            let mut c = active.clone();
                            c.push(vi);
                            clique = Some(c);
                        }
                    }
                    _ => {
                        active.push(vi);
                        if active.len() > room {
                            clique = Some(active.clone());
                        }
                    }
                }
                let Some(mut act) = clique else { continue };
                act.sort_unstable();
                for x in 0..act.len() {
                    for z in x + 1..act.len() {
                        let key = (act[x], act[z]);
                        if let Some(&pi) = nc.pair_of.get(&key) {
                            if self.effective_rel(a, pi) == Rel::Free {
                                return CapacityScan::BranchRel(pi);
                            }
                        }
                    }
                }
                for x in 0..act.len() {
                    for z in x + 1..act.len() {
                        let key = (act[x], act[z]);
                        if let Some(&pi) = nc.pair_of.get(&key) {
                            if self.effective_rel(a, pi) == Rel::Shared
                                && a.bins[self.pairs[pi].ord].is_none()
                            {
                                return CapacityScan::BranchOrd(pi);
                            }
                        }
                    }
                }
                return CapacityScan::Infeasible;
            }
        }
        CapacityScan::Clean
    }

    /// Assign concrete slots at every node; claims are final here.
    fn color_slots(
        &self,
        a: &AssignState,
        y: &[f64],
    ) -> std::result::Result<BTreeMap<(TrainIdx, usize), u32>, ColorFailure> {
        let mut out = BTreeMap::new();
        for nc in &self.nodes {
            let n = nc.node;
            let cap = self.p.slot_capacity[&n];
            let blocked = self.p.blocked_slots.get(&n).cloned().unwrap_or_default();
            let k = nc.visits.len();
            // Union shared pairs into components.
            let mut comp: Vec<usize> = (0..k).collect();
            fn find(comp: &mut Vec<usize>, x: usize) -> usize {
                if comp[x] != x {
                    let r = find(comp, comp[x]);
                    comp[x] = r;
                }
                comp[x]
            }
            for (&(x, z), &pi) in &nc.pair_of {
                if self.effective_rel(a, pi) == Rel::Shared {
                    let (rx, rz) = (find(&mut comp, x), find(&mut comp, z));
                    if rx != rz {
                        comp[rx] = rz;
                    }
                }
            }
            let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for x in 0..k {
                let r = find(&mut comp, x);
                members.entry(r).or_default().push(x);
            }
            // Claims inside one component must not overlap; if two do and
            // their own ordering is still open, that pair must be decided.
            let claims: Vec<(f64, f64)> =
                nc.visits.iter().map(|&v| self.claim(y, v, self.p.horizons[v.train])).collect();
            let overlap = |x: usize, z: usize| {
                claims[x].0 + TIME_TOL < claims[z].1 && claims[z].0 + TIME_TOL < claims[x].1
            };
            for mem in members.values() {
                for xi in 0..mem.len() {
                    for zi in xi + 1..mem.len() {
                        let (x, z) = (mem[xi], mem[zi]);
                        if overlap(x, z) {
                            let key = (x.min(z), x.max(z));
                            if let Some(&pi) = nc.pair_of.get(&key) {
                                if a.bins[self.pairs[pi].ord].is_none() {
                                    return Err(ColorFailure::NeedOrd(pi, Rel::Shared));
                                }
                            }
                            return Err(ColorFailure::Infeasible);
                        }
                    }
                }
            }
            // Component constraints: pins, forbidden slots, cross relations.
            let comp_ids: Vec<usize> = members.keys().copied().collect();
            let mut pins: Vec<Option<u32>> = Vec::new();
            let mut forb: Vec<Vec<u32>> = Vec::new();
            for &cid in &comp_ids {
                let mut pin = None;
                let mut f: Vec<u32> = blocked.clone();
                for &x in &members[&cid] {
                    let v = nc.visits[x];
                    if let Some(l) = self.pinned_slot(a, v.train, n) {
                        if pin.replace(l).map(|prev| prev != l).unwrap_or(false) {
                            return Err(ColorFailure::Infeasible);
                        }
                    }
                    f.extend(self.forbidden_slots(a, v.train, n));
                }
                pins.push(pin);
                forb.push(f);
            }
            let must_differ = |ca: &[usize], cb: &[usize]| -> bool {
                for &x in ca {
                    for &z in cb {
                        let key = (x.min(z), x.max(z));
                        if overlap(x, z) {
                            return true;
                        }
                        if let Some(&pi) = nc.pair_of.get(&key) {
                            if self.effective_rel(a, pi) == Rel::Disjoint {
                                return true;
                            }
                        }
                    }
                }
                false
            };
            // Backtracking assignment of components to slots.
            let m = comp_ids.len();
            let mut chosen: Vec<Option<u32>> = vec![None; m];
            let mut idx = 0usize;
            let mut cursor: Vec<u32> = vec![0; m];
            'assign: loop {
                if idx == m {
                    break;
                }
                let mut placed = false;
                let start = cursor[idx];
                for l in start..cap {
                    if forb[idx].contains(&l) {
                        continue;
                    }
                    if let Some(p) = pins[idx] {
                        if p != l {
                            continue;
                        }
                    }
                    let clash = (0..idx).any(|prev| {
                        chosen[prev] == Some(l)
                            && must_differ(&members[&comp_ids[prev]], &members[&comp_ids[idx]])
                    });
                    if clash {
                        continue;
                    }
                    chosen[idx] = Some(l);
                    cursor[idx] = l + 1;
                    idx += 1;
                    if idx < m {
                        cursor[idx] = 0;
                    }
                    placed = true;
                    break;
                }
                if placed {
                    continue 'assign;
                }
                // Backtrack.
                chosen[idx] = None;
                cursor[idx] = 0;
                if idx == 0 {
                    // Try deciding an open pair before giving up.
                    for (&(x, z), &pi) in &nc.pair_of {
                        let _ = (x, z);
                        if self.effective_rel(a, pi) == Rel::Free {
                            return Err(ColorFailure::NeedOrd(pi, Rel::Free));
                        }
                    }
                    return Err(ColorFailure::Infeasible);
                }
                idx -= 1;
            }
            for (ci, &cid) in comp_ids.iter().enumerate() {
                for &x in &members[&cid] {
                    out.insert((nc.visits[x].train, n), chosen[ci].unwrap());
                }
            }
        }
        Ok(out)
    }

    /// Build the full solution at a violation-free leaf.
    fn leaf_solution(&self, a: &AssignState, y: &[f64]) -> std::result::Result<Solution, ColorFailure> {
        let slots = self.color_slots(a, y)?;
        let mut sol = Solution::default();
        sol.y = self
            .p
            .itineraries
            .iter()
            .enumerate()
            .map(|(i, it)| {
                it.as_ref()
                    .map(|_| (0..self.p.horizons[i]).map(|k| y[self.yv(i, k)]).collect())
                    .unwrap_or_default()
            })
            .collect();
        for d in &self.edges {
            let key = match self.p.bins[d.bin].key {
                BinKey::Edge(i, j, e) => (i, j, e),
                _ => unreachable!(),
            };
            let v = match a.bins[d.bin] {
                Some(v) => v,
                None => y[d.vj] + TIME_TOL >= y[d.vi] + d.tau_i,
            };
            sol.z_edge.insert(key, v);
        }
        for (pi, pr) in self.pairs.iter().enumerate() {
            let v = match a.bins[pr.ord] {
                Some(v) => v,
                None => {
                    // Order by claim windows; ties resolve to the lower index.
                    let (si, ei) = self.claim(
                        y,
                        Visit { train: pr.i, stage: pr.ki },
                        self.p.horizons[pr.i],
                    );
                    let (sj, _ej) = self.claim(
                        y,
                        Visit { train: pr.j, stage: pr.kj },
                        self.p.horizons[pr.j],
                    );
                    let _ = si;
                    ei <= sj + TIME_TOL
                }
            };
            let _ = pi;
            sol.z_node.insert((pr.i, pr.j, pr.node), v);
        }
        sol.z_slot = slots;
        if let Some(dev) = &self.p.deviation {
            sol.dev = dev
                .refs
                .iter()
                .map(|&(i, k, r)| (y[self.yv(i, k)] - r).abs())
                .collect();
        }
        Ok(sol)
    }
}

enum CapacityScan {
    Clean,
    BranchRel(usize),
    BranchOrd(usize),
    Infeasible,
}

impl<'p> Ctx<'p> {
    /// Serialized dispatch: move one train one stage at a time whenever the
    /// entered node has room, timing moves back to back. Always feasible
    /// when it completes, far from optimal, and cheap: the incumbent of
    /// last resort. Only applies when every active train is parked.
    fn dispatch_heuristic(&self) -> Option<Solution> {
        let p = self.p;
        let mut stage: Vec<usize> = vec![0; p.n_trains()];
        let mut active: Vec<TrainIdx> = Vec::new();
        // Slot occupancy per capacitated node, seeded with measured slots
        // and the slots arrived trains hold.
        let mut used: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (n, blocked) in &p.blocked_slots {
            used.entry(*n).or_default().extend(blocked.iter().copied());
        }
        let mut slot_of: BTreeMap<TrainIdx, Option<u32>> = BTreeMap::new();
        for (i, it) in p.itineraries.iter().enumerate() {
            let Some(it) = it else { continue };
            if it.on_edge {
                return None;
            }
            active.push(i);
            let origin = it.nodes[0];
            let pin = p.state.positions[i].slot;
            if p.slot_capacity.contains_key(&origin) {
                used.entry(origin).or_default().push(pin?);
                slot_of.insert(i, pin);
            } else {
                slot_of.insert(i, None);
            }
        }
        // Try several dispatch orders: round-robin or run-to-blocked, over
        // index order, reversed, and by remaining distance.
        let drain = |order: &[TrainIdx], run_deep: bool| -> Option<Vec<(TrainIdx, usize)>> {
            let mut stage = stage.clone();
            let mut used = used.clone();
            let mut slot_of = slot_of.clone();
            let mut moves: Vec<(TrainIdx, usize)> = Vec::new();
            loop {
                let mut progressed = false;
                let mut all_done = true;
                for &i in order {
                    let it = p.itineraries[i].as_ref().unwrap();
                    loop {
                        if stage[i] == p.horizons[i] {
                            break;
                        }
                        all_done = false;
                        let next = it.nodes[stage[i] + 1];
                        let room = match p.slot_capacity.get(&next) {
                            None => true,
                            Some(&cap) => {
                                (used.get(&next).map(|v| v.len()).unwrap_or(0) as u32) < cap
                            }
                        };
                        if !room {
                            break;
                        }
                        let origin = it.nodes[stage[i]];
                        if let Some(Some(s)) = slot_of.get(&i) {
                            if let Some(v) = used.get_mut(&origin) {
                                v.retain(|&x| x != *s);
                            }
                        }
                        let new_slot = p.slot_capacity.get(&next).map(|&cap| {
                            let v = used.entry(next).or_default();
                            let s = (0..cap).find(|x| !v.contains(x)).expect("room was checked");
                            v.push(s);
                            s
                        });
                        slot_of.insert(i, new_slot);
                        moves.push((i, stage[i]));
                        stage[i] += 1;
                        progressed = true;
                        if !run_deep {
                            break;
                        }
                    }
                }
                if all_done {
                    return Some(moves);
                }
                if !progressed {
                    return None;
                }
            }
        };
        let by_remaining = |desc: bool| -> Vec<TrainIdx> {
            let mut v = active.clone();
            v.sort_by_key(|&i| p.horizons[i]);
            if desc {
                v.reverse();
            }
            v
        };
        let reversed: Vec<TrainIdx> = active.iter().rev().copied().collect();
        let orders: [&[TrainIdx]; 4] =
            [&active, &reversed, &by_remaining(false), &by_remaining(true)];
        let mut moves = None;
        'outer: for run_deep in [false, true] {
            for order in orders {
                if let Some(m) = drain(order, run_deep) {
                    moves = Some(m);
                    break 'outer;
                }
            }
        }
        let moves = moves?;
        // Back-to-back timing and slot bookkeeping for the solution.
        let mut sol = Solution::default();
        sol.y = p
            .itineraries
            .iter()
            .enumerate()
            .map(|(i, it)| it.as_ref().map(|_| vec![0.0; p.horizons[i]]).unwrap_or_default())
            .collect();
        let mut clock = 0.0f64;
        let mut slots_taken: BTreeMap<usize, Vec<(TrainIdx, u32)>> = BTreeMap::new();
        for (i, it) in p.itineraries.iter().enumerate() {
            let Some(it) = it else { continue };
            let origin = it.nodes[0];
            if p.slot_capacity.contains_key(&origin) {
                let s = p.state.positions[i].slot.unwrap();
                sol.z_slot.insert((i, origin), s);
                slots_taken.entry(origin).or_default().push((i, s));
            }
        }
        let mut occupied: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
        for (n, blocked) in &p.blocked_slots {
            occupied.entry(*n).or_default().extend(blocked.iter().copied());
        }
        for (i, it) in p.itineraries.iter().enumerate() {
            let Some(it) = it else { continue };
            if p.slot_capacity.contains_key(&it.nodes[0]) {
                occupied
                    .entry(it.nodes[0])
                    .or_default()
                    .push(p.state.positions[i].slot.unwrap());
            }
        }
        let mut cur_slot: BTreeMap<TrainIdx, Option<u32>> = BTreeMap::new();
        for (i, it) in p.itineraries.iter().enumerate() {
            if let Some(it) = it {
                cur_slot.insert(
                    i,
                    p.slot_capacity.contains_key(&it.nodes[0]).then(|| p.state.positions[i].slot.unwrap()),
                );
            }
        }
        for &(i, s) in &moves {
            let it = p.itineraries[i].as_ref().unwrap();
            sol.y[i][s] = clock;
            clock += it.tau[s];
            let origin = it.nodes[s];
            let next = it.nodes[s + 1];
            if let Some(Some(old)) = cur_slot.get(&i) {
                if let Some(v) = occupied.get_mut(&origin) {
                    v.retain(|&x| x != *old);
                }
            }
            let new_slot = p.slot_capacity.get(&next).map(|&cap| {
                let v = occupied.entry(next).or_default();
                let slot = (0..cap).find(|x| !v.contains(x)).expect("drain had room");
                v.push(slot);
                slot
            });
            if let Some(slot) = new_slot {
                sol.z_slot.insert((i, next), slot);
            }
            cur_slot.insert(i, new_slot);
        }
        // Order binaries from the serialized timeline.
        for d in &self.edges {
            let key = match p.bins[d.bin].key {
                BinKey::Edge(a, b, e) => (a, b, e),
                _ => unreachable!(),
            };
            let yi = sol.y[d.i][self.edge_stage_of(d.vi, d.i)];
            let yj = sol.y[d.j][self.edge_stage_of(d.vj, d.j)];
            sol.z_edge.insert(key, p.bins[d.bin].fixed.unwrap_or(yi <= yj));
        }
        for pr in &self.pairs {
            let (_, ei) = self.claim_sol(&sol, pr.i, pr.ki);
            let (sj, _) = self.claim_sol(&sol, pr.j, pr.kj);
            let v = p.bins[pr.ord].fixed.unwrap_or(ei <= sj + TIME_TOL);
            sol.z_node.insert((pr.i, pr.j, pr.node), v);
        }
        if let Some(dev) = &p.deviation {
            sol.dev = dev.refs.iter().map(|&(i, k, r)| (sol.y[i][k] - r).abs()).collect();
        }
        Some(sol)
    }

    fn edge_stage_of(&self, v: usize, train: TrainIdx) -> usize {
        v - self.y_offset[train]
    }

    fn claim_sol(&self, sol: &Solution, i: TrainIdx, stage: usize) -> (f64, f64) {
        let f = self.p.horizons[i];
        let start = if stage == 0 { 0.0 } else { sol.y[i][stage - 1] };
        let end = if stage == f { f64::INFINITY } else { sol.y[i][stage] };
        (start, end)
    }

    /// Settle every open decision greedily along the relaxed schedule,
    /// following earliest-first orders. Cheap and often lands on a feasible
    /// leaf; returns its solution when it does. Decisions only add arcs, so
    /// the graph grows in place and relaxations restart from the last
    /// potentials.
    fn greedy_complete(&self, start: &AssignState, stats: &mut SolveStats) -> Option<Solution> {
        let mut a = start.clone();
        if !assignment_consistent(self, &a) {
            return None;
        }
        let mut g = self.graph_for(&a)?;
        stats.leaf_solves += 1;
        let EarliestTimes::Feasible(mut y) = earliest_times(&g) else { return None };
        let mut guard = 0usize;
        loop {
            guard += 1;
            if guard > self.p.bins.len() + self.pairs.len() + 8 {
                return None;
            }
            // Settle every currently violated edge disjunction at once.
            let mut changed = false;
            for d in &self.edges {
                if a.bins[d.bin].is_none()
                    && y[d.vj] + TIME_TOL < y[d.vi] + d.tau_i
                    && y[d.vi] + TIME_TOL < y[d.vj] + d.tau_j
                {
                    let first = y[d.vi] <= y[d.vj];
                    a.bins[d.bin] = Some(first);
                    if first {
                        g.arcs.push(Arc { from: d.vi + 1, to: d.vj + 1, weight: d.tau_i });
                    } else {
                        g.arcs.push(Arc { from: d.vj + 1, to: d.vi + 1, weight: d.tau_j });
                    }
                    changed = true;
                }
            }
            if changed {
                stats.leaf_solves += 1;
                let EarliestTimes::Feasible(y2) = earliest_times_from(&g, Some(&y)) else {
                    return None;
                };
                y = y2;
                continue;
            }
            match self.violated_capacity(&a, &y) {
                CapacityScan::BranchRel(pi) => {
                    a.rels[pi] = Rel::Shared;
                    continue;
                }
                CapacityScan::BranchOrd(pi) => {
                    let pr = self.pairs[pi];
                    let i_first_possible = !(pr.i_terminal || pr.j_origin);
                    let j_first_possible = !(pr.j_terminal || pr.i_origin);
                    let (_, ei) =
                        self.claim(&y, Visit { train: pr.i, stage: pr.ki }, self.p.horizons[pr.i]);
                    let (sj, _) =
                        self.claim(&y, Visit { train: pr.j, stage: pr.kj }, self.p.horizons[pr.j]);
                    let want_i_first = ei <= sj + TIME_TOL;
                    let v = match (i_first_possible, j_first_possible) {
                        (true, true) => want_i_first,
                        (true, false) => true,
                        (false, true) => false,
                        (false, false) => return None,
                    };
                    a.bins[pr.ord] = Some(v);
                    if v {
                        g.arcs.push(Arc {
                            from: self.yv(pr.i, pr.ki) + 1,
                            to: self.yv(pr.j, pr.kj - 1) + 1,
                            weight: 0.0,
                        });
                    } else {
                        g.arcs.push(Arc {
                            from: self.yv(pr.j, pr.kj) + 1,
                            to: self.yv(pr.i, pr.ki - 1) + 1,
                            weight: 0.0,
                        });
                    }
                    stats.leaf_solves += 1;
                    let EarliestTimes::Feasible(y2) = earliest_times_from(&g, Some(&y)) else {
                        return None;
                    };
                    y = y2;
                    continue;
                }
                CapacityScan::Infeasible => return None,
                CapacityScan::Clean => {}
            }
            match self.leaf_solution(&a, &y) {
                Ok(sol) => return Some(sol),
                Err(ColorFailure::NeedOrd(pi, rel)) => {
                    if rel == Rel::Shared {
                        let pr = self.pairs[pi];
                        if pr.i_terminal || pr.j_origin {
                            return None;
                        }
                        a.bins[pr.ord] = Some(true);
                        g.arcs.push(Arc {
                            from: self.yv(pr.i, pr.ki) + 1,
                            to: self.yv(pr.j, pr.kj - 1) + 1,
                            weight: 0.0,
                        });
                        stats.leaf_solves += 1;
                        let EarliestTimes::Feasible(y2) = earliest_times_from(&g, Some(&y))
                        else {
                            return None;
                        };
                        y = y2;
                    } else {
                        a.rels[pi] = Rel::Disjoint;
                    }
                    continue;
                }
                Err(ColorFailure::Infeasible) => return None,
            }
        }
    }

}

enum ColorFailure {
    NeedOrd(usize, Rel),
    Infeasible,
}

// --- Branch and bound ---------------------------------------------------------

#[derive(Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}
impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

struct OpenNode {
    assign: AssignState,
    y: Vec<f64>,
    bound: f64,
}

/// Apply a partial assignment onto a state. `strict` rejects conflicts with
/// already-fixed values; otherwise conflicting entries are skipped.
fn apply_partial(
    ctx: &Ctx,
    a: &mut AssignState,
    partial: &PartialAssignment,
    strict: bool,
) -> Result<()> {
    for (&key, &v) in &partial.bins {
        let Some(id) = ctx.p.bin(key) else {
            if strict {
                return Err(Error::VariableMismatch(format!("unknown variable {:?}", key)));
            }
            continue;
        };
        match a.bins[id] {
            Some(prev) if prev != v => {
                if strict {
                    return Err(Error::ForcedInfeasible);
                }
            }
            _ => a.bins[id] = Some(v),
        }
    }
    Ok(())
}

/// Quick consistency checks that do not need the graph.
fn assignment_consistent(ctx: &Ctx, a: &AssignState) -> bool {
    for sc in &ctx.p.slot_choices {
        let mut any_true = false;
        let mut all_false = true;
        for &b in &sc.bins {
            match a.bins[b] {
                Some(true) => {
                    if any_true {
                        return false;
                    }
                    any_true = true;
                    all_false = false;
                }
                Some(false) => {}
                None => all_false = false,
            }
        }
        if all_false && !any_true {
            return false;
        }
    }
    for (pi, pr) in ctx.pairs.iter().enumerate() {
        if ctx.effective_rel(a, pi) == Rel::Shared {
            match a.bins[pr.ord] {
                Some(true) if pr.i_terminal || pr.j_origin => return false,
                Some(false) if pr.j_terminal || pr.i_origin => return false,
                _ => {}
            }
        }
    }
    true
}

/// Register nodes pushed since `before` on the DFS stack (feasibility mode).
fn sync_new_nodes(dfs: &mut Vec<(f64, usize)>, arena: &[OpenNode], before: usize, on: bool) {
    if on {
        for idx in before..arena.len() {
            dfs.push((arena[idx].bound, idx));
        }
    }
}

/// Diagnostic entry: run the serialized dispatch heuristic alone.
#[doc(hidden)]
pub fn dispatch_only(problem: &Problem) -> Option<Solution> {
    Ctx::new(problem).dispatch_heuristic()
}

pub fn solve(
    problem: &Problem,
    config: &SolverConfig,
    seed: Option<&PartialAssignment>,
    forced: Option<&PartialAssignment>,
) -> Result<SolveResult> {
    solve_observed(problem, config, seed, forced, &mut |_, _| {})
}

/// Full solver entry point; `on_incumbent` fires on every improvement.
pub fn solve_observed(
    problem: &Problem,
    config: &SolverConfig,
    seed: Option<&PartialAssignment>,
    forced: Option<&PartialAssignment>,
    on_incumbent: &mut dyn FnMut(f64, &Solution),
) -> Result<SolveResult> {
    let started = Instant::now();
    let ctx = Ctx::new(problem);
    let mut stats = SolveStats::default();

    let mut root = ctx.root_assign();
    if let Some(f) = forced {
        apply_partial(&ctx, &mut root, f, true)?;
        if !assignment_consistent(&ctx, &root) {
            return Err(Error::ForcedInfeasible);
        }
        match ctx.graph_for(&root) {
            None => return Err(Error::ForcedInfeasible),
            Some(g) => {
                stats.leaf_solves += 1;
                if let EarliestTimes::PositiveCycle(_) = earliest_times(&g) {
                    return Err(Error::ForcedInfeasible);
                }
            }
        }
    }

    let mut incumbent: Option<Solution> = None;
    let mut incumbent_obj = f64::INFINITY;
    let mut heap: BinaryHeap<Reverse<(OrdF64, u64, usize)>> = BinaryHeap::new();
    let mut arena: Vec<OpenNode> = Vec::new();
    let mut seq = 0u64;

    let mut push_node = |assign: AssignState,
                         heap: &mut BinaryHeap<Reverse<(OrdF64, u64, usize)>>,
                         arena: &mut Vec<OpenNode>,
                         stats: &mut SolveStats,
                         seq: &mut u64| {
        if !assignment_consistent(&ctx, &assign) {
            return;
        }
        let Some(g) = ctx.graph_for(&assign) else { return };
        stats.leaf_solves += 1;
        match earliest_times(&g) {
            EarliestTimes::PositiveCycle(_) => {}
            EarliestTimes::Feasible(y) => {
                let bound = ctx.bound_of(&y);
                arena.push(OpenNode { assign, y, bound });
                heap.push(Reverse((OrdF64(bound), *seq, arena.len() - 1)));
                *seq += 1;
            }
        }
    };

    // Dive pass: apply the seed wholesale (when given) and settle whatever
    // is left greedily. Gives an immediate incumbent for warm-started
    // problems and a cheap first incumbent on most cold ones.
    {
        let mut dived = root.clone();
        let seed_ok = match seed {
            Some(sd) => apply_partial(&ctx, &mut dived, sd, false).is_ok(),
            None => true,
        };
        if seed_ok {
            if let Some(sol) = ctx.greedy_complete(&dived, &mut stats) {
                let obj = problem.objective_value(&sol);
                if obj < incumbent_obj {
                    incumbent_obj = obj;
                    on_incumbent(obj, &sol);
                    incumbent = Some(sol);
                }
            }
        }
        if incumbent.is_none() && forced.is_none() {
            if let Some(sol) = ctx.dispatch_heuristic() {
                if crate::model::validate_solution(problem, &sol)
                    .map(|v| v.is_empty())
                    .unwrap_or(false)
                {
                    let obj = problem.objective_value(&sol);
                    incumbent_obj = obj;
                    on_incumbent(obj, &sol);
                    incumbent = Some(sol);
                }
            }
        }
    }

    let feasibility_mode = config.gap_target >= 1.0;
    if feasibility_mode {
        if let Some(sol) = incumbent {
            return Ok(finish(
                SolveStatus::Optimal,
                Some(sol),
                incumbent_obj,
                0.0,
                stats,
                started,
            ));
        }
    }

    push_node(root, &mut heap, &mut arena, &mut stats, &mut seq);

    let mut lower_bound = f64::NEG_INFINITY;
    let mut timed_out = false;
    let mut dfs: Vec<(f64, usize)> = if feasibility_mode {
        heap.iter().map(|Reverse((OrdF64(b), _, i))| (*b, *i)).collect()
    } else {
        Vec::new()
    };
    let mut pops = 0u64;
    loop {
        let (bound, idx) = if feasibility_mode {
            match dfs.pop() {
                Some(x) => x,
                None => break,
            }
        } else {
            match heap.pop() {
                Some(Reverse((OrdF64(b), _, i))) => (b, i),
                None => break,
            }
        };
        pops += 1;
        if !feasibility_mode {
            lower_bound = bound;
            if incumbent_obj.is_finite() {
                let gap = ((incumbent_obj - lower_bound) / incumbent_obj.max(1.0)).max(0.0);
                if gap <= config.gap_target + 1e-12 {
                    return Ok(finish(
                        SolveStatus::Optimal,
                        incumbent,
                        incumbent_obj,
                        lower_bound.min(incumbent_obj),
                        stats,
                        started,
                    ));
                }
            }
        } else if incumbent.is_some() {
            return Ok(finish(
                SolveStatus::Optimal,
                incumbent,
                incumbent_obj,
                0.0,
                stats,
                started,
            ));
        }
        if started.elapsed().as_secs_f64() > config.time_limit {
            timed_out = true;
            break;
        }
        if bound >= incumbent_obj - TIME_TOL {
            continue;
        }
        stats.nodes_explored += 1;
        let node = std::mem::replace(
            &mut arena[idx],
            OpenNode { assign: AssignState { bins: vec![], rels: vec![] }, y: vec![], bound: 0.0 },
        );
        // Occasional dives from deep nodes keep an incumbent around while
        // best-first works on the bound.
        if !feasibility_mode && pops % 128 == 0 {
            if let Some(sol) = ctx.greedy_complete(&node.assign, &mut stats) {
                let obj = problem.objective_value(&sol);
                if obj < incumbent_obj - TIME_TOL {
                    incumbent_obj = obj;
                    on_incumbent(obj, &sol);
                    incumbent = Some(sol);
                }
            }
        }
        let before = arena.len();

        if let Some(d) = ctx.violated_edge(&node.assign, &node.y) {
            let bin = ctx.edges[d].bin;
            for v in [true, false] {
                let mut child = node.assign.clone();
                child.bins[bin] = Some(v);
                push_node(child, &mut heap, &mut arena, &mut stats, &mut seq);
            }
            sync_new_nodes(&mut dfs, &arena, before, feasibility_mode);
            continue;
        }
        match ctx.violated_capacity(&node.assign, &node.y) {
            CapacityScan::BranchRel(pi) => {
                let mut shared = node.assign.clone();
                shared.rels[pi] = Rel::Shared;
                push_node(shared, &mut heap, &mut arena, &mut stats, &mut seq);
                let mut disjoint = node.assign.clone();
                disjoint.rels[pi] = Rel::Disjoint;
                push_node(disjoint, &mut heap, &mut arena, &mut stats, &mut seq);
                sync_new_nodes(&mut dfs, &arena, before, feasibility_mode);
                continue;
            }
            CapacityScan::BranchOrd(pi) => {
                let bin = ctx.pairs[pi].ord;
                for v in [true, false] {
                    let mut child = node.assign.clone();
                    child.bins[bin] = Some(v);
                    push_node(child, &mut heap, &mut arena, &mut stats, &mut seq);
                }
                sync_new_nodes(&mut dfs, &arena, before, feasibility_mode);
                continue;
            }
            CapacityScan::Infeasible => continue,
            CapacityScan::Clean => {}
        }
        match ctx.leaf_solution(&node.assign, &node.y) {
            Ok(sol) => {
                let obj = problem.objective_value(&sol);
                if obj < incumbent_obj - TIME_TOL {
                    incumbent_obj = obj;
                    on_incumbent(obj, &sol);
                    incumbent = Some(sol);
                }
            }
            Err(ColorFailure::NeedOrd(pi, rel)) => {
                if rel == Rel::Shared {
                    let bin = ctx.pairs[pi].ord;
                    for v in [true, false] {
                        let mut child = node.assign.clone();
                        child.bins[bin] = Some(v);
                        push_node(child, &mut heap, &mut arena, &mut stats, &mut seq);
                    }
                } else {
                    let mut shared = node.assign.clone();
                    shared.rels[pi] = Rel::Shared;
                    push_node(shared, &mut heap, &mut arena, &mut stats, &mut seq);
                    let mut disjoint = node.assign.clone();
                    disjoint.rels[pi] = Rel::Disjoint;
                    push_node(disjoint, &mut heap, &mut arena, &mut stats, &mut seq);
                }
            }
            Err(ColorFailure::Infeasible) => {}
        }
        sync_new_nodes(&mut dfs, &arena, before, feasibility_mode);
    }

    let status = if timed_out {
        if incumbent.is_some() {
            SolveStatus::FeasibleTimeout
        } else {
            SolveStatus::NoIncumbentTimeout
        }
    } else if incumbent.is_some() {
        lower_bound = incumbent_obj;
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };
    let obj = incumbent.is_some().then_some(incumbent_obj);
    Ok(finish(status, incumbent, obj.unwrap_or(f64::INFINITY), lower_bound, stats, started))
}

fn finish(
    status: SolveStatus,
    incumbent: Option<Solution>,
    objective: f64,
    lower_bound: f64,
    mut stats: SolveStats,
    started: Instant,
) -> SolveResult {
    stats.wall_time_s = started.elapsed().as_secs_f64();
    SolveResult {
        status,
        objective: incumbent.is_some().then_some(objective),
        incumbent,
        lower_bound,
        stats,
    }
}

/// Objective of the relaxation that keeps only constraints implied by the
/// fixed binaries of `partial`.
pub fn lower_bound(problem: &Problem, partial: &PartialAssignment) -> Result<f64> {
    let ctx = Ctx::new(problem);
    let mut a = ctx.root_assign();
    apply_partial(&ctx, &mut a, partial, true).map_err(|_| Error::InfeasiblePartial)?;
    if !assignment_consistent(&ctx, &a) {
        return Err(Error::InfeasiblePartial);
    }
    let g = ctx.graph_for(&a).ok_or(Error::InfeasiblePartial)?;
    match earliest_times(&g) {
        EarliestTimes::Feasible(y) => Ok(ctx.bound_of(&y)),
        EarliestTimes::PositiveCycle(_) => Err(Error::InfeasiblePartial),
    }
}

// --- Brute force oracle ---------------------------------------------------------

/// Exhaustive enumeration of every binary assignment, solving each leaf by
/// earliest times. Exact but exponential; guarded by a size cap.
pub fn enumerate_bruteforce(problem: &Problem) -> Result<SolveResult> {
    let started = Instant::now();
    let ctx = Ctx::new(problem);
    let free: Vec<BinId> =
        (0..problem.bins.len()).filter(|&b| problem.bins[b].fixed.is_none()).collect();
    if free.len() > 25 {
        return Err(Error::TooLarge(free.len()));
    }
    let mut stats = SolveStats::default();
    let mut best: Option<(f64, Vec<Option<bool>>, Vec<f64>)> = None;
    let mut assign: Vec<Option<bool>> = problem.bins.iter().map(|b| b.fixed).collect();

    // Leaf evaluation over a complete assignment.
    fn eval_leaf(
        ctx: &Ctx,
        assign: &[Option<bool>],
        stats: &mut SolveStats,
    ) -> Option<(f64, Vec<f64>)> {
        for sc in &ctx.p.slot_choices {
            let trues = sc.bins.iter().filter(|&&b| assign[b] == Some(true)).count();
            if trues != 1 {
                return None;
            }
        }
        let mut g = ctx.base.clone();
        for d in &ctx.edges {
            match assign[d.bin] {
                Some(true) => g.arcs.push(Arc { from: d.vi + 1, to: d.vj + 1, weight: d.tau_i }),
                Some(false) => g.arcs.push(Arc { from: d.vj + 1, to: d.vi + 1, weight: d.tau_j }),
                None => unreachable!("leaf assignment is complete"),
            }
        }
        for pr in &ctx.pairs {
            let cap = ctx.p.slot_capacity[&pr.node];
            let shared = (0..cap).any(|l| {
                let zi = ctx.p.bin(BinKey::Slot(pr.i, pr.node, l)).unwrap();
                let zj = ctx.p.bin(BinKey::Slot(pr.j, pr.node, l)).unwrap();
                assign[zi] == Some(true) && assign[zj] == Some(true)
            });
            if !shared {
                continue;
            }
            match assign[pr.ord] {
                Some(true) => {
                    if pr.i_terminal || pr.j_origin {
                        return None;
                    }
                    g.arcs.push(Arc {
                        from: ctx.yv(pr.i, pr.ki) + 1,
                        to: ctx.yv(pr.j, pr.kj - 1) + 1,
                        weight: 0.0,
                    });
                }
                Some(false) => {
                    if pr.j_terminal || pr.i_origin {
                        return None;
                    }
                    g.arcs.push(Arc {
                        from: ctx.yv(pr.j, pr.kj) + 1,
                        to: ctx.yv(pr.i, pr.ki - 1) + 1,
                        weight: 0.0,
                    });
                }
                None => unreachable!("leaf assignment is complete"),
            }
        }
        stats.leaf_solves += 1;
        match earliest_times(&g) {
            EarliestTimes::Feasible(y) => {
                let mut obj = 0.0;
                for (v, c) in &ctx.p.objective {
                    match *v {
                        VarRef::Y(i, k) => obj += c * y[ctx.yv(i, k)],
                        VarRef::Dev(d) => {
                            let (i, k, r) = ctx.p.deviation.as_ref().unwrap().refs[d];
                            obj += c * (y[ctx.yv(i, k)] - r).abs();
                        }
                    }
                }
                Some((obj, y))
            }
            EarliestTimes::PositiveCycle(_) => None,
        }
    }

    fn slot_sum_viable(ctx: &Ctx, assign: &[Option<bool>]) -> bool {
        for sc in &ctx.p.slot_choices {
            let mut trues = 0usize;
            let mut undecided = 0usize;
            for &b in &sc.bins {
                match assign[b] {
                    Some(true) => trues += 1,
                    None => undecided += 1,
                    Some(false) => {}
                }
            }
            if trues > 1 || (trues == 0 && undecided == 0) {
                return false;
            }
        }
        true
    }

    fn recurse(
        ctx: &Ctx,
        free: &[BinId],
        depth: usize,
        assign: &mut Vec<Option<bool>>,
        best: &mut Option<(f64, Vec<Option<bool>>, Vec<f64>)>,
        stats: &mut SolveStats,
    ) {
        if depth == free.len() {
            stats.nodes_explored += 1;
            if let Some((obj, y)) = eval_leaf(ctx, assign, stats) {
                if best.as_ref().map(|(b, _, _)| obj < *b - TIME_TOL).unwrap_or(true) {
                    *best = Some((obj, assign.clone(), y));
                }
            }
            return;
        }
        for v in [false, true] {
            assign[free[depth]] = Some(v);
            if slot_sum_viable(ctx, assign) {
                recurse(ctx, free, depth + 1, assign, best, stats);
            }
        }
        assign[free[depth]] = None;
    }

    recurse(&ctx, &free, 0, &mut assign, &mut best, &mut stats);

    let result = match best {
        None => finish(SolveStatus::Infeasible, None, f64::INFINITY, f64::INFINITY, stats, started),
        Some((obj, assign, y)) => {
            let mut sol = Solution::default();
            sol.y = ctx
                .p
                .itineraries
                .iter()
                .enumerate()
                .map(|(i, it)| {
                    it.as_ref()
                        .map(|_| (0..ctx.p.horizons[i]).map(|k| y[ctx.yv(i, k)]).collect())
                        .unwrap_or_default()
                })
                .collect();
            for bv in ctx.p.bins.iter() {
                let id = ctx.p.bin(bv.key).unwrap();
                let v = assign[id].unwrap();
                match bv.key {
                    BinKey::Edge(i, j, e) => {
                        sol.z_edge.insert((i, j, e), v);
                    }
                    BinKey::Node(i, j, n) => {
                        sol.z_node.insert((i, j, n), v);
                    }
                    BinKey::Slot(i, n, l) => {
                        if v {
                            sol.z_slot.insert((i, n), l);
                        }
                    }
                }
            }
            if let Some(dev) = &ctx.p.deviation {
                sol.dev =
                    dev.refs.iter().map(|&(i, k, r)| (y[ctx.yv(i, k)] - r).abs()).collect();
            }
            finish(SolveStatus::Optimal, Some(sol), obj, obj, stats, started)
        }
    };
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{build_problem, validate_solution, SystemState, TrainPos};

    fn single_train_doc() -> (crate::network::Network, Vec<crate::network::TrainSpec>) {
        crate::network::load_network(
            r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":2},{"id":"c","slots":"inf"}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"},
                      {"id":"bc","between":["b","c"],"kind":"single"}],
            "trains": [{"id":"t","path":["a","b","c"],"travel_min":[5.0,10.0]}]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn earliest_times_chain() {
        let (net, trains) = single_train_doc();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![2]).unwrap();
        let r = solve(&p, &SolverConfig::default(), None, None).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let sol = r.incumbent.unwrap();
        assert!((sol.y[0][0] - 0.0).abs() < 1e-9);
        assert!((sol.y[0][1] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn earliest_times_scaled_first_edge() {
        let (net, trains) = single_train_doc();
        let state = SystemState {
            positions: vec![TrainPos { progress: 0, edge_fraction: 0.4, slot: None, arrived: false }],
        };
        let p = build_problem(0.0, &net, &trains, &state, &vec![2]).unwrap();
        let r = solve(&p, &SolverConfig::default(), None, None).unwrap();
        let sol = r.incumbent.unwrap();
        assert!((sol.y[0][0] - 0.0).abs() < 1e-9);
        assert!((sol.y[0][1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn positive_cycle_witness_on_contradictory_orders() {
        // Two trains crossing one single edge in opposite directions; fixing
        // both "goes first" orders is a contradiction.
        let mut g = ConstraintGraph::new(2);
        g.ge(0, 1, 10.0);
        g.ge(1, 0, 10.0);
        match earliest_times(&g) {
            EarliestTimes::PositiveCycle(c) => assert!(c.len() >= 2),
            EarliestTimes::Feasible(_) => panic!("expected a positive cycle"),
        }
    }

    #[test]
    fn single_train_objective_is_truncated_travel() {
        let (net, trains) = single_train_doc();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![2]).unwrap();
        let r = solve(&p, &SolverConfig::default(), None, None).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - 5.0).abs() < 1e-9);
        let b = enumerate_bruteforce(&p).unwrap();
        assert!((b.objective.unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn two_crossing_trains_match_bruteforce() {
        let (net, trains) = crate::network::load_network(
            r#"{
            "nodes": [{"id":"a","slots":2},{"id":"b","slots":2}],
            "edges": [{"id":"ab","between":["a","b"],"kind":"single"}],
            "trains": [{"id":"x","path":["a","b"],"travel_min":[10.0]},
                       {"id":"y","path":["b","a"],"travel_min":[10.0]}]
        }"#,
        )
        .unwrap();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![1, 1]).unwrap();
        let cfg = SolverConfig { gap_target: 0.0, ..Default::default() };
        let r = solve(&p, &cfg, None, None).unwrap();
        let b = enumerate_bruteforce(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective.unwrap() - b.objective.unwrap()).abs() < 1e-6);
        assert!(validate_solution(&p, r.incumbent.as_ref().unwrap()).unwrap().is_empty());
    }

    #[test]
    fn merge_corridor_short_horizons_solve_and_validate() {
        let (net, trains) = fixtures::merge_corridor();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 2, 2]).unwrap();
        let cfg = SolverConfig { gap_target: 0.0, ..Default::default() };
        let r = solve(&p, &cfg, None, None).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        let sol = r.incumbent.as_ref().unwrap();
        assert!(validate_solution(&p, sol).unwrap().is_empty(), "optimal incumbent validates");
        let b = enumerate_bruteforce(&p).unwrap();
        assert!((r.objective.unwrap() - b.objective.unwrap()).abs() < 1e-6);
        assert!((r.objective.unwrap() - 25.0).abs() < 1e-6);
    }

    /// State after running the short-horizon schedule to completion: T1
    /// arrived at the station, T3 parked in its other slot, T2 wedged at n4.
    fn merge_corridor_wedged() -> (crate::network::Network, Vec<crate::network::TrainSpec>, SystemState)
    {
        let (net, trains) = fixtures::merge_corridor();
        let state = SystemState {
            positions: vec![
                TrainPos { progress: 3, edge_fraction: 0.0, slot: None, arrived: true },
                TrainPos { progress: 2, edge_fraction: 0.0, slot: Some(0), arrived: false },
                TrainPos { progress: 2, edge_fraction: 0.0, slot: Some(0), arrived: false },
            ],
        };
        (net, trains, state)
    }

    #[test]
    fn wedged_state_full_horizons_infeasible() {
        let (net, trains, state) = merge_corridor_wedged();
        let p = build_problem(0.0, &net, &trains, &state, &vec![0, 2, 4]).unwrap();
        let r = solve(&p, &SolverConfig::default(), None, None).unwrap();
        assert_eq!(r.status, SolveStatus::Infeasible);
        let b = enumerate_bruteforce(&p).unwrap();
        assert_eq!(b.status, SolveStatus::Infeasible);
    }

    #[test]
    fn lower_bound_relaxation_examples() {
        let (net, trains) = fixtures::merge_corridor();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 2, 2]).unwrap();
        let empty = lower_bound(&p, &PartialAssignment::default()).unwrap();
        let b = enumerate_bruteforce(&p).unwrap();
        assert!(empty <= b.objective.unwrap() + 1e-9);
        // Fully fixing to the optimal assignment reproduces its objective.
        let best = b.incumbent.unwrap();
        let full = PartialAssignment::from_solution(&p, &best);
        let exact = lower_bound(&p, &full).unwrap();
        assert!((exact - b.objective.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn incumbents_improve_monotonically_and_deterministically() {
        let (net, trains) = fixtures::merge_corridor();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 4, 6]).unwrap();
        let cfg = SolverConfig { gap_target: 0.0, ..Default::default() };
        let mut seen: Vec<f64> = Vec::new();
        let r1 = solve_observed(&p, &cfg, None, None, &mut |obj, _| seen.push(obj)).unwrap();
        assert_eq!(r1.status, SolveStatus::Optimal);
        assert!(!seen.is_empty());
        for w in seen.windows(2) {
            assert!(w[1] < w[0], "incumbent objectives strictly decrease");
        }
        let r2 = solve(&p, &cfg, None, None).unwrap();
        assert_eq!(r1.stats.nodes_explored, r2.stats.nodes_explored);
        assert_eq!(r1.stats.leaf_solves, r2.stats.leaf_solves);
        assert_eq!(r1.incumbent, r2.incumbent);
    }

    #[test]
    fn first_feasible_incumbent_validates() {
        let (net, trains) = fixtures::merge_corridor();
        let state = fixtures::at_origins(&trains);
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 4, 6]).unwrap();
        let r = solve(&p, &SolverConfig::default().first_feasible(), None, None).unwrap();
        let sol = r.incumbent.expect("feasible problem yields an incumbent");
        assert!(validate_solution(&p, &sol).unwrap().is_empty());
    }

    #[test]
    fn forced_contradiction_is_reported() {
        let (net, trains) = fixtures::merge_corridor();
        let mut state = fixtures::at_origins(&trains);
        // T1 rolling on its first edge: it owns that edge by initial condition.
        state.positions[0].edge_fraction = 0.3;
        state.positions[0].slot = None;
        let p = build_problem(0.0, &net, &trains, &state, &vec![3, 4, 6]).unwrap();
        let e13 = net.edge_idx("e1-3").unwrap();
        let mut forced = PartialAssignment::default();
        forced.bins.insert(crate::model::BinKey::Edge(0, 2, e13), false);
        match solve(&p, &SolverConfig::default(), None, Some(&forced)) {
            Err(Error::ForcedInfeasible) => {}
            other => panic!("expected ForcedInfeasible, got {:?}", other.map(|r| r.status)),
        }
    }
}
