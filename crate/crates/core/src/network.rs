//! Railway graph, train paths and travel times.
//!
//! The network is a plain undirected graph. Nodes carry a slot count (how
//! many trains may dwell there at once, `inf` at terminal yards), edges are
//! single or double track. A train's route is a predetermined node path;
//! path selection is not part of the scheduling problem.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeIdx = usize;
pub type EdgeIdx = usize;
pub type TrainIdx = usize;

/// Node capacity. `Infinite` compares greater than any finite count and is
/// never used in arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotCount {
    Finite(u32),
    Infinite,
}

impl SlotCount {
    pub fn is_infinite(&self) -> bool {
        matches!(self, SlotCount::Infinite)
    }

    /// Finite count, if any.
    pub fn finite(&self) -> Option<u32> {
        match self {
            SlotCount::Finite(n) => Some(*n),
            SlotCount::Infinite => None,
        }
    }

    pub fn at_least(&self, n: u32) -> bool {
        match self {
            SlotCount::Finite(c) => *c >= n,
            SlotCount::Infinite => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Single,
    Double,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: String,
    pub slots: SlotCount,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: String,
    pub a: NodeIdx,
    pub b: NodeIdx,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn other(&self, n: NodeIdx) -> Option<NodeIdx> {
        if n == self.a {
            Some(self.b)
        } else if n == self.b {
            Some(self.a)
        } else {
            None
        }
    }

    pub fn joins(&self, x: NodeIdx, y: NodeIdx) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }
}

/// The railway graph together with the train fleet operating on it.
#[derive(Debug, Clone, Default)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    adjacency: Vec<Vec<EdgeIdx>>,
    node_lookup: HashMap<String, NodeIdx>,
    edge_lookup: HashMap<String, EdgeIdx>,
}

impl Network {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Network> {
        let mut node_lookup = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if node_lookup.insert(n.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(n.id.clone()));
            }
        }
        let mut edge_lookup = HashMap::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            if edge_lookup.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if e.a == e.b {
                return Err(Error::Schema(format!("edge {} joins a node to itself", e.id)));
            }
            for other in &edges[..i] {
                if other.joins(e.a, e.b) && other.kind == e.kind {
                    return Err(Error::DuplicateId(e.id.clone()));
                }
            }
            adjacency[e.a].push(i);
            adjacency[e.b].push(i);
        }
        Ok(Network { nodes, edges, adjacency, node_lookup, edge_lookup })
    }

    pub fn node_idx(&self, id: &str) -> Option<NodeIdx> {
        self.node_lookup.get(id).copied()
    }

    pub fn node_id(&self, idx: NodeIdx) -> &str {
        &self.nodes[idx].id
    }

    pub fn edge_idx(&self, id: &str) -> Option<EdgeIdx> {
        self.edge_lookup.get(id).copied()
    }

    pub fn slots(&self, n: NodeIdx) -> SlotCount {
        self.nodes[n].slots
    }

    pub fn incident(&self, n: NodeIdx) -> &[EdgeIdx] {
        &self.adjacency[n]
    }

    /// Edge joining two nodes, preferring single track when both exist.
    pub fn edge_between(&self, x: NodeIdx, y: NodeIdx) -> Option<EdgeIdx> {
        self.adjacency[x].iter().copied().find(|&e| self.edges[e].joins(x, y))
    }
}

/// A train with its predetermined route and per-edge travel times (minutes).
#[derive(Debug, Clone)]
pub struct TrainSpec {
    pub id: String,
    /// Node path from origin to destination, length `stages() + 1`.
    pub node_path: Vec<NodeIdx>,
    /// Edge path, `edge_path[k]` joins `node_path[k]` and `node_path[k+1]`.
    pub edge_path: Vec<EdgeIdx>,
    pub travel_times: Vec<f64>,
}

impl TrainSpec {
    pub fn new(
        network: &Network,
        id: &str,
        node_path: Vec<NodeIdx>,
        travel_times: Vec<f64>,
    ) -> Result<TrainSpec> {
        let edge_path = derive_edge_path(network, &node_path)?;
        if travel_times.len() != edge_path.len() {
            return Err(Error::Schema(format!(
                "train {}: {} travel times for {} edges",
                id,
                travel_times.len(),
                edge_path.len()
            )));
        }
        if travel_times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
            return Err(Error::Schema(format!("train {}: travel times must be positive", id)));
        }
        // Revisiting a node would make stage indices ambiguous.
        let mut seen = node_path.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != node_path.len() {
            return Err(Error::Schema(format!("train {}: path revisits a node", id)));
        }
        Ok(TrainSpec { id: id.to_string(), node_path, edge_path, travel_times })
    }

    /// Number of transit stages to the destination.
    pub fn stages(&self) -> usize {
        self.edge_path.len()
    }

    pub fn destination(&self) -> NodeIdx {
        *self.node_path.last().expect("path is nonempty")
    }

    /// Index of the given node in the node path.
    pub fn node_stage(&self, n: NodeIdx) -> Result<usize> {
        self.node_path.iter().position(|&x| x == n).ok_or(Error::NotOnPath)
    }

    /// Index of the given edge in the edge path.
    pub fn edge_stage(&self, e: EdgeIdx) -> Result<usize> {
        self.edge_path.iter().position(|&x| x == e).ok_or(Error::NotOnPath)
    }
}

/// Item addressed by `stage_index`.
#[derive(Debug, Clone, Copy)]
pub enum PathItem {
    Node(NodeIdx),
    Edge(EdgeIdx),
}

/// First occurrence index of a node or edge on the train's path.
pub fn stage_index(train: &TrainSpec, item: PathItem) -> Result<usize> {
    match item {
        PathItem::Node(n) => train.node_stage(n),
        PathItem::Edge(e) => train.edge_stage(e),
    }
}

/// Resolve a node sequence into the edge sequence joining consecutive nodes.
pub fn derive_edge_path(network: &Network, node_path: &[NodeIdx]) -> Result<Vec<EdgeIdx>> {
    let mut edges = Vec::with_capacity(node_path.len().saturating_sub(1));
    for (k, pair) in node_path.windows(2).enumerate() {
        if pair[0] == pair[1] {
            return Err(Error::NonAdjacentPair(k));
        }
        let e = network.edge_between(pair[0], pair[1]).ok_or(Error::NonAdjacentPair(k))?;
        edges.push(e);
    }
    Ok(edges)
}

// --- JSON schema ------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: String,
    slots: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    id: String,
    between: [String; 2],
    kind: EdgeKind,
}

#[derive(Serialize, Deserialize)]
struct TrainJson {
    id: String,
    path: Vec<String>,
    travel_min: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    nodes: Vec<NodeJson>,
    edges: Vec<EdgeJson>,
    #[serde(default)]
    trains: Vec<TrainJson>,
}

fn slots_from_json(v: &serde_json::Value) -> Result<SlotCount> {
    match v {
        serde_json::Value::String(s) if s == "inf" => Ok(SlotCount::Infinite),
        serde_json::Value::Number(n) => {
            let c = n.as_u64().ok_or_else(|| Error::Schema("slots must be a positive integer".into()))?;
            if c < 1 {
                return Err(Error::Schema("slots must be >= 1".into()));
            }
            Ok(SlotCount::Finite(c as u32))
        }
        _ => Err(Error::Schema("slots must be an integer or \"inf\"".into())),
    }
}

/// Parse and validate a network plus fleet from its JSON document.
pub fn load_network(text: &str) -> Result<(Network, Vec<TrainSpec>)> {
    let doc: NetworkJson =
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let mut nodes = Vec::with_capacity(doc.nodes.len());
    for n in &doc.nodes {
        nodes.push(Node { id: n.id.clone(), slots: slots_from_json(&n.slots)? });
    }
    let mut lookup = HashMap::new();
    for (i, n) in nodes.iter().enumerate() {
        if lookup.insert(n.id.clone(), i).is_some() {
            return Err(Error::DuplicateId(n.id.clone()));
        }
    }
    let mut edges = Vec::with_capacity(doc.edges.len());
    for e in &doc.edges {
        let a = *lookup.get(&e.between[0]).ok_or_else(|| Error::DanglingEndpoint(e.between[0].clone()))?;
        let b = *lookup.get(&e.between[1]).ok_or_else(|| Error::DanglingEndpoint(e.between[1].clone()))?;
        edges.push(Edge { id: e.id.clone(), a, b, kind: e.kind });
    }
    let network = Network::new(nodes, edges)?;
    let mut trains = Vec::with_capacity(doc.trains.len());
    let mut train_ids = HashMap::new();
    for t in &doc.trains {
        if train_ids.insert(t.id.clone(), ()).is_some() {
            return Err(Error::DuplicateId(t.id.clone()));
        }
        let mut path = Vec::with_capacity(t.path.len());
        for id in &t.path {
            path.push(network.node_idx(id).ok_or_else(|| Error::DanglingEndpoint(id.clone()))?);
        }
        if path.len() < 2 {
            return Err(Error::Schema(format!("train {}: path needs at least two nodes", t.id)));
        }
        trains.push(TrainSpec::new(&network, &t.id, path, t.travel_min.clone())?);
    }
    // Infinite capacity is reserved for nodes that terminate at least one route.
    if !trains.is_empty() {
        for (i, n) in network.nodes.iter().enumerate() {
            if n.slots.is_infinite() && !trains.iter().any(|t| t.destination() == i) {
                return Err(Error::Schema(format!(
                    "node {} has infinite slots but is no train's terminal",
                    n.id
                )));
            }
        }
    }
    Ok((network, trains))
}

/// Serialize a network and fleet back to the JSON document form.
pub fn network_to_json(network: &Network, trains: &[TrainSpec]) -> String {
    let doc = NetworkJson {
        nodes: network
            .nodes
            .iter()
            .map(|n| NodeJson {
                id: n.id.clone(),
                slots: match n.slots {
                    SlotCount::Finite(c) => serde_json::json!(c),
                    SlotCount::Infinite => serde_json::json!("inf"),
                },
            })
            .collect(),
        edges: network
            .edges
            .iter()
            .map(|e| EdgeJson {
                id: e.id.clone(),
                between: [network.node_id(e.a).to_string(), network.node_id(e.b).to_string()],
                kind: e.kind,
            })
            .collect(),
        trains: trains
            .iter()
            .map(|t| TrainJson {
                id: t.id.clone(),
                path: t.node_path.iter().map(|&n| network.node_id(n).to_string()).collect(),
                travel_min: t.travel_times.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("network serializes")
}
