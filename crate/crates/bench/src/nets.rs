//! Bundled benchmark networks.
//!
//! The 27-node network follows the published capacity legend: one-slot meet
//! points alternating with two-slot passing loops along a main corridor, a
//! branch line, and open-ended terminal yards. The 69-node network is a
//! stand-in of comparable scale for the freight system whose exact data is
//! not public; both are approximations documented as such, and experiments
//! depend on the traffic regime rather than the exact layout.

use railsched_core::network::{Edge, EdgeKind, Network, Node, NodeIdx, SlotCount};

struct Builder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl Builder {
    fn new() -> Builder {
        Builder { nodes: Vec::new(), edges: Vec::new() }
    }

    fn node(&mut self, id: &str, slots: SlotCount) -> NodeIdx {
        self.nodes.push(Node { id: id.to_string(), slots });
        self.nodes.len() - 1
    }

    fn edge(&mut self, a: NodeIdx, b: NodeIdx, kind: EdgeKind) {
        let id = format!("{}--{}", self.nodes[a].id, self.nodes[b].id);
        self.edges.push(Edge { id, a, b, kind });
    }

    /// Append an alternating passing-loop/meet-point chain after `from`,
    /// ending with a final two-slot loop. Returns the last node.
    fn chain(&mut self, from: NodeIdx, prefix: &str, pairs: usize, kind: EdgeKind) -> NodeIdx {
        let mut prev = from;
        for k in 0..pairs {
            let loop_ = self.node(&format!("{prefix}a{}", k + 1), SlotCount::Finite(2));
            self.edge(prev, loop_, kind);
            let meet = self.node(&format!("{prefix}m{}", k + 1), SlotCount::Finite(1));
            self.edge(loop_, meet, kind);
            prev = meet;
        }
        let last = self.node(&format!("{prefix}a{}", pairs + 1), SlotCount::Finite(2));
        self.edge(prev, last, kind);
        last
    }

    fn build(self) -> Network {
        Network::new(self.nodes, self.edges).expect("bundled network is well formed")
    }
}

/// Synthetic 27-node benchmark network: a west-east corridor between two
/// yards with a branch to a third, meet points holding one train and
/// passing loops holding two.
pub fn synthetic_network_27() -> Network {
    let mut b = Builder::new();
    let west = b.node("west", SlotCount::Infinite);
    // west corridor half: a1 m1 a2 m2 a3 m3 a4
    let a4 = b.chain(west, "w", 3, EdgeKind::Single);
    // junction loop in the middle
    let hub = b.node("hub", SlotCount::Finite(2));
    b.edge(a4, hub, EdgeKind::Single);
    // east corridor half: m4 a5 m5 a6 m6 a7
    let m4 = b.node("em0", SlotCount::Finite(1));
    b.edge(hub, m4, EdgeKind::Single);
    let a7 = b.chain(m4, "e", 2, EdgeKind::Single);
    let east = b.node("east", SlotCount::Infinite);
    b.edge(a7, east, EdgeKind::Double);
    // branch from the hub to the south yard: b1 p1 ... b5 p5
    let p5 = b.chain(hub, "s", 4, EdgeKind::Single);
    let m_last = b.node("sm5", SlotCount::Finite(1));
    b.edge(p5, m_last, EdgeKind::Single);
    let south = b.node("south", SlotCount::Infinite);
    b.edge(m_last, south, EdgeKind::Double);
    let net = b.build();
    debug_assert_eq!(net.nodes.len(), 27);
    net
}

/// Stand-in 69-node network of the same flavor at freight-system scale:
/// one long trunk between two yards and two branch lines to further yards.
pub fn synthetic_network_69() -> Network {
    let mut b = Builder::new();
    let west = b.node("west", SlotCount::Infinite);
    let t1 = b.chain(west, "w", 5, EdgeKind::Single); // 11 nodes
    let hub1 = b.node("hub1", SlotCount::Finite(2));
    b.edge(t1, hub1, EdgeKind::Single);
    let m = b.node("tm0", SlotCount::Finite(1));
    b.edge(hub1, m, EdgeKind::Single);
    let t2 = b.chain(m, "c", 4, EdgeKind::Single); // 9 nodes
    let hub2 = b.node("hub2", SlotCount::Finite(2));
    b.edge(t2, hub2, EdgeKind::Single);
    let m2 = b.node("tm1", SlotCount::Finite(1));
    b.edge(hub2, m2, EdgeKind::Single);
    let t3 = b.chain(m2, "e", 4, EdgeKind::Single); // 9 nodes
    let east = b.node("east", SlotCount::Infinite);
    b.edge(t3, east, EdgeKind::Double);
    // north branch from hub1
    let n_end = b.chain(hub1, "n", 5, EdgeKind::Single); // 11 nodes
    let north = b.node("north", SlotCount::Infinite);
    b.edge(n_end, north, EdgeKind::Double);
    // long south branch from hub2
    let s_end = b.chain(hub2, "s", 10, EdgeKind::Single); // 21 nodes
    let south = b.node("south", SlotCount::Infinite);
    b.edge(s_end, south, EdgeKind::Double);
    let net = b.build();
    assert_eq!(net.nodes.len(), 69);
    net
}

/// Look up a bundled network by name.
pub fn bundled(name: &str) -> Option<Network> {
    match name {
        "synthetic-27" => Some(synthetic_network_27()),
        "synthetic-69" => Some(synthetic_network_69()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts() {
        assert_eq!(synthetic_network_27().nodes.len(), 27);
        assert_eq!(synthetic_network_69().nodes.len(), 69);
    }

    #[test]
    fn has_open_terminals() {
        let net = synthetic_network_27();
        let inf = net.nodes.iter().filter(|n| n.slots.is_infinite()).count();
        assert_eq!(inf, 3);
    }

    #[test]
    fn one_slot_nodes_sit_between_roomier_neighbours() {
        for net in [synthetic_network_27(), synthetic_network_69()] {
            for (i, n) in net.nodes.iter().enumerate() {
                if n.slots == SlotCount::Finite(1) {
                    for &e in net.incident(i) {
                        let other = net.edges[e].other(i).unwrap();
                        assert!(
                            net.slots(other).at_least(2),
                            "meet point {} borders another tight node",
                            n.id
                        );
                    }
                }
            }
        }
    }
}
