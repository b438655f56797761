//! Small bundled scenarios used across tests and the documentation.
//!
//! All three share one nine-node network: a main line `n0 - n1 - n3 - n4 -
//! n5 - n6 - n7` with a branch `n2 - n3` feeding the junction, a yard `n8`
//! reachable from both `n5` and `n7`, and a shortcut `n4 - n8`. Junctions
//! `n3`, `n4` hold one train; the station `n5` and the yard `n8` hold two;
//! `n0` is an open terminal.

use crate::model::{SystemState, TrainPos};
use crate::network::{load_network, Network, TrainSpec};

const NETWORK_JSON: &str = r#"{
  "nodes": [
    {"id": "n0", "slots": "inf"},
    {"id": "n1", "slots": 1},
    {"id": "n2", "slots": 1},
    {"id": "n3", "slots": 1},
    {"id": "n4", "slots": 1},
    {"id": "n5", "slots": 2},
    {"id": "n6", "slots": 1},
    {"id": "n7", "slots": 1},
    {"id": "n8", "slots": 2}
  ],
  "edges": [
    {"id": "e0-1", "between": ["n0", "n1"], "kind": "single"},
    {"id": "e1-3", "between": ["n1", "n3"], "kind": "single"},
    {"id": "e2-3", "between": ["n2", "n3"], "kind": "single"},
    {"id": "e3-4", "between": ["n3", "n4"], "kind": "single"},
    {"id": "e4-5", "between": ["n4", "n5"], "kind": "single"},
    {"id": "e5-6", "between": ["n5", "n6"], "kind": "single"},
    {"id": "e6-7", "between": ["n6", "n7"], "kind": "single"},
    {"id": "e5-8", "between": ["n5", "n8"], "kind": "single"},
    {"id": "e7-8", "between": ["n7", "n8"], "kind": "single"},
    {"id": "e4-8", "between": ["n4", "n8"], "kind": "single"}
  ],
  "trains": %TRAINS%
}"#;

fn with_trains(trains_json: &str) -> (Network, Vec<TrainSpec>) {
    let doc = NETWORK_JSON.replace("%TRAINS%", trains_json);
    load_network(&doc).expect("bundled fixture is valid")
}

/// Two trains merging from separate branches toward the station, a third
/// crossing the whole corridor in the opposite direction. The classic
/// configuration where short horizons drive the system into a deadlock.
pub fn merge_corridor() -> (Network, Vec<TrainSpec>) {
    with_trains(
        r#"[
        {"id": "T1", "path": ["n1", "n3", "n4", "n5"],
         "travel_min": [5.0, 5.0, 5.0]},
        {"id": "T2", "path": ["n2", "n3", "n4", "n5", "n8"],
         "travel_min": [5.0, 5.0, 5.0, 5.0]},
        {"id": "T3", "path": ["n7", "n6", "n5", "n4", "n3", "n1", "n0"],
         "travel_min": [5.0, 5.0, 5.0, 5.0, 5.0, 5.0]}
    ]"#,
    )
}

/// Same start nodes, but T1 continues around to the yard the long way and
/// T2 takes the shortcut through the yard before parking at the station.
/// Used to exercise horizon regression and stale precedence reuse.
pub fn loop_crossing() -> (Network, Vec<TrainSpec>) {
    with_trains(
        r#"[
        {"id": "T1", "path": ["n1", "n3", "n4", "n5", "n6", "n7", "n8"],
         "travel_min": [5.0, 5.0, 5.0, 5.0, 5.0, 5.0]},
        {"id": "T2", "path": ["n2", "n3", "n4", "n8", "n7", "n6", "n5"],
         "travel_min": [10.0, 5.0, 5.0, 5.0, 5.0, 5.0]},
        {"id": "T3", "path": ["n7", "n6", "n5", "n4", "n3", "n1", "n0"],
         "travel_min": [3.0, 5.0, 5.0, 5.0, 5.0, 5.0]}
    ]"#,
    )
}

/// Trains running down the corridor against one climbing it, with the
/// station as the only passing opportunity. Used for warm-start guards.
pub fn counterflow() -> (Network, Vec<TrainSpec>) {
    with_trains(
        r#"[
        {"id": "T1", "path": ["n6", "n5", "n4", "n3", "n1", "n0"],
         "travel_min": [5.0, 5.0, 5.0, 5.0, 5.0]},
        {"id": "T2", "path": ["n7", "n6", "n5", "n4", "n3", "n2"],
         "travel_min": [5.0, 5.0, 5.0, 5.0, 5.0]},
        {"id": "T3", "path": ["n1", "n3", "n4", "n5"],
         "travel_min": [5.0, 5.0, 5.0]}
    ]"#,
    )
}

/// State with every train dwelling at the first node of its path, slot 0.
pub fn at_origins(trains: &[TrainSpec]) -> SystemState {
    SystemState {
        positions: trains
            .iter()
            .map(|_| TrainPos { progress: 0, edge_fraction: 0.0, slot: Some(0), arrived: false })
            .collect(),
    }
}
