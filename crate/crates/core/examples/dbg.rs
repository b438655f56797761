//! Randomized cross-check: exact search vs exhaustive enumeration.
use rand::prelude::*;
use rand::rngs::StdRng;
use railsched_core::fixtures;
use railsched_core::model::{
    build_problem, validate_solution, validate_state, SystemState, TrainPos,
};
use railsched_core::solver::*;

fn main() {
    let (net, trains) = fixtures::merge_corridor();
    let mut rng = StdRng::seed_from_u64(7);
    let mut agree = 0;
    let mut infeasible = 0;
    for trial in 0..400 {
        let state = SystemState {
            positions: trains
                .iter()
                .map(|t| {
                    let progress = rng.gen_range(0..t.stages());
                    let on_edge = progress + 1 < t.stages() && rng.gen_bool(0.2);
                    TrainPos {
                        progress,
                        edge_fraction: if on_edge { rng.gen_range(0.1..0.9) } else { 0.0 },
                        slot: if on_edge { None } else { Some(rng.gen_range(0..2)) },
                        arrived: false,
                    }
                })
                .collect(),
        };
        if validate_state(&net, &trains, &state).is_err() {
            continue;
        }
        let horizons: Vec<usize> = trains
            .iter()
            .zip(&state.positions)
            .map(|(t, p)| rng.gen_range(1..=(t.stages() - p.progress)))
            .collect();
        let p = match build_problem(0.0, &net, &trains, &state, &horizons) {
            Ok(p) => p,
            Err(_) => continue,
        };
        if p.free_bins() > 18 {
            continue;
        }
        let b = match enumerate_bruteforce(&p) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let cfg = SolverConfig { gap_target: 0.0, ..Default::default() };
        let r = solve(&p, &cfg, None, None).unwrap();
        match (b.status, r.status) {
            (SolveStatus::Infeasible, SolveStatus::Infeasible) => {
                infeasible += 1;
                agree += 1;
            }
            (SolveStatus::Optimal, SolveStatus::Optimal) => {
                let (bo, ro) = (b.objective.unwrap(), r.objective.unwrap());
                if (bo - ro).abs() > 1e-6 {
                    println!("trial {trial}: MISMATCH oracle {bo} solver {ro}");
                    println!("  state: {:?}", state.positions);
                    println!("  horizons: {:?}", horizons);
                    std::process::exit(1);
                }
                let sol = r.incumbent.as_ref().unwrap();
                let v = validate_solution(&p, sol).unwrap();
                if !v.is_empty() {
                    println!("trial {trial}: incumbent INVALID: {:?}", v);
                    println!("  state: {:?}", state.positions);
                    println!("  horizons: {:?}", horizons);
                    println!("  y: {:?}", sol.y);
                    std::process::exit(1);
                }
                agree += 1;
            }
            other => {
                println!("trial {trial}: status mismatch {:?}", other);
                std::process::exit(1);
            }
        }
    }
    println!("agree {agree} (infeasible {infeasible})");
}
