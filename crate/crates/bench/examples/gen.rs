use railsched_bench::{generate_instance, synthetic_network_27};
use railsched_core::control::solve_timewise;
use railsched_core::model::{build_problem, remaining_stages};
use railsched_core::safety::compute_safe_horizon;
use railsched_core::solver::SolverConfig;

fn main() {
    let net = synthetic_network_27();
    let cfg = SolverConfig { time_limit: 10.0, gap_target: 0.05, rng_seed: 3 };
    for seed in 0..100u64 {
        let inst = generate_instance(&net, 10, 70_000 + seed).unwrap();
        let full: Vec<usize> = inst
            .trains
            .iter()
            .zip(&inst.state.positions)
            .map(|(t, p)| remaining_stages(t, p))
            .collect();
        let target = compute_safe_horizon(0.0, &net, &inst.trains, &inst.state, &cfg, Some(full))
            .unwrap()
            .horizons;
        let _p = build_problem(0.0, &net, &inst.trains, &inst.state, &target).unwrap();
        for (label, window, relax) in [
            ("timewise-30", 30.0_f64, false),
            ("timewise-30-relax", 30.0, true),
            ("timewise-60", 60.0, false),
            ("timewise-60-relax", 60.0, true),
        ] {
            match solve_timewise(
                0.0, &net, &inst.trains, &inst.state, &target, window, 15.0, relax, &cfg,
            ) {
                Ok(_) => {}
                Err(e) => {
                    println!("seed {seed} {label}: {e}");
                    return;
                }
            }
        }
    }
    println!("all clean");
}
