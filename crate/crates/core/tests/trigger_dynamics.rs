//! Long-run behaviour of the trigger on small continuing MDPs.

use ebdq::acceptance::{toy_config, TOY_GAMMA};
use ebdq::harness::{simulate_run, RunOptions};
use ebdq::mdp::{three_state_toy, three_state_toy_with_quiet_rows};
use ebdq::oracle::transition_distance;

const TICKS: u64 = 200_000;
const WINDOW: u64 = 50_000;

fn opts() -> RunOptions {
    RunOptions {
        log_transitions_from: Some(TICKS - WINDOW + 1),
        ..Default::default()
    }
}

#[test]
fn trigger_deletes_low_error_transitions() {
    let mdp = three_state_toy();
    let run = simulate_run(&toy_config(0.9, 0.05, TICKS, 1), &mdp, 0, &opts());
    let counter = run.transitions.unwrap();
    let est = counter.estimate(&mdp, 100).unwrap();
    assert!(est.fallback_rows.is_empty() && est.sparse_rows.is_empty());
    assert!(counter.total_transmitted() < counter.total_observed());
    assert!(transition_distance(&mdp, &est.p_tilde).unwrap().entrywise > 0.05);
}

#[test]
fn deterministic_row_goes_quiet() {
    // Once the stochastic rows keep L well above the absolute floor, a
    // deterministic row whose error sits inside rho * L stops transmitting
    // and its learner entry freezes.
    let mdp = three_state_toy_with_quiet_rows();
    let cfg = toy_config(0.9, 0.05, TICKS, 1);
    let run = simulate_run(&cfg, &mdp, 0, &opts());
    let counter = run.transitions.unwrap();
    assert_eq!(counter.transmitted(1, 0, 2), 0);
    let est = counter.estimate(&mdp, 100).unwrap();
    assert!(est.fallback_rows.contains(&(1, 0)) || est.sparse_rows.contains(&(1, 0)));

    let q = &run.final_q;
    let residual = (mdp.reward(1, 0) + TOY_GAMMA * q.max_value(2) - q.get(1, 0)).abs();
    let l_max = run.final_surrogates.iter().copied().fold(0.0, f64::max);
    assert!(residual > 1e-3);
    assert!(residual <= (cfg.rho * l_max).max(cfg.eps_threshold) + 0.02);
}
