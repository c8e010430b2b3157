//! Acceptance property suite.
//!
//! Each criterion builds its own experiment, runs it and reports a single
//! pass/fail line. Tolerances are fixed constants below. Heavy runs shared
//! by several criteria are computed once per process.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::RunMetrics;
use crate::harness::output::render_outputs;
use crate::harness::p_tilde::DEFAULT_MIN_COUNT;
use crate::harness::run_experiment_on;
use crate::harness::sim::{simulate_run, simulate_run_vanilla, RunOptions, RunOutcome};
use crate::learner::LearnMode;
use crate::mdp::{build_frozen_lake, three_state_toy, GridSpec, Mdp};
use crate::oracle::{bellman_backup, biased_gap, l_star, solve_fixed_point, solve_q_star};
use crate::qtable::{sup_dist, sup_dist_masked, QTable};
use crate::rng;

pub const LAKE6: &str = include_str!("../layouts/lake6.txt");
pub const LAKE10: &str = include_str!("../layouts/lake10.txt");
pub const LAKE18: &str = include_str!("../layouts/lake18.txt");

/// Oracle stopping tolerance used by every criterion.
pub const ORACLE_TOL: f64 = 1e-6;
pub const CONVERGENCE_TOL: f64 = 0.1;
pub const EVENT_RATE_FRACTION: f64 = 0.01;
pub const EVENT_RATE_WINDOW: usize = 1000;
pub const COMM_RATIO_MAX: f64 = 0.6;
pub const REWARD_GAP_MAX: f64 = 1.0;
pub const SURROGATE_WINDOW: u64 = 10_000;
pub const SURROGATE_DET_MAX: f64 = 0.05;
pub const SURROGATE_SLACK: f64 = 0.05;
pub const CONTRACTION_SLACK: f64 = 1e-12;
pub const FIXED_POINT_TOL: f64 = 0.1;

pub const ALL: [u32; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{tag}] criterion {} ({}): {}",
            self.id, self.name, self.detail
        )
    }
}

fn lake(layout: &str, slip: f64) -> Mdp {
    let spec = GridSpec::parse_layout(layout).expect("embedded layout parses");
    build_frozen_lake(&spec.with_slip(slip)).expect("embedded layout builds")
}

pub fn lake6() -> Mdp {
    lake(LAKE6, 0.0)
}

pub fn lake10_slippery() -> Mdp {
    lake(LAKE10, 0.3)
}

/// Deterministic 6x6 setting shared by criteria 1, 2, 3 and 5.
fn det_config(rho: f64, eps_threshold: f64, n_runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_agents: 8,
        mode: LearnMode::Synchronous,
        rho,
        eps_threshold,
        alpha: 0.01,
        gamma: 0.97,
        ticks: 200_000,
        eval_every: 0,
        n_runs,
        ..Default::default()
    }
}

struct DetSetting {
    mdp: Mdp,
    q_star: QTable,
    mask: Vec<bool>,
}

fn det_setting() -> &'static DetSetting {
    static CELL: OnceLock<DetSetting> = OnceLock::new();
    CELL.get_or_init(|| {
        let mdp = lake6();
        let q_star = solve_q_star(&mdp, 0.97, ORACLE_TOL)
            .expect("oracle converges")
            .q_star;
        let mask = mdp.reachable_pairs();
        DetSetting { mdp, q_star, mask }
    })
}

fn det_runs(rho: f64, eps_threshold: f64, n_runs: usize) -> Vec<RunOutcome> {
    let DetSetting { mdp, .. } = det_setting();
    let cfg = det_config(rho, eps_threshold, n_runs);
    let opts = RunOptions {
        surrogate_window: SURROGATE_WINDOW,
        ..Default::default()
    };
    (0..n_runs)
        .into_par_iter()
        .map(|i| simulate_run(&cfg, mdp, i, &opts))
        .collect()
}

fn vanilla_det_run() -> &'static RunOutcome {
    static CELL: OnceLock<RunOutcome> = OnceLock::new();
    CELL.get_or_init(|| det_runs(0.0, 0.0, 1).remove(0))
}

fn gated_det_runs() -> &'static [RunOutcome] {
    static CELL: OnceLock<Vec<RunOutcome>> = OnceLock::new();
    CELL.get_or_init(|| det_runs(0.9, 0.01, 5))
}

fn det_error(run: &RunOutcome) -> f64 {
    let s = det_setting();
    sup_dist_masked(&run.final_q, &s.q_star, &s.mask).expect("shapes match")
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn criterion_1() -> CriterionResult {
    let err = det_error(vanilla_det_run());
    CriterionResult {
        id: 1,
        name: "vanilla convergence",
        passed: err <= CONVERGENCE_TOL,
        detail: format!("sup error on reachable pairs {err:.5} (limit {CONVERGENCE_TOL})"),
    }
}

pub fn criterion_2() -> CriterionResult {
    let eps = 0.01;
    let bound = eps / (1.0 - 0.97);
    let errors: Vec<f64> = gated_det_runs().iter().map(det_error).collect();
    CriterionResult {
        id: 2,
        name: "threshold error bound",
        passed: errors.iter().all(|&e| e <= bound),
        detail: format!(
            "sup errors over 5 seeds {} (limit {bound:.4})",
            fmt_list(&errors)
        ),
    }
}

pub fn criterion_3() -> CriterionResult {
    let n_agents = 8.0;
    let limit = EVENT_RATE_FRACTION * n_agents;
    let rates: Vec<f64> = gated_det_runs()
        .iter()
        .map(|r| r.ledger.event_rate(EVENT_RATE_WINDOW))
        .collect();
    // Reference only: without the absolute floor the rate is not required to vanish.
    let floorless = det_runs(0.9, 0.0, 1)
        .remove(0)
        .ledger
        .event_rate(EVENT_RATE_WINDOW);
    CriterionResult {
        id: 3,
        name: "events vanish",
        passed: rates.iter().all(|&r| r <= limit),
        detail: format!(
            "trailing-{EVENT_RATE_WINDOW} SampleUp rate per tick {} (limit {limit}); with eps_threshold = 0: {floorless:.4}",
            fmt_list(&rates)
        ),
    }
}

/// 10x10 slippery lake, replay learner, gated versus always-transmit.
pub fn comm_reduction_configs() -> (ExperimentConfig, ExperimentConfig) {
    let gated = ExperimentConfig {
        slip_prob: 0.3,
        n_agents: 8,
        mode: LearnMode::Replay,
        rho: 0.9,
        eps_threshold: 0.01,
        n_runs: 5,
        ticks: 100_000,
        eval_every: 10_000,
        ..Default::default()
    };
    let vanilla = ExperimentConfig {
        vanilla: true,
        ..gated.clone()
    };
    (gated, vanilla)
}

pub fn criterion_4() -> CriterionResult {
    let mdp = lake10_slippery();
    let (gated_cfg, vanilla_cfg) = comm_reduction_configs();
    let run = |cfg: &ExperimentConfig| -> RunMetrics {
        run_experiment_on(cfg, &mdp, None, false).expect("valid config")
    };
    let (gated, vanilla) = rayon::join(|| run(&gated_cfg), || run(&vanilla_cfg));
    let ratio = gated.final_cum_samples_up() / vanilla.final_cum_samples_up();
    let (rg, rv) = (
        gated.final_reward().unwrap_or(f64::NAN),
        vanilla.final_reward().unwrap_or(f64::NAN),
    );
    let gap = (rg - rv).abs();
    let std = |m: &RunMetrics| m.evals.last().map_or(f64::NAN, |e| e.reward_std);
    CriterionResult {
        id: 4,
        name: "communication reduction",
        passed: ratio <= COMM_RATIO_MAX && gap <= REWARD_GAP_MAX,
        detail: format!(
            "cumulative SampleUp ratio {ratio:.4} (limit {COMM_RATIO_MAX}); final critic reward {rg:.3} vs vanilla {rv:.3}, gap {gap:.3} (limit {REWARD_GAP_MAX}); across-run std {:.3} vs {:.3}",
            std(&gated),
            std(&vanilla)
        ),
    }
}

/// Toy-MDP settings for the stochastic surrogate and fixed-point checks.
pub const TOY_GAMMA: f64 = 0.9;
pub const TOY_OMEGA: f64 = 0.7;

pub fn toy_config(rho: f64, eps_threshold: f64, ticks: u64, n_runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_agents: 4,
        mode: LearnMode::Synchronous,
        gamma: TOY_GAMMA,
        alpha_omega: Some(TOY_OMEGA),
        rho,
        eps_threshold,
        ticks,
        eval_every: 0,
        n_runs,
        ..Default::default()
    }
}

pub fn criterion_5() -> CriterionResult {
    let det_tail = vanilla_det_run().max_surrogate_tail;
    let gated_tail: Vec<f64> = gated_det_runs()
        .iter()
        .map(|r| r.max_surrogate_tail)
        .collect();

    let toy = three_state_toy();
    let q_star = solve_q_star(&toy, TOY_GAMMA, ORACLE_TOL)
        .expect("oracle converges")
        .q_star;
    let limit = l_star(&toy, &q_star, TOY_GAMMA) + SURROGATE_SLACK;
    let cfg = toy_config(0.0, 0.0, 200_000, 5);
    let opts = RunOptions {
        surrogate_window: SURROGATE_WINDOW,
        ..Default::default()
    };
    let toy_tails: Vec<f64> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|i| simulate_run(&cfg, &toy, i, &opts).max_surrogate_tail)
        .collect();
    CriterionResult {
        id: 5,
        name: "surrogate limits",
        passed: det_tail <= SURROGATE_DET_MAX && toy_tails.iter().all(|&t| t <= limit),
        detail: format!(
            "deterministic max L over last {SURROGATE_WINDOW} ticks {det_tail:.5} (limit {SURROGATE_DET_MAX}), gated runs {}; toy max L {} (limit l* + {SURROGATE_SLACK} = {limit:.4})",
            fmt_list(&gated_tail),
            fmt_list(&toy_tails)
        ),
    }
}

pub fn criterion_6() -> CriterionResult {
    let mdps = [lake(LAKE10, 0.3), three_state_toy(), lake(LAKE18, 0.2)];
    let mut rng = rng::seeded(6);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0_f64;
    let mut checked = 0;
    for gamma in [0.5, 0.9, 0.97] {
        for i in 0..100 {
            let mdp = &mdps[i % mdps.len()];
            // Second table is a perturbation of the first at a random scale,
            // so some pairs share greedy actions and the bound is nearly tight.
            let q1 = QTable::random_uniform(mdp.n_states(), mdp.n_actions(), 20.0, &mut rng);
            let scale = 10f64.powf(rng.random_range(-3.0..1.0));
            let noise = QTable::random_uniform(mdp.n_states(), mdp.n_actions(), scale, &mut rng);
            let values = q1
                .values()
                .iter()
                .zip(noise.values())
                .map(|(a, b)| a + b)
                .collect();
            let q2 =
                QTable::from_values(mdp.n_states(), mdp.n_actions(), values).expect("same shape");
            let h1 = bellman_backup(mdp, &q1, gamma).expect("shapes match");
            let h2 = bellman_backup(mdp, &q2, gamma).expect("shapes match");
            let lhs = sup_dist(&h1, &h2).expect("shapes match");
            let dist = sup_dist(&q1, &q2).expect("shapes match");
            worst_excess = worst_excess.max(lhs - gamma * dist);
            worst_ratio = worst_ratio.max(lhs / (gamma * dist));
            checked += 1;
        }
    }
    let mut worst_fixed = 0.0_f64;
    for mdp in &mdps {
        for gamma in [0.5, 0.9, 0.97] {
            let q = solve_q_star(mdp, gamma, ORACLE_TOL)
                .expect("oracle converges")
                .q_star;
            let hq = bellman_backup(mdp, &q, gamma).expect("shapes match");
            worst_fixed = worst_fixed.max(sup_dist(&hq, &q).expect("shapes match"));
        }
    }
    CriterionResult {
        id: 6,
        name: "contraction",
        passed: worst_excess <= CONTRACTION_SLACK && worst_fixed <= 2.0 * ORACLE_TOL,
        detail: format!(
            "{checked} pairs, worst ||HQ1-HQ2|| - gamma||Q1-Q2|| = {worst_excess:.3e} (slack {CONTRACTION_SLACK:e}), largest ratio to gamma||Q1-Q2|| {worst_ratio:.4}; worst ||HQ*-Q*|| = {worst_fixed:.3e} (limit {:e})",
            2.0 * ORACLE_TOL
        ),
    }
}

/// One seed of the biased fixed-point check. Returns
/// `(gap lhs, gap rhs, ||Q_hat - Q_tilde||, flagged rows)`.
pub fn fixed_point_check(
    run_index: usize,
    ticks: u64,
    log_window: u64,
) -> Result<(f64, f64, f64, usize)> {
    let toy = three_state_toy();
    let cfg = toy_config(0.9, 0.05, ticks, 1);
    let opts = RunOptions {
        log_transitions_from: Some(ticks.saturating_sub(log_window) + 1),
        ..Default::default()
    };
    let run = simulate_run(&cfg, &toy, run_index, &opts);
    let counter = run.transitions.expect("logging was enabled");
    let est = counter.estimate(&toy, DEFAULT_MIN_COUNT)?;
    let q_star = solve_q_star(&toy, TOY_GAMMA, ORACLE_TOL)?.q_star;
    let q_tilde = solve_fixed_point(&est.p_tilde, TOY_GAMMA, ORACLE_TOL)?.q_star;
    let gap = biased_gap(&q_star, &q_tilde, &toy, &est.p_tilde, TOY_GAMMA)?;
    let dist = sup_dist(&run.final_q, &q_tilde)?;
    Ok((
        gap.lhs,
        gap.rhs,
        dist,
        est.fallback_rows.len() + est.sparse_rows.len(),
    ))
}

pub fn criterion_7() -> CriterionResult {
    let ticks = 500_000;
    let results: Vec<Result<(f64, f64, f64, usize)>> = (0..3)
        .into_par_iter()
        .map(|i| fixed_point_check(i, ticks, 100_000))
        .collect();
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((lhs, rhs, dist, flagged)) => {
                passed &= lhs <= rhs + 1e-9 && dist <= FIXED_POINT_TOL;
                parts.push(format!(
                    "seed {i}: gap {lhs:.4} <= {rhs:.4}, ||Q-Q~|| {dist:.4}, flagged rows {flagged}"
                ));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("seed {i}: {e}"));
            }
        }
    }
    CriterionResult {
        id: 7,
        name: "biased fixed point",
        passed,
        detail: format!("{} (limit {FIXED_POINT_TOL})", parts.join("; ")),
    }
}

/// Data rows of every rendered output, with `#` lines dropped.
fn csv_bodies(cfg: &ExperimentConfig, m: &RunMetrics) -> Vec<String> {
    render_outputs(cfg, m)
        .into_iter()
        .map(|(_, text)| {
            text.lines()
                .filter(|l| !l.starts_with('#'))
                .collect::<Vec<_>>()
                .join("\n")
        })
        .collect()
}

pub fn criterion_8() -> CriterionResult {
    let mdp = lake(LAKE6, 0.2);
    let q_star = Arc::new(
        solve_q_star(&mdp, 0.97, ORACLE_TOL)
            .expect("oracle converges")
            .q_star,
    );
    let mut mismatches = Vec::new();
    for mode in [LearnMode::Synchronous, LearnMode::Replay] {
        let gated_cfg = ExperimentConfig {
            n_agents: 4,
            mode,
            rho: 0.0,
            eps_threshold: 0.0,
            sync_period: 1,
            ticks: 5000,
            eval_every: 500,
            n_runs: 2,
            ..Default::default()
        };
        let vanilla_cfg = ExperimentConfig {
            vanilla: true,
            ..gated_cfg.clone()
        };
        let opts = RunOptions {
            oracle: Some(Arc::clone(&q_star)),
            error_mask: Some(Arc::new(mdp.reachable_pairs())),
            trajectory_every: Some(1),
            ..Default::default()
        };
        let gated: Vec<RunOutcome> = (0..2)
            .map(|i| simulate_run(&gated_cfg, &mdp, i, &opts))
            .collect();
        let vanilla: Vec<RunOutcome> = (0..2)
            .map(|i| simulate_run_vanilla(&vanilla_cfg, &mdp, i, &opts))
            .collect();
        for (g, v) in gated.iter().zip(&vanilla) {
            if g.trajectory != v.trajectory {
                mismatches.push(format!("{mode} run {} trajectory", g.run_index));
            }
        }
        let (gm, vm) = (RunMetrics::from_runs(gated), RunMetrics::from_runs(vanilla));
        if csv_bodies(&gated_cfg, &gm) != csv_bodies(&vanilla_cfg, &vm) {
            mismatches.push(format!("{mode} CSV bodies"));
        }
    }
    CriterionResult {
        id: 8,
        name: "always-trigger equals vanilla",
        passed: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            "per-tick tables and CSV data identical in synchronous and replay modes".into()
        } else {
            format!("mismatch in {}", mismatches.join(", "))
        },
    }
}

pub fn criterion_9() -> CriterionResult {
    let mdp = lake(LAKE6, 0.2);
    let cfg = ExperimentConfig {
        n_agents: 8,
        mode: LearnMode::Replay,
        ticks: 20_000,
        eval_every: 1000,
        n_runs: 3,
        master_seed: 9,
        ..Default::default()
    };
    let q_star = solve_q_star(&mdp, cfg.gamma, ORACLE_TOL)
        .expect("oracle converges")
        .q_star;
    let render = |parallel: bool| {
        let m =
            run_experiment_on(&cfg, &mdp, Some(q_star.clone()), parallel).expect("valid config");
        render_outputs(&cfg, &m)
    };
    let first = render(false);
    let again = render(false);
    let parallel = render(true);
    let bytes: usize = first.iter().map(|(_, t)| t.len()).sum();
    let ok = first == again && first == parallel;
    CriterionResult {
        id: 9,
        name: "determinism",
        passed: ok,
        detail: format!(
            "{} files, {bytes} bytes; serial rerun identical: {}, actor-parallel identical: {}",
            first.len(),
            first == again,
            first == parallel
        ),
    }
}

pub fn run_criterion(id: u32) -> Option<CriterionResult> {
    Some(match id {
        1 => criterion_1(),
        2 => criterion_2(),
        3 => criterion_3(),
        4 => criterion_4(),
        5 => criterion_5(),
        6 => criterion_6(),
        7 => criterion_7(),
        8 => criterion_8(),
        9 => criterion_9(),
        _ => return None,
    })
}
