//! Experiment driver: configuration, seeded multi-run execution, critic
//! evaluation, effective-transition estimation and metric output.

pub mod config;
pub mod eval;
pub mod metrics;
pub mod output;
pub mod p_tilde;
pub mod sim;

use std::path::Path;
use std::sync::Arc;

pub use config::{ExperimentConfig, OracleSource};
pub use eval::evaluate_policy;
pub use metrics::{mean_std, RunMetrics};
pub use p_tilde::{estimate_p_tilde, PTildeEstimate, TransitionCounter};
pub use sim::{simulate, simulate_run, simulate_run_vanilla, EvalPoint, RunOptions, RunOutcome};

use crate::error::{Error, Result};
use crate::mdp::{build_frozen_lake, GridSpec, Mdp};
use crate::oracle::solve_q_star;
use crate::qtable::QTable;

/// Reads a layout file and applies the config's slip and rewards.
pub fn load_grid(path: &Path, cfg: &ExperimentConfig) -> Result<GridSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut spec = GridSpec::parse_layout(&text)?.with_slip(cfg.slip_prob);
    spec.reward_hole = cfg.reward_hole;
    spec.reward_goal = cfg.reward_goal;
    spec.reward_step = cfg.reward_step;
    Ok(spec)
}

pub fn build_mdp(cfg: &ExperimentConfig) -> Result<Mdp> {
    let path = cfg
        .layout
        .as_ref()
        .ok_or_else(|| Error::Config("layout is required".into()))?;
    build_frozen_lake(&load_grid(path, cfg)?)
}

/// Loads or computes the reference table named by `cfg.oracle`.
pub fn resolve_oracle(cfg: &ExperimentConfig, mdp: &Mdp) -> Result<Option<QTable>> {
    let q = match &cfg.oracle {
        None => return Ok(None),
        Some(OracleSource::Compute) => solve_q_star(mdp, cfg.gamma, cfg.oracle_tol)?.q_star,
        Some(OracleSource::File(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            QTable::from_csv(&text)?
        }
    };
    if q.shape() != (mdp.n_states(), mdp.n_actions()) {
        let (s, a) = q.shape();
        return Err(Error::ShapeMismatch(s, a, mdp.n_states(), mdp.n_actions()));
    }
    Ok(Some(q))
}

/// Runs every seed of `cfg` on `mdp`. The error series, when an oracle is
/// given, is measured on the reachable pairs.
pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    mdp: &Mdp,
    oracle: Option<QTable>,
    parallel_actors: bool,
) -> Result<RunMetrics> {
    cfg.validate()?;
    let opts = RunOptions {
        oracle: oracle.map(Arc::new),
        error_mask: Some(Arc::new(mdp.reachable_pairs())),
        parallel_actors,
        ..Default::default()
    };
    Ok(RunMetrics::from_runs(sim::simulate_all(cfg, mdp, &opts)?))
}

/// Validates the config, builds the MDP from its layout and runs it.
/// `parallel_actors` only changes scheduling, never results.
pub fn run_experiment(cfg: &ExperimentConfig, parallel_actors: bool) -> Result<RunMetrics> {
    cfg.validate()?;
    let mdp = build_mdp(cfg)?;
    let oracle = resolve_oracle(cfg, &mdp)?;
    run_experiment_on(cfg, &mdp, oracle, parallel_actors)
}
