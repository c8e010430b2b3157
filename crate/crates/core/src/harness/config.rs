//! Experiment configuration: flat `key = value` text with `#` comments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::actor::TriggerParams;
use crate::error::{Error, Result};
use crate::learner::{LearnMode, StepSize, BATCH_SIZE, BUFFER_PER_AGENT};
use crate::mdp::{DEFAULT_REWARD_GOAL, DEFAULT_REWARD_HOLE, DEFAULT_REWARD_STEP};

/// Where the sup-norm error series gets its reference table.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSource {
    /// A Q-table CSV on disk.
    File(PathBuf),
    /// Solve by value iteration before the runs start.
    Compute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub layout: Option<PathBuf>,
    pub slip_prob: f64,
    pub reward_hole: f64,
    pub reward_goal: f64,
    pub reward_step: f64,
    pub n_agents: usize,
    pub gamma: f64,
    pub alpha: f64,
    /// When set, per-pair step sizes `1 / (1 + n)^ω` replace the constant `alpha`.
    pub alpha_omega: Option<f64>,
    pub beta: f64,
    pub rho: f64,
    pub eps_threshold: f64,
    pub mode: LearnMode,
    pub sync_period: u64,
    pub learn_period: u64,
    pub batch_size: usize,
    pub buffer_per_agent: usize,
    pub q_init_range: f64,
    pub n_runs: usize,
    pub ticks: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub eval_step_cap: usize,
    pub eval_eps: f64,
    pub master_seed: u64,
    /// Bypass the trigger machinery entirely (always-transmit baseline).
    pub vanilla: bool,
    pub oracle: Option<OracleSource>,
    pub oracle_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            layout: None,
            slip_prob: 0.0,
            reward_hole: DEFAULT_REWARD_HOLE,
            reward_goal: DEFAULT_REWARD_GOAL,
            reward_step: DEFAULT_REWARD_STEP,
            n_agents: 8,
            gamma: 0.97,
            alpha: 0.01,
            alpha_omega: None,
            beta: 0.05,
            rho: 0.9,
            eps_threshold: 0.01,
            mode: LearnMode::Replay,
            sync_period: 1,
            learn_period: 1,
            batch_size: BATCH_SIZE,
            buffer_per_agent: BUFFER_PER_AGENT,
            q_init_range: 1.0,
            n_runs: 25,
            ticks: 100_000,
            eval_every: 1000,
            eval_episodes: 10,
            eval_step_cap: 1500,
            eval_eps: 0.01,
            master_seed: 0,
            vanilla: false,
            oracle: None,
            oracle_tol: 1e-6,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {value:?}")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "line {line}: {key} expects true/false, got {value:?}"
        ))),
    }
}

impl ExperimentConfig {
    pub fn trigger(&self) -> TriggerParams {
        TriggerParams {
            rho: self.rho,
            eps_threshold: self.eps_threshold,
            beta: self.beta,
        }
    }

    pub fn step_size(&self) -> StepSize {
        match self.alpha_omega {
            Some(omega) => StepSize::Decaying { omega },
            None => StepSize::Constant(self.alpha),
        }
    }

    /// Parses config text. Relative paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        let resolve = |p: &str| match base {
            Some(dir) if Path::new(p).is_relative() => dir.join(p),
            _ => PathBuf::from(p),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key = value")))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "layout" => cfg.layout = Some(resolve(value)),
                "slip_prob" => cfg.slip_prob = parse_value(key, value, line)?,
                "reward_hole" => cfg.reward_hole = parse_value(key, value, line)?,
                "reward_goal" => cfg.reward_goal = parse_value(key, value, line)?,
                "reward_step" => cfg.reward_step = parse_value(key, value, line)?,
                "n_agents" => cfg.n_agents = parse_value(key, value, line)?,
                "gamma" => cfg.gamma = parse_value(key, value, line)?,
                "alpha" => cfg.alpha = parse_value(key, value, line)?,
                "alpha_omega" => {
                    cfg.alpha_omega = match value {
                        "none" => None,
                        v => Some(parse_value(key, v, line)?),
                    }
                }
                "beta" => cfg.beta = parse_value(key, value, line)?,
                "rho" => cfg.rho = parse_value(key, value, line)?,
                "eps_threshold" => cfg.eps_threshold = parse_value(key, value, line)?,
                "mode" => cfg.mode = value.parse()?,
                "sync_period" => cfg.sync_period = parse_value(key, value, line)?,
                "learn_period" => cfg.learn_period = parse_value(key, value, line)?,
                "batch_size" => cfg.batch_size = parse_value(key, value, line)?,
                "buffer_per_agent" => cfg.buffer_per_agent = parse_value(key, value, line)?,
                "q_init_range" => cfg.q_init_range = parse_value(key, value, line)?,
                "n_runs" => cfg.n_runs = parse_value(key, value, line)?,
                "ticks" => cfg.ticks = parse_value(key, value, line)?,
                "eval_every" => cfg.eval_every = parse_value(key, value, line)?,
                "eval_episodes" => cfg.eval_episodes = parse_value(key, value, line)?,
                "eval_step_cap" => cfg.eval_step_cap = parse_value(key, value, line)?,
                "eval_eps" => cfg.eval_eps = parse_value(key, value, line)?,
                "master_seed" => cfg.master_seed = parse_value(key, value, line)?,
                "vanilla" => cfg.vanilla = parse_bool(key, value, line)?,
                "oracle" => {
                    cfg.oracle = match value {
                        "none" => None,
                        "compute" => Some(OracleSource::Compute),
                        path => Some(OracleSource::File(resolve(path))),
                    }
                }
                "oracle_tol" => cfg.oracle_tol = parse_value(key, value, line)?,
                other => return Err(Error::Config(format!("line {line}: unknown key {other:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_agents == 0 {
            return bad("n_agents must be positive".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} not in (0, 1)", self.gamma));
        }
        self.step_size().validate()?;
        self.trigger().validate()?;
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return bad(format!("slip_prob {} not in [0, 1]", self.slip_prob));
        }
        if self.sync_period == 0 || self.learn_period == 0 {
            return bad("sync_period and learn_period must be at least 1".into());
        }
        if self.batch_size == 0 || self.buffer_per_agent == 0 {
            return bad("batch_size and buffer_per_agent must be positive".into());
        }
        if !self.q_init_range.is_finite() || self.q_init_range < 0.0 {
            return bad(format!(
                "q_init_range {} must be a nonnegative number",
                self.q_init_range
            ));
        }
        if self.n_runs == 0 {
            return bad("n_runs must be positive".into());
        }
        if self.eval_every > 0 && (self.eval_episodes == 0 || self.eval_step_cap == 0) {
            return bad("eval_episodes and eval_step_cap must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.eval_eps) {
            return bad(format!("eval_eps {} not in [0, 1]", self.eval_eps));
        }
        if self.oracle_tol.is_nan() || self.oracle_tol <= 0.0 {
            return bad(format!("oracle_tol {} must be positive", self.oracle_tol));
        }
        Ok(())
    }

    /// Every field as `key = value`, in the config file syntax.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put(
            "layout",
            self.layout
                .as_ref()
                .map_or("none".into(), |p| p.display().to_string()),
        );
        put("slip_prob", self.slip_prob.to_string());
        put("reward_hole", self.reward_hole.to_string());
        put("reward_goal", self.reward_goal.to_string());
        put("reward_step", self.reward_step.to_string());
        put("n_agents", self.n_agents.to_string());
        put("gamma", self.gamma.to_string());
        put("alpha", self.alpha.to_string());
        put(
            "alpha_omega",
            self.alpha_omega.map_or("none".into(), |w| w.to_string()),
        );
        put("beta", self.beta.to_string());
        put("rho", self.rho.to_string());
        put("eps_threshold", self.eps_threshold.to_string());
        put("mode", self.mode.to_string());
        put("sync_period", self.sync_period.to_string());
        put("learn_period", self.learn_period.to_string());
        put("batch_size", self.batch_size.to_string());
        put("buffer_per_agent", self.buffer_per_agent.to_string());
        put("q_init_range", self.q_init_range.to_string());
        put("n_runs", self.n_runs.to_string());
        put("ticks", self.ticks.to_string());
        put("eval_every", self.eval_every.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("eval_step_cap", self.eval_step_cap.to_string());
        put("eval_eps", self.eval_eps.to_string());
        put("master_seed", self.master_seed.to_string());
        put("vanilla", self.vanilla.to_string());
        put(
            "oracle",
            match &self.oracle {
                None => "none".into(),
                Some(OracleSource::Compute) => "compute".into(),
                Some(OracleSource::File(p)) => p.display().to_string(),
            },
        );
        put("oracle_tol", self.oracle_tol.to_string());
        out
    }

    /// `#`-prefixed header for output CSVs: code version plus every field.
    pub fn header(&self) -> String {
        let mut out = format!(
            "# {} {}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION")
        );
        for line in self.to_text().lines() {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}
