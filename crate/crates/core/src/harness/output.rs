//! Metric CSVs and the two-directory comparison.
//!
//! Every file starts with the config header. Floats use Rust's shortest
//! round-trip formatting so identical runs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::metrics::RunMetrics;
use crate::harness::sim::RunOutcome;

pub const REWARD_HEADER: &str = "tick,episodes,updates,reward_mean,reward_std";
pub const ERROR_HEADER: &str = "tick,episodes,updates,error_mean,error_std";
pub const COMMS_HEADER: &str =
    "tick,samples_up,qsync_down,cum_samples_up,cum_bytes_up,cum_bytes_down";
pub const RUN_HEADER: &str = "tick,episodes,updates,reward,error,cum_samples_up";

pub fn reward_csv(cfg: &ExperimentConfig, m: &RunMetrics) -> String {
    let mut out = cfg.header();
    out.push_str(REWARD_HEADER);
    out.push('\n');
    for e in &m.evals {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.tick, e.episodes, e.updates, e.reward_mean, e.reward_std
        );
    }
    out
}

pub fn error_csv(cfg: &ExperimentConfig, m: &RunMetrics) -> String {
    let mut out = cfg.header();
    if cfg.oracle.is_none() {
        out.push_str("# no oracle configured; series left empty\n");
    }
    out.push_str(ERROR_HEADER);
    out.push('\n');
    for e in &m.evals {
        if let Some((mean, std)) = e.error {
            let _ = writeln!(out, "{},{},{},{mean},{std}", e.tick, e.episodes, e.updates);
        }
    }
    out
}

pub fn comms_csv(cfg: &ExperimentConfig, m: &RunMetrics) -> String {
    let mut out = cfg.header();
    out.push_str("# mean over runs\n");
    out.push_str(COMMS_HEADER);
    out.push('\n');
    for c in &m.comms {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.tick, c.samples_up, c.qsync_down, c.cum_samples_up, c.cum_bytes_up, c.cum_bytes_down
        );
    }
    out
}

/// Evaluation series of a single run.
pub fn run_csv(cfg: &ExperimentConfig, run: &RunOutcome) -> String {
    let mut out = cfg.header();
    let _ = writeln!(
        out,
        "# run_index = {}, run_seed = {}",
        run.run_index, run.seed
    );
    out.push_str(RUN_HEADER);
    out.push('\n');
    let records = run.ledger.records();
    for e in &run.evals {
        let cum = records
            .get(e.tick as usize - 1)
            .map_or(0, |r| r.cum_samples_up);
        let error = e.error.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{error},{cum}",
            e.tick, e.episodes, e.updates, e.reward
        );
    }
    out
}

/// Every output file as `(relative path, contents)`: `reward.csv`,
/// `error.csv`, `comms.csv` and, under `runs/`, the per-run series and
/// final learner checkpoints.
pub fn render_outputs(cfg: &ExperimentConfig, m: &RunMetrics) -> Vec<(PathBuf, String)> {
    let mut files = vec![
        (PathBuf::from("reward.csv"), reward_csv(cfg, m)),
        (PathBuf::from("error.csv"), error_csv(cfg, m)),
        (PathBuf::from("comms.csv"), comms_csv(cfg, m)),
    ];
    for run in &m.runs {
        let i = run.run_index;
        files.push((
            PathBuf::from(format!("runs/run_{i:03}.csv")),
            run_csv(cfg, run),
        ));
        let checkpoint = format!(
            "{}# tick={},update_count={},mode={}\n{}",
            cfg.header(),
            cfg.ticks,
            run.update_count,
            cfg.mode,
            run.final_q.to_csv()
        );
        files.push((PathBuf::from(format!("runs/run_{i:03}_q.csv")), checkpoint));
    }
    files
}

pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, m: &RunMetrics) -> Result<()> {
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    for (name, text) in render_outputs(cfg, m) {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Data rows of a metric CSV: `#` lines and the column header are skipped.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(str::to_owned).collect::<Vec<_>>());
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                if f.is_empty() {
                    Ok(f64::NAN)
                } else {
                    f.parse::<f64>().map_err(|e| Error::Csv {
                        line: idx + 1,
                        msg: format!("{}: {e}", path.display()),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let header = header.ok_or(Error::EmptyLog)?;
    Ok((header, rows))
}

fn last_column(path: &Path, column: &str) -> Result<Option<f64>> {
    let (header, rows) = read_rows(path)?;
    let idx = header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::Csv {
            line: 0,
            msg: format!("{} has no column {column}", path.display()),
        })?;
    Ok(rows.last().map(|r| r[idx]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirSummary {
    pub final_reward: Option<f64>,
    pub final_error: Option<f64>,
    pub cum_samples_up: f64,
    pub cum_bytes_up: f64,
    pub cum_bytes_down: f64,
}

pub fn summarize_dir(dir: &Path) -> Result<DirSummary> {
    let comms = dir.join("comms.csv");
    Ok(DirSummary {
        final_reward: last_column(&dir.join("reward.csv"), "reward_mean")?,
        final_error: last_column(&dir.join("error.csv"), "error_mean")?,
        cum_samples_up: last_column(&comms, "cum_samples_up")?.unwrap_or(0.0),
        cum_bytes_up: last_column(&comms, "cum_bytes_up")?.unwrap_or(0.0),
        cum_bytes_down: last_column(&comms, "cum_bytes_down")?.unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: DirSummary,
    pub candidate: DirSummary,
    /// `1 - cum_samples(candidate) / cum_samples(baseline)`.
    pub reduction_ratio: f64,
}

pub fn compare(baseline: &Path, candidate: &Path) -> Result<Comparison> {
    let baseline = summarize_dir(baseline)?;
    let candidate = summarize_dir(candidate)?;
    let reduction_ratio = 1.0 - candidate.cum_samples_up / baseline.cum_samples_up;
    Ok(Comparison {
        baseline,
        candidate,
        reduction_ratio,
    })
}

impl Comparison {
    pub fn table(&self, name_a: &str, name_b: &str) -> String {
        let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = format!("{:<22}{:>20}{:>20}\n", "metric", name_a, name_b);
        let mut row = |k: &str, a: String, b: String| {
            let _ = writeln!(out, "{k:<22}{a:>20}{b:>20}");
        };
        let (a, b) = (&self.baseline, &self.candidate);
        row("final_reward", opt(a.final_reward), opt(b.final_reward));
        row("final_error", opt(a.final_error), opt(b.final_error));
        row(
            "cum_samples_up",
            format!("{:.1}", a.cum_samples_up),
            format!("{:.1}", b.cum_samples_up),
        );
        row(
            "cum_bytes_up",
            format!("{:.1}", a.cum_bytes_up),
            format!("{:.1}", b.cum_bytes_up),
        );
        row(
            "cum_bytes_down",
            format!("{:.1}", a.cum_bytes_down),
            format!("{:.1}", b.cum_bytes_down),
        );
        let _ = writeln!(out, "reduction_ratio {:.4}", self.reduction_ratio);
        out
    }
}
