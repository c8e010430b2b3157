//! Cross-run aggregation of evaluation and communication series.

use crate::harness::sim::RunOutcome;

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub tick: u64,
    pub episodes: f64,
    pub updates: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
    pub error: Option<(f64, f64)>,
}

/// Mean cumulative traffic per tick across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CommSummary {
    pub tick: u64,
    pub samples_up: f64,
    pub qsync_down: f64,
    pub cum_samples_up: f64,
    pub cum_bytes_up: f64,
    pub cum_bytes_down: f64,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub evals: Vec<EvalSummary>,
    pub comms: Vec<CommSummary>,
    pub runs: Vec<RunOutcome>,
}

impl RunMetrics {
    pub fn from_runs(runs: Vec<RunOutcome>) -> Self {
        let n_evals = runs.first().map_or(0, |r| r.evals.len());
        let evals = (0..n_evals)
            .map(|i| {
                let col =
                    |f: &dyn Fn(&RunOutcome) -> f64| -> Vec<f64> { runs.iter().map(f).collect() };
                let rewards = col(&|r| r.evals[i].reward);
                let (reward_mean, reward_std) = mean_std(&rewards);
                let error = if runs.iter().all(|r| r.evals[i].error.is_some()) {
                    Some(mean_std(&col(&|r| r.evals[i].error.unwrap_or(f64::NAN))))
                } else {
                    None
                };
                EvalSummary {
                    tick: runs[0].evals[i].tick,
                    episodes: mean_std(&col(&|r| r.evals[i].episodes as f64)).0,
                    updates: mean_std(&col(&|r| r.evals[i].updates as f64)).0,
                    reward_mean,
                    reward_std,
                    error,
                }
            })
            .collect();
        let n_ticks = runs.first().map_or(0, |r| r.ledger.records().len());
        let n = runs.len() as f64;
        let comms = (0..n_ticks)
            .map(|i| {
                let sum = |f: &dyn Fn(&crate::network::TickRecord) -> u64| -> f64 {
                    runs.iter()
                        .map(|r| f(&r.ledger.records()[i]) as f64)
                        .sum::<f64>()
                        / n
                };
                CommSummary {
                    tick: runs[0].ledger.records()[i].tick,
                    samples_up: sum(&|t| t.samples_up),
                    qsync_down: sum(&|t| t.qsync_down),
                    cum_samples_up: sum(&|t| t.cum_samples_up),
                    cum_bytes_up: sum(&|t| t.cum_bytes_up),
                    cum_bytes_down: sum(&|t| t.cum_bytes_down),
                }
            })
            .collect();
        Self { evals, comms, runs }
    }

    pub fn final_reward(&self) -> Option<f64> {
        self.evals.last().map(|e| e.reward_mean)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.evals.last().and_then(|e| e.error.map(|(m, _)| m))
    }

    pub fn final_cum_samples_up(&self) -> f64 {
        self.comms.last().map_or(0.0, |c| c.cum_samples_up)
    }
}
