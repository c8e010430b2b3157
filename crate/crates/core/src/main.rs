use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ebdq::acceptance::{self, run_criterion};
use ebdq::harness::{self, output, ExperimentConfig};
use ebdq::oracle::{l_star, solve_q_star};

#[derive(Parser)]
#[command(
    name = "ebdq",
    version,
    about = "Event-based distributed Q-learning simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write reward.csv, error.csv, comms.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Step actors in parallel inside each run. Outputs are unchanged.
        #[arg(long)]
        parallel_actors: bool,
    },
    /// Solve a layout exactly and write its optimal Q-table.
    Oracle {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value_t = 0.97)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0.0)]
        slip: f64,
        #[arg(long, default_value = "q_star.csv")]
        out: PathBuf,
    },
    /// Compare two output directories (baseline first).
    Compare {
        baseline: PathBuf,
        candidate: PathBuf,
    },
    /// Run the acceptance property suite.
    Check {
        /// Comma-separated criterion ids; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u32>,
    },
}

fn run(cli: Cli) -> ebdq::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            parallel_actors,
        } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let started = Instant::now();
            let metrics = harness::run_experiment(&cfg, parallel_actors)?;
            output::write_outputs(&out, &cfg, &metrics)?;
            println!(
                "{} runs x {} ticks in {:.1}s -> {}",
                cfg.n_runs,
                cfg.ticks,
                started.elapsed().as_secs_f64(),
                out.display()
            );
            if let Some(r) = metrics.final_reward() {
                println!("final reward {r:.4}");
            }
            if let Some(e) = metrics.final_error() {
                println!("final sup error {e:.6}");
            }
            println!("cumulative SampleUp {:.1}", metrics.final_cum_samples_up());
            Ok(true)
        }
        Command::Oracle {
            layout,
            gamma,
            tol,
            slip,
            out,
        } => {
            let cfg = ExperimentConfig {
                slip_prob: slip,
                gamma,
                oracle_tol: tol,
                layout: Some(layout),
                ..Default::default()
            };
            cfg.validate()?;
            let mdp = harness::build_mdp(&cfg)?;
            let res = solve_q_star(&mdp, gamma, tol)?;
            let text = format!(
                "# iterations = {}, residual = {}, gamma = {gamma}, tol = {tol}, slip = {slip}\n{}",
                res.iterations,
                res.residual,
                res.q_star.to_csv()
            );
            std::fs::write(&out, text).map_err(|e| ebdq::Error::io(&out, e))?;
            println!(
                "{} sweeps, residual {:.3e}, l* {:.6} -> {}",
                res.iterations,
                res.residual,
                l_star(&mdp, &res.q_star, gamma),
                out.display()
            );
            Ok(true)
        }
        Command::Compare {
            baseline,
            candidate,
        } => {
            let cmp = output::compare(&baseline, &candidate)?;
            print!(
                "{}",
                cmp.table(
                    &baseline.display().to_string(),
                    &candidate.display().to_string()
                )
            );
            Ok(true)
        }
        Command::Check { only } => {
            let ids = if only.is_empty() {
                acceptance::ALL.to_vec()
            } else {
                only
            };
            let mut all = true;
            for id in ids {
                match run_criterion(id) {
                    Some(r) => {
                        println!("{r}");
                        all &= r.passed;
                    }
                    None => {
                        eprintln!("unknown criterion {id}");
                        all = false;
                    }
                }
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
