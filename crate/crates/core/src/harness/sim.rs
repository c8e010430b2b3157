//! Tick-driven simulation of one explorer/learner system.
//!
//! Each tick: every actor steps (outcomes merged in actor-id order), the
//! network delivers the triggered samples, the learner ingests and learns,
//! and the learner broadcasts its table when the sync period elapses.
//!
//! [`simulate_run_vanilla`] is a separate always-transmit implementation
//! with no trigger logic; with `rho = eps_threshold = 0` the gated pipeline
//! must reproduce it exactly.

use std::sync::Arc;

use rayon::prelude::*;

use crate::actor::{epsilon_greedy, ActorState, TickOutcome};
use crate::error::Result;
use crate::harness::config::ExperimentConfig;
use crate::harness::eval::evaluate_policy;
use crate::harness::p_tilde::TransitionCounter;
use crate::learner::{broadcast_q, LearnMode, LearnerState, ReplayBuffer};
use crate::mdp::Mdp;
use crate::network::{CommLedger, Message};
use crate::qtable::{sup_dist_masked, QTable, Sample};
use crate::rng::{self, derive_seed, SimRng};

/// Optional instrumentation for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Reference table for the sup-norm error series.
    pub oracle: Option<Arc<QTable>>,
    /// Pairs the error is measured on; all pairs when `None`.
    pub error_mask: Option<Arc<Vec<bool>>>,
    /// Track the largest actor signal `L` over this many final ticks.
    pub surrogate_window: u64,
    /// Count `(s, a, s')` transitions and their transmission from this tick on.
    pub log_transitions_from: Option<u64>,
    /// Keep a copy of the learner's table every this many ticks.
    pub trajectory_every: Option<u64>,
    /// Step actors on the rayon pool. Results are merged in id order, so
    /// outputs do not depend on this flag.
    pub parallel_actors: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPoint {
    pub tick: u64,
    /// Episodes completed by all actors so far.
    pub episodes: u64,
    /// Learner updates applied so far.
    pub updates: u64,
    pub reward: f64,
    pub error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_index: usize,
    pub seed: u64,
    pub final_q: QTable,
    pub ledger: CommLedger,
    pub evals: Vec<EvalPoint>,
    pub epsilons: Vec<f64>,
    pub final_surrogates: Vec<f64>,
    /// Largest `L` of any actor during the trailing surrogate window.
    pub max_surrogate_tail: f64,
    pub transitions: Option<TransitionCounter>,
    pub trajectory: Vec<QTable>,
    pub episodes: u64,
    pub update_count: u64,
    pub actor_visits: Vec<u64>,
}

pub fn run_seed(master_seed: u64, run_index: usize) -> u64 {
    derive_seed(master_seed, run_index as u64)
}

struct RunSetup {
    seed: u64,
    learner: LearnerState,
    actors: Vec<ActorState>,
    ledger: CommLedger,
    critic_rng: SimRng,
}

fn setup(cfg: &ExperimentConfig, mdp: &Mdp, run_index: usize) -> RunSetup {
    let seed = run_seed(cfg.master_seed, run_index);
    let q0 = QTable::random_uniform(
        mdp.n_states(),
        mdp.n_actions(),
        cfg.q_init_range,
        &mut rng::child(seed, rng::stream::Q_INIT),
    );
    let buffer = ReplayBuffer::new(
        cfg.n_agents * cfg.buffer_per_agent,
        rng::child(seed, rng::stream::LEARNER),
    );
    let snapshot = Arc::new(q0.clone());
    let mut learner = LearnerState::new(q0, buffer, cfg.step_size(), cfg.gamma, cfg.mode);
    learner.batch_size = cfg.batch_size;
    let actors = (0..cfg.n_agents)
        .map(|id| ActorState::spawn(id, seed, mdp, Arc::clone(&snapshot)))
        .collect();
    RunSetup {
        seed,
        learner,
        actors,
        ledger: CommLedger::new(cfg.n_agents, mdp.n_pairs()),
        critic_rng: rng::child(seed, rng::stream::CRITIC),
    }
}

/// Learning and broadcast half of a tick, shared by both code paths.
fn learner_phase(
    cfg: &ExperimentConfig,
    tick: u64,
    delivered: &[Sample],
    learner: &mut LearnerState,
    actors: &mut [ActorState],
    ledger: &mut CommLedger,
) {
    learner.ingest(delivered);
    let learn_now = match cfg.mode {
        LearnMode::Synchronous => true,
        LearnMode::Replay => tick.is_multiple_of(cfg.learn_period),
    };
    if learn_now {
        learner.learn_tick();
    }
    let synced = broadcast_q(learner, actors, tick, cfg.sync_period);
    if synced > 0 {
        let msgs = actors
            .iter()
            .map(|a| Message::QSyncDown { actor_id: a.id })
            .collect();
        ledger.deliver(tick, msgs);
    }
}

struct Observer<'a> {
    cfg: &'a ExperimentConfig,
    mdp: &'a Mdp,
    opts: &'a RunOptions,
    evals: Vec<EvalPoint>,
    trajectory: Vec<QTable>,
    max_surrogate_tail: f64,
}

impl<'a> Observer<'a> {
    fn new(cfg: &'a ExperimentConfig, mdp: &'a Mdp, opts: &'a RunOptions) -> Self {
        Self {
            cfg,
            mdp,
            opts,
            evals: Vec::new(),
            trajectory: Vec::new(),
            max_surrogate_tail: 0.0,
        }
    }

    fn end_of_tick(
        &mut self,
        tick: u64,
        learner: &LearnerState,
        actors: &[ActorState],
        critic_rng: &mut SimRng,
    ) {
        if self.opts.surrogate_window > 0 && tick + self.opts.surrogate_window > self.cfg.ticks {
            for a in actors {
                self.max_surrogate_tail = self.max_surrogate_tail.max(a.surrogate);
            }
        }
        if let Some(every) = self.opts.trajectory_every {
            if every > 0 && tick.is_multiple_of(every) {
                self.trajectory.push(learner.q.clone());
            }
        }
        if self.cfg.eval_every > 0 && tick.is_multiple_of(self.cfg.eval_every) {
            let reward = evaluate_policy(
                &learner.q,
                self.mdp,
                self.cfg.eval_episodes,
                self.cfg.eval_step_cap,
                self.cfg.eval_eps,
                critic_rng,
            );
            let error = self.opts.oracle.as_ref().map(|oracle| {
                let all;
                let mask = match &self.opts.error_mask {
                    Some(m) => m.as_slice(),
                    None => {
                        all = vec![true; self.mdp.n_pairs()];
                        &all
                    }
                };
                sup_dist_masked(&learner.q, oracle, mask).expect("oracle shape matches the MDP")
            });
            self.evals.push(EvalPoint {
                tick,
                episodes: actors.iter().map(|a| a.episodes).sum(),
                updates: learner.update_count,
                reward,
                error,
            });
        }
    }

    fn finish(
        self,
        setup: RunSetup,
        run_index: usize,
        transitions: Option<TransitionCounter>,
    ) -> RunOutcome {
        let RunSetup {
            seed,
            learner,
            actors,
            ledger,
            ..
        } = setup;
        let mut actor_visits = vec![0; self.mdp.n_pairs()];
        for a in &actors {
            for (total, v) in actor_visits.iter_mut().zip(&a.visits) {
                *total += v;
            }
        }
        RunOutcome {
            run_index,
            seed,
            evals: self.evals,
            trajectory: self.trajectory,
            max_surrogate_tail: self.max_surrogate_tail,
            epsilons: actors.iter().map(|a| a.epsilon).collect(),
            final_surrogates: actors.iter().map(|a| a.surrogate).collect(),
            episodes: actors.iter().map(|a| a.episodes).sum(),
            update_count: learner.update_count,
            final_q: learner.q,
            ledger,
            transitions,
            actor_visits,
        }
    }
}

/// One run of the event-triggered pipeline.
pub fn simulate_run(
    cfg: &ExperimentConfig,
    mdp: &Mdp,
    run_index: usize,
    opts: &RunOptions,
) -> RunOutcome {
    let mut setup = setup(cfg, mdp, run_index);
    let mut observer = Observer::new(cfg, mdp, opts);
    let mut transitions = opts
        .log_transitions_from
        .map(|_| TransitionCounter::new(mdp.n_states(), mdp.n_actions()));
    let params = cfg.trigger();

    for tick in 1..=cfg.ticks {
        setup.ledger.begin_tick(tick);
        let outcomes: Vec<TickOutcome> = if opts.parallel_actors {
            setup
                .actors
                .par_iter_mut()
                .map(|a| a.tick(mdp, &params, cfg.gamma, tick))
                .collect()
        } else {
            setup
                .actors
                .iter_mut()
                .map(|a| a.tick(mdp, &params, cfg.gamma, tick))
                .collect()
        };
        if let (Some(counter), Some(from)) = (transitions.as_mut(), opts.log_transitions_from) {
            if tick >= from {
                for o in &outcomes {
                    counter.record(&o.sample, o.transmitted);
                }
            }
        }
        let msgs = outcomes
            .iter()
            .filter(|o| o.transmitted)
            .map(|o| Message::SampleUp(o.sample))
            .collect();
        let delivered = setup.ledger.deliver(tick, msgs);
        learner_phase(
            cfg,
            tick,
            &delivered,
            &mut setup.learner,
            &mut setup.actors,
            &mut setup.ledger,
        );
        observer.end_of_tick(tick, &setup.learner, &setup.actors, &mut setup.critic_rng);
    }
    observer.finish(setup, run_index, transitions)
}

/// One run of the always-transmit baseline: every actor ships every
/// sample, no tracking signal and no trigger.
pub fn simulate_run_vanilla(
    cfg: &ExperimentConfig,
    mdp: &Mdp,
    run_index: usize,
    opts: &RunOptions,
) -> RunOutcome {
    let mut setup = setup(cfg, mdp, run_index);
    let mut observer = Observer::new(cfg, mdp, opts);
    let mut transitions = opts
        .log_transitions_from
        .map(|_| TransitionCounter::new(mdp.n_states(), mdp.n_actions()));

    let step = |actor: &mut ActorState, tick: u64| -> Sample {
        let s = actor.s;
        let a = epsilon_greedy(&actor.local_q, s, actor.epsilon, &mut actor.rng);
        let (s_next, r) = mdp
            .sample_transition(s, a, &mut actor.rng)
            .expect("actors never rest on terminal states");
        let done = mdp.is_terminal(s_next);
        actor.visits[s * mdp.n_actions() + a] += 1;
        if done {
            actor.s = mdp.s0();
            actor.episodes += 1;
        } else {
            actor.s = s_next;
        }
        Sample {
            s,
            a,
            r,
            s_next,
            done,
            actor_id: actor.id,
            tick,
        }
    };

    for tick in 1..=cfg.ticks {
        setup.ledger.begin_tick(tick);
        let samples: Vec<Sample> = if opts.parallel_actors {
            setup.actors.par_iter_mut().map(|a| step(a, tick)).collect()
        } else {
            setup.actors.iter_mut().map(|a| step(a, tick)).collect()
        };
        if let (Some(counter), Some(from)) = (transitions.as_mut(), opts.log_transitions_from) {
            if tick >= from {
                for u in &samples {
                    counter.record(u, true);
                }
            }
        }
        let delivered = setup
            .ledger
            .deliver(tick, samples.into_iter().map(Message::SampleUp).collect());
        learner_phase(
            cfg,
            tick,
            &delivered,
            &mut setup.learner,
            &mut setup.actors,
            &mut setup.ledger,
        );
        observer.end_of_tick(tick, &setup.learner, &setup.actors, &mut setup.critic_rng);
    }
    observer.finish(setup, run_index, transitions)
}

/// Dispatches on `cfg.vanilla`.
pub fn simulate(
    cfg: &ExperimentConfig,
    mdp: &Mdp,
    run_index: usize,
    opts: &RunOptions,
) -> RunOutcome {
    if cfg.vanilla {
        simulate_run_vanilla(cfg, mdp, run_index, opts)
    } else {
        simulate_run(cfg, mdp, run_index, opts)
    }
}

/// Runs `cfg.n_runs` independent simulations in parallel, ordered by index.
pub fn simulate_all(
    cfg: &ExperimentConfig,
    mdp: &Mdp,
    opts: &RunOptions,
) -> Result<Vec<RunOutcome>> {
    cfg.validate()?;
    Ok((0..cfg.n_runs)
        .into_par_iter()
        .map(|i| simulate(cfg, mdp, i, opts))
        .collect())
}
