//! Explorer agents.
//!
//! An actor walks its own copy of the MDP with an ε-greedy policy over the
//! last Q-table it received, tracks an exponentially smoothed TD-error
//! signal `L`, and only emits a sample when the trigger fires.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::qtable::{td_error, QTable, Sample};
use crate::rng::{self, SimRng};

/// Exploration rates an actor may be created with.
pub const EXPLORATION_RATES: [f64; 6] = [0.01, 0.2, 0.4, 0.6, 0.8, 0.99];

/// Lower bound on any actor's exploration rate.
pub const EPSILON_MIN: f64 = 0.01;

/// Parameters of the transmission trigger and the tracking signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerParams {
    /// Fraction of `L` a TD error must reach to be sent.
    pub rho: f64,
    /// Absolute TD-error floor for sending.
    pub eps_threshold: f64,
    /// Smoothing weight of the tracking signal.
    pub beta: f64,
}

impl TriggerParams {
    /// Parameters under which every sample is sent.
    pub fn always(beta: f64) -> Self {
        Self {
            rho: 0.0,
            eps_threshold: 0.0,
            beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} not in [0, 1]", self.rho)));
        }
        if !self.eps_threshold.is_finite() || self.eps_threshold < 0.0 {
            return Err(Error::Config(format!(
                "eps_threshold {} must be a nonnegative number",
                self.eps_threshold
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta {} not in (0, 1)", self.beta)));
        }
        Ok(())
    }
}

/// `(1 − β) L + β |Δ|`.
pub fn update_surrogate(l: f64, delta_abs: f64, beta: f64) -> Result<f64> {
    if l < 0.0 {
        return Err(Error::NegativeInput(l));
    }
    if delta_abs < 0.0 {
        return Err(Error::NegativeInput(delta_abs));
    }
    Ok((1.0 - beta) * l + beta * delta_abs)
}

/// Trigger rule: send iff `|Δ| ≥ max(ρ L, ε)`.
pub fn should_transmit(delta_abs: f64, l: f64, params: &TriggerParams) -> bool {
    delta_abs >= (params.rho * l).max(params.eps_threshold)
}

#[derive(Debug, Clone)]
pub struct ActorState {
    pub id: usize,
    pub s: usize,
    pub epsilon: f64,
    /// TD-error tracking signal.
    pub surrogate: f64,
    /// Last Q-table received from the learner.
    pub local_q: Arc<QTable>,
    pub rng: SimRng,
    /// Per-pair visit counts, flattened `s * |A| + a`.
    pub visits: Vec<u64>,
    pub episodes: u64,
}

/// Result of one actor step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutcome {
    pub sample: Sample,
    pub delta: f64,
    pub transmitted: bool,
}

impl ActorState {
    /// New actor at `s0` with an exploration rate drawn from
    /// [`EXPLORATION_RATES`] using the actor's own stream.
    pub fn spawn(id: usize, run_seed: u64, mdp: &Mdp, local_q: Arc<QTable>) -> Self {
        let mut rng = rng::child(run_seed, rng::stream::ACTOR.wrapping_add(id as u64));
        let epsilon = EXPLORATION_RATES[rng.random_range(0..EXPLORATION_RATES.len())];
        Self::with_epsilon(id, epsilon, rng, mdp, local_q)
    }

    pub fn with_epsilon(
        id: usize,
        epsilon: f64,
        rng: SimRng,
        mdp: &Mdp,
        local_q: Arc<QTable>,
    ) -> Self {
        assert!(
            (EPSILON_MIN..=1.0).contains(&epsilon),
            "exploration rate {epsilon} below the minimum {EPSILON_MIN}"
        );
        Self {
            id,
            s: mdp.s0(),
            epsilon,
            surrogate: 0.0,
            local_q,
            rng,
            visits: vec![0; mdp.n_pairs()],
            episodes: 0,
        }
    }

    /// ε-greedy over `local_q`: one draw for the coin, one more for a
    /// random action.
    pub fn select_action(&mut self) -> usize {
        epsilon_greedy(&self.local_q, self.s, self.epsilon, &mut self.rng)
    }

    /// One exploration step: act, observe, score the sample against
    /// `local_q`, decide on transmission with the current `L`, then update
    /// `L` and move (resetting to `s0` on a terminal state).
    pub fn tick(
        &mut self,
        mdp: &Mdp,
        params: &TriggerParams,
        gamma: f64,
        tick: u64,
    ) -> TickOutcome {
        let a = self.select_action();
        let (s_next, r) = mdp
            .sample_transition(self.s, a, &mut self.rng)
            .expect("actors never rest on terminal states");
        let done = mdp.is_terminal(s_next);
        let sample = Sample {
            s: self.s,
            a,
            r,
            s_next,
            done,
            actor_id: self.id,
            tick,
        };
        let delta = td_error(&self.local_q, &sample, gamma);
        let transmitted = should_transmit(delta.abs(), self.surrogate, params);
        self.surrogate = update_surrogate(self.surrogate, delta.abs(), params.beta)
            .expect("surrogate and |Δ| are nonnegative");
        self.visits[self.s * mdp.n_actions() + a] += 1;
        if done {
            self.s = mdp.s0();
            self.episodes += 1;
        } else {
            self.s = s_next;
        }
        TickOutcome {
            sample,
            delta,
            transmitted,
        }
    }
}

/// ε-greedy choice shared by actors and the critic.
pub fn epsilon_greedy<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> usize {
    let coin: f64 = rng.random();
    if coin < epsilon {
        rng.random_range(0..q.n_actions())
    } else {
        q.greedy_action(s)
    }
}
