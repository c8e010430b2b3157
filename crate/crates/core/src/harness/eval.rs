//! Critic evaluation of a Q-table.

use rand::Rng;

use crate::actor::epsilon_greedy;
use crate::mdp::Mdp;
use crate::qtable::QTable;

/// Exploration of the critic.
pub const CRITIC_EPSILON: f64 = 0.01;
pub const CRITIC_EPISODES: usize = 10;
pub const CRITIC_STEP_CAP: usize = 1500;

/// Mean undiscounted episodic reward of the ε-greedy policy over `q`,
/// each episode starting at `s0` and cut off after `step_cap` steps.
pub fn evaluate_policy<R: Rng + ?Sized>(
    q: &QTable,
    mdp: &Mdp,
    n_episodes: usize,
    step_cap: usize,
    eps0: f64,
    rng: &mut R,
) -> f64 {
    assert!(n_episodes >= 1, "at least one evaluation episode");
    let mut total = 0.0;
    for _ in 0..n_episodes {
        let mut s = mdp.s0();
        for _ in 0..step_cap {
            let a = epsilon_greedy(q, s, eps0, rng);
            let (next, r) = mdp
                .sample_transition(s, a, rng)
                .expect("episodes stop at terminal states");
            total += r;
            if mdp.is_terminal(next) {
                break;
            }
            s = next;
        }
    }
    total / n_episodes as f64
}
