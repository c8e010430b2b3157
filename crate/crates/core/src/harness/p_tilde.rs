//! Empirical transition table of transmitted samples.
//!
//! Counting which `(s, a, s')` transitions actually reached the learner
//! gives the effective transition table the learner is averaging over.

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::qtable::Sample;

/// Rows with fewer transmitted samples than this are flagged.
pub const DEFAULT_MIN_COUNT: u64 = 100;

/// Streaming `(s, a, s')` counts of observed and transmitted samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionCounter {
    n_states: usize,
    n_actions: usize,
    observed: Vec<u64>,
    transmitted: Vec<u64>,
}

impl TransitionCounter {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        let len = n_states * n_actions * n_states;
        Self {
            n_states,
            n_actions,
            observed: vec![0; len],
            transmitted: vec![0; len],
        }
    }

    fn index(&self, u: &Sample) -> usize {
        (u.s * self.n_actions + u.a) * self.n_states + u.s_next
    }

    pub fn record(&mut self, u: &Sample, transmitted: bool) {
        let i = self.index(u);
        self.observed[i] += 1;
        if transmitted {
            self.transmitted[i] += 1;
        }
    }

    pub fn merge(&mut self, other: &TransitionCounter) {
        for (a, b) in self.observed.iter_mut().zip(&other.observed) {
            *a += b;
        }
        for (a, b) in self.transmitted.iter_mut().zip(&other.transmitted) {
            *a += b;
        }
    }

    pub fn total_observed(&self) -> u64 {
        self.observed.iter().sum()
    }

    pub fn total_transmitted(&self) -> u64 {
        self.transmitted.iter().sum()
    }

    /// Transmitted count of `(s, a, s')`.
    pub fn transmitted(&self, s: usize, a: usize, s_next: usize) -> u64 {
        self.transmitted[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Builds `P̃` from the transmitted counts. Terminal rows keep their
    /// original entries; rows without any transmitted sample fall back to
    /// the true row.
    pub fn estimate(&self, mdp: &Mdp, min_count: u64) -> Result<PTildeEstimate> {
        if self.total_observed() == 0 {
            return Err(Error::EmptyLog);
        }
        if (self.n_states, self.n_actions) != (mdp.n_states(), mdp.n_actions()) {
            return Err(Error::ShapeMismatch(
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions(),
            ));
        }
        let n = self.n_states;
        let mut table = mdp.transitions().to_vec();
        let mut fallback = Vec::new();
        let mut sparse = Vec::new();
        for s in 0..n {
            if mdp.is_terminal(s) {
                continue;
            }
            for a in 0..self.n_actions {
                let start = (s * self.n_actions + a) * n;
                let counts = &self.transmitted[start..start + n];
                let total: u64 = counts.iter().sum();
                if total == 0 {
                    fallback.push((s, a));
                    continue;
                }
                if total < min_count {
                    sparse.push((s, a));
                }
                for (p, &c) in table[start..start + n].iter_mut().zip(counts) {
                    *p = c as f64 / total as f64;
                }
            }
        }
        Ok(PTildeEstimate {
            p_tilde: mdp.with_transitions(table)?,
            fallback_rows: fallback,
            sparse_rows: sparse,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PTildeEstimate {
    /// The original MDP with its transition table replaced by `P̃`.
    pub p_tilde: Mdp,
    /// Non-terminal `(s, a)` rows that received no transmitted sample.
    pub fallback_rows: Vec<(usize, usize)>,
    /// Rows with fewer than `min_count` transmitted samples.
    pub sparse_rows: Vec<(usize, usize)>,
}

/// Estimates `P̃` from a log of samples and their transmission flags.
pub fn estimate_p_tilde<'a, I>(log: I, mdp: &Mdp, min_count: u64) -> Result<PTildeEstimate>
where
    I: IntoIterator<Item = (&'a Sample, bool)>,
{
    let mut counter = TransitionCounter::new(mdp.n_states(), mdp.n_actions());
    for (u, sent) in log {
        counter.record(u, sent);
    }
    counter.estimate(mdp, min_count)
}
