//! Event-based distributed Q-learning on tabular MDPs.
//!
//! A pool of exploring actors steps through an MDP and decides, sample by
//! sample, whether its TD error is large enough to be worth sending to a
//! central learner. The learner holds the only authoritative Q-table and
//! periodically broadcasts it back. The crate includes a Frozen Lake
//! builder, an exact value-iteration oracle, a byte-counting network
//! ledger and a deterministic multi-run experiment driver.

pub mod acceptance;
pub mod actor;
pub mod error;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod network;
pub mod oracle;
pub mod qtable;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{build_frozen_lake, GridSpec, Mdp};
pub use qtable::{QTable, Sample};
