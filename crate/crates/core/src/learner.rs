//! Central learner: sample ingestion, FIFO replay, Q updates and Q-sync.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;

use crate::actor::ActorState;
use crate::error::{Error, Result};
use crate::qtable::{apply_state_averaged_with, QTable, Sample};
use crate::rng::SimRng;

/// Replay slots per actor.
pub const BUFFER_PER_AGENT: usize = 1000;
/// Minibatch size in replay mode.
pub const BATCH_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnMode {
    /// Each tick's transmitted samples are applied together, averaged per pair.
    Synchronous,
    /// Samples go to a FIFO buffer; each learn step draws one minibatch.
    Replay,
}

impl fmt::Display for LearnMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnMode::Synchronous => "synchronous",
            LearnMode::Replay => "replay",
        })
    }
}

impl FromStr for LearnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synchronous" | "sync" => Ok(LearnMode::Synchronous),
            "replay" => Ok(LearnMode::Replay),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Constant(f64),
    /// `1 / (1 + n)^ω` where `n` counts earlier updates of the same pair.
    Decaying {
        omega: f64,
    },
}

impl StepSize {
    pub fn at(&self, updates_so_far: u64) -> f64 {
        match *self {
            StepSize::Constant(alpha) => alpha,
            StepSize::Decaying { omega } => (1.0 + updates_so_far as f64).powf(-omega),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSize::Constant(alpha) if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::Config(format!("alpha {alpha} not in (0, 1)")))
            }
            StepSize::Decaying { omega } if !(omega > 0.5 && omega <= 1.0) => Err(Error::Config(
                format!("alpha_omega {omega} not in (0.5, 1]"),
            )),
            _ => Ok(()),
        }
    }
}

/// Bounded FIFO store with uniform minibatch draws.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Sample>,
    rng: SimRng,
    ingested: u64,
    evicted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: SimRng) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 20)),
            rng,
            ingested: 0,
            evicted: 0,
        }
    }

    pub fn push(&mut self, sample: Sample) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
            self.evicted += 1;
        }
        self.storage.push_back(sample);
        self.ingested += 1;
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ingested(&self) -> u64 {
        self.ingested
    }

    pub fn evicted(&self) -> u64 {
        self.evicted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.storage.iter()
    }

    /// Uniform draw of `min(size, len)` distinct stored samples.
    pub fn sample_batch(&mut self, size: usize) -> Vec<Sample> {
        let k = size.min(self.storage.len());
        index::sample(&mut self.rng, self.storage.len(), k)
            .into_iter()
            .map(|i| self.storage[i])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LearnerState {
    pub q: QTable,
    pub buffer: ReplayBuffer,
    pub step: StepSize,
    pub gamma: f64,
    pub mode: LearnMode,
    pub batch_size: usize,
    pub update_count: u64,
    pending: Vec<Sample>,
    pair_updates: Vec<u64>,
}

impl LearnerState {
    pub fn new(
        q: QTable,
        buffer: ReplayBuffer,
        step: StepSize,
        gamma: f64,
        mode: LearnMode,
    ) -> Self {
        let pairs = q.n_states() * q.n_actions();
        Self {
            q,
            buffer,
            step,
            gamma,
            mode,
            batch_size: BATCH_SIZE,
            update_count: 0,
            pending: Vec::new(),
            pair_updates: vec![0; pairs],
        }
    }

    /// Accepts this tick's delivered samples.
    pub fn ingest(&mut self, samples: &[Sample]) {
        match self.mode {
            LearnMode::Replay => {
                for &u in samples {
                    self.buffer.push(u);
                }
            }
            LearnMode::Synchronous => self.pending.extend_from_slice(samples),
        }
    }

    pub fn pending(&self) -> &[Sample] {
        &self.pending
    }

    /// One learning step. Synchronous mode consumes the held samples;
    /// replay mode draws one minibatch. Empty input is a no-op.
    pub fn learn_tick(&mut self) {
        let batch = match self.mode {
            LearnMode::Synchronous => std::mem::take(&mut self.pending),
            LearnMode::Replay => {
                if self.buffer.is_empty() {
                    return;
                }
                self.buffer.sample_batch(self.batch_size)
            }
        };
        if batch.is_empty() {
            return;
        }
        let step = self.step;
        let pair_updates = &mut self.pair_updates;
        apply_state_averaged_with(&mut self.q, &batch, self.gamma, |pair| {
            let alpha = step.at(pair_updates[pair]);
            pair_updates[pair] += 1;
            alpha
        });
        self.update_count += 1;
    }

    /// Updates applied to each pair, flattened `s * |A| + a`.
    pub fn pair_updates(&self) -> &[u64] {
        &self.pair_updates
    }

    /// Checkpoint text: a metadata comment line followed by the Q-table CSV.
    pub fn checkpoint(&self, tick: u64) -> String {
        format!(
            "# tick={tick},update_count={},mode={}\n{}",
            self.update_count,
            self.mode,
            self.q.to_csv()
        )
    }
}

/// Metadata recovered from a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tick: u64,
    pub update_count: u64,
    pub mode: LearnMode,
    pub q: QTable,
}

pub fn read_checkpoint(text: &str) -> Result<Checkpoint> {
    let meta = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("# "))
        .ok_or(Error::Csv {
            line: 1,
            msg: "missing checkpoint metadata line".into(),
        })?;
    let (mut tick, mut updates, mut mode) = (None, None, None);
    for field in meta.split(',') {
        let bad = || Error::Csv {
            line: 1,
            msg: format!("bad metadata field {field:?}"),
        };
        let (key, value) = field.split_once('=').ok_or_else(bad)?;
        match key {
            "tick" => tick = Some(value.parse().map_err(|_| bad())?),
            "update_count" => updates = Some(value.parse().map_err(|_| bad())?),
            "mode" => mode = Some(value.parse()?),
            _ => return Err(bad()),
        }
    }
    let missing = |what: &str| Error::Csv {
        line: 1,
        msg: format!("checkpoint metadata lacks {what}"),
    };
    Ok(Checkpoint {
        tick: tick.ok_or_else(|| missing("tick"))?,
        update_count: updates.ok_or_else(|| missing("update_count"))?,
        mode: mode.ok_or_else(|| missing("mode"))?,
        q: QTable::from_csv(text)?,
    })
}

/// Pushes a snapshot of the learner's table to every actor when
/// `tick % sync_period == 0`. Returns the number of sync messages.
pub fn broadcast_q(
    learner: &LearnerState,
    actors: &mut [ActorState],
    tick: u64,
    sync_period: u64,
) -> usize {
    assert!(sync_period >= 1, "sync_period must be at least 1");
    if !tick.is_multiple_of(sync_period) {
        return 0;
    }
    let snapshot = Arc::new(learner.q.clone());
    for actor in actors.iter_mut() {
        actor.local_q = Arc::clone(&snapshot);
    }
    actors.len()
}
