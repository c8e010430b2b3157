//! Star-topology channel between actors and the learner.
//!
//! Delivery is lossless and same-tick. The ledger counts every message and
//! its size under a fixed size model, independent of platform layouts.

use std::fmt::Write as _;

use crate::qtable::Sample;

/// Bytes per real-valued scalar.
pub const SCALAR_BYTES: u64 = 8;
/// Bytes per integer id.
pub const ID_BYTES: u64 = 4;
/// `(s, a, r, s')` as scalars plus actor id and tick.
pub const SAMPLE_UP_BYTES: u64 = 4 * SCALAR_BYTES + 2 * ID_BYTES;

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Actor to learner.
    SampleUp(Sample),
    /// Learner to actor: a full Q-table snapshot.
    QSyncDown { actor_id: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TickRecord {
    pub tick: u64,
    pub samples_up: u64,
    pub qsync_down: u64,
    pub cum_samples_up: u64,
    pub cum_qsync_down: u64,
    pub cum_bytes_up: u64,
    pub cum_bytes_down: u64,
}

#[derive(Debug, Clone)]
pub struct CommLedger {
    qsync_bytes: u64,
    records: Vec<TickRecord>,
    per_actor: Vec<u64>,
    totals: TickRecord,
}

impl CommLedger {
    /// Ledger for `n_actors` actors exchanging tables of `n_pairs` entries.
    pub fn new(n_actors: usize, n_pairs: usize) -> Self {
        Self {
            qsync_bytes: n_pairs as u64 * SCALAR_BYTES,
            records: Vec::new(),
            per_actor: vec![0; n_actors],
            totals: TickRecord::default(),
        }
    }

    pub fn qsync_bytes(&self) -> u64 {
        self.qsync_bytes
    }

    /// Opens a (possibly empty) record for `tick`.
    pub fn begin_tick(&mut self, tick: u64) {
        if self.records.last().is_some_and(|r| r.tick == tick) {
            return;
        }
        self.totals.tick = tick;
        self.totals.samples_up = 0;
        self.totals.qsync_down = 0;
        self.records.push(self.totals);
    }

    /// Delivers messages in order during `tick` and returns the sample
    /// payloads for the learner.
    pub fn deliver(&mut self, tick: u64, msgs: Vec<Message>) -> Vec<Sample> {
        self.begin_tick(tick);
        let mut samples = Vec::new();
        for msg in msgs {
            match msg {
                Message::SampleUp(u) => {
                    self.totals.samples_up += 1;
                    self.totals.cum_samples_up += 1;
                    self.totals.cum_bytes_up += SAMPLE_UP_BYTES;
                    if let Some(count) = self.per_actor.get_mut(u.actor_id) {
                        *count += 1;
                    }
                    samples.push(u);
                }
                Message::QSyncDown { .. } => {
                    self.totals.qsync_down += 1;
                    self.totals.cum_qsync_down += 1;
                    self.totals.cum_bytes_down += self.qsync_bytes;
                }
            }
        }
        if let Some(last) = self.records.last_mut() {
            *last = self.totals;
        }
        samples
    }

    pub fn records(&self) -> &[TickRecord] {
        &self.records
    }

    pub fn totals(&self) -> TickRecord {
        self.totals
    }

    pub fn per_actor(&self) -> &[u64] {
        &self.per_actor
    }

    /// Mean per-tick `SampleUp` count over the trailing `window` ticks
    /// (the whole history if shorter). Zero when nothing was recorded.
    pub fn event_rate(&self, window: usize) -> f64 {
        let window = window.max(1).min(self.records.len());
        if window == 0 {
            return 0.0;
        }
        let tail = &self.records[self.records.len() - window..];
        tail.iter().map(|r| r.samples_up).sum::<u64>() as f64 / window as f64
    }

    /// Per-tick CSV with a `#` line declaring the size model.
    pub fn to_csv(&self) -> String {
        let mut text = format!(
            "# size_model: scalar_bytes={SCALAR_BYTES} id_bytes={ID_BYTES} sample_up_bytes={SAMPLE_UP_BYTES} qsync_down_bytes={}\n",
            self.qsync_bytes
        );
        text.push_str("tick,samples_up,qsync_down,cum_samples_up,cum_bytes_up,cum_bytes_down\n");
        for r in &self.records {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{}",
                r.tick,
                r.samples_up,
                r.qsync_down,
                r.cum_samples_up,
                r.cum_bytes_up,
                r.cum_bytes_down
            );
        }
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn up(actor_id: usize) -> Message {
        Message::SampleUp(Sample {
            s: 0,
            a: 0,
            r: 0.0,
            s_next: 0,
            done: false,
            actor_id,
            tick: 0,
        })
    }

    #[test]
    fn empty_delivery_changes_nothing() {
        let mut ledger = CommLedger::new(4, 16);
        ledger.begin_tick(1);
        let before = ledger.totals();
        assert!(ledger.deliver(1, vec![]).is_empty());
        assert_eq!(ledger.totals(), before);
        assert_eq!(ledger.records().len(), 1);
    }

    #[test]
    fn all_actors_trigger() {
        let n = 8;
        let mut ledger = CommLedger::new(n, 16);
        let out = ledger.deliver(1, (0..n).map(up).collect());
        assert_eq!(out.len(), n);
        assert_eq!(ledger.records()[0].samples_up, n as u64);
        assert!(out.iter().enumerate().all(|(i, u)| u.actor_id == i));
    }

    #[test]
    fn vanilla_totals_and_rate() {
        let (n, ticks) = (5usize, 200u64);
        let mut ledger = CommLedger::new(n, 36 * 4);
        for t in 1..=ticks {
            ledger.deliver(t, (0..n).map(up).collect());
            ledger.deliver(
                t,
                (0..n)
                    .map(|actor_id| Message::QSyncDown { actor_id })
                    .collect(),
            );
        }
        let totals = ledger.totals();
        assert_eq!(totals.cum_samples_up, n as u64 * ticks);
        assert_eq!(totals.cum_bytes_up, totals.cum_samples_up * SAMPLE_UP_BYTES);
        assert_eq!(
            totals.cum_bytes_down,
            totals.cum_qsync_down * 36 * 4 * SCALAR_BYTES
        );
        assert_eq!(ledger.records().len(), ticks as usize);
        for w in [1, 10, 1000] {
            assert_eq!(ledger.event_rate(w), n as f64);
        }
        assert!(ledger.per_actor().iter().all(|&c| c == ticks));
    }

    #[test]
    fn window_one_is_last_tick() {
        let mut ledger = CommLedger::new(3, 4);
        ledger.deliver(1, vec![up(0), up(1), up(2)]);
        ledger.deliver(2, vec![up(1)]);
        assert_eq!(ledger.event_rate(1), 1.0);
        assert_eq!(ledger.event_rate(2), 2.0);
        assert_eq!(ledger.event_rate(50), 2.0);
        assert_eq!(CommLedger::new(1, 1).event_rate(5), 0.0);
    }

    #[test]
    fn csv_shape() {
        let mut ledger = CommLedger::new(2, 4);
        ledger.deliver(1, vec![up(0), Message::QSyncDown { actor_id: 0 }]);
        let csv = ledger.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# size_model"));
        assert_eq!(
            lines[1],
            "tick,samples_up,qsync_down,cum_samples_up,cum_bytes_up,cum_bytes_down"
        );
        assert_eq!(lines[2], "1,1,1,1,40,32");
    }

    proptest! {
        #[test]
        fn cumulative_counts_monotone(per_tick in prop::collection::vec((0usize..6, 0usize..3), 1..60)) {
            let mut ledger = CommLedger::new(6, 10);
            for (t, &(ups, syncs)) in per_tick.iter().enumerate() {
                let mut msgs: Vec<Message> = (0..ups).map(up).collect();
                msgs.extend((0..syncs).map(|actor_id| Message::QSyncDown { actor_id }));
                ledger.deliver(t as u64 + 1, msgs);
            }
            for w in ledger.records().windows(2) {
                prop_assert!(w[1].cum_samples_up >= w[0].cum_samples_up);
                prop_assert!(w[1].cum_bytes_down >= w[0].cum_bytes_down);
            }
            for r in ledger.records() {
                prop_assert!(r.samples_up <= 6);
                prop_assert_eq!(r.cum_bytes_up, r.cum_samples_up * SAMPLE_UP_BYTES);
                prop_assert_eq!(r.cum_bytes_down, r.cum_qsync_down * 10 * SCALAR_BYTES);
            }
        }
    }
}
