//! Q-table storage and Q-learning arithmetic.

use std::fmt::Write as _;
use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};

/// Dense `|S| x |A|` table of action values.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

/// One experience `(s, a, r, s')` tagged with its origin.
///
/// `done` marks `s_next` as terminal so the learner bootstraps with 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub done: bool,
    pub actor_id: usize,
    pub tick: u64,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::filled(n_states, n_actions, 0.0)
    }

    pub fn filled(n_states: usize, n_actions: usize, value: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![value; n_states * n_actions],
        }
    }

    pub fn from_values(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch(
                n_states,
                n_actions,
                values.len() / n_actions.max(1),
                n_actions,
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMdp("non-finite Q value".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    /// Entries drawn uniformly from `[-range, range]`; `range == 0` gives zeros.
    pub fn random_uniform<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        range: f64,
        rng: &mut R,
    ) -> Self {
        let values = (0..n_states * n_actions)
            .map(|_| {
                if range > 0.0 {
                    rng.random_range(-range..=range)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.values[s * self.n_actions + a] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// `max_a Q(s, a)`.
    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax over actions, ties to the lowest index.
    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn same_shape(&self, other: &QTable) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(
                self.n_states,
                self.n_actions,
                other.n_states,
                other.n_actions,
            ));
        }
        Ok(())
    }

    /// Writes the `s,a,value` CSV form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(self.to_csv().as_bytes())
    }

    pub fn to_csv(&self) -> String {
        let mut text = String::from("s,a,value\n");
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let _ = writeln!(text, "{s},{a},{}", self.get(s, a));
            }
        }
        text
    }

    /// Parses the `s,a,value` CSV form. Lines starting with `#` are skipped.
    /// The shape is inferred from the largest indices present.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Csv {
                line: lineno + 1,
                msg,
            };
            if !header_seen {
                if line != "s,a,value" {
                    return Err(err(format!("expected header s,a,value, got {line:?}")));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            }
            let s: usize = fields[0].parse().map_err(|e| err(format!("s: {e}")))?;
            let a: usize = fields[1].parse().map_err(|e| err(format!("a: {e}")))?;
            let v: f64 = fields[2].parse().map_err(|e| err(format!("value: {e}")))?;
            entries.push((s, a, v));
        }
        if entries.is_empty() {
            return Err(Error::Csv {
                line: 0,
                msg: "no entries".into(),
            });
        }
        let n_states = entries.iter().map(|e| e.0).max().unwrap_or(0) + 1;
        let n_actions = entries.iter().map(|e| e.1).max().unwrap_or(0) + 1;
        if entries.len() != n_states * n_actions {
            return Err(Error::Csv {
                line: 0,
                msg: format!(
                    "{} entries do not fill a {n_states}x{n_actions} table",
                    entries.len()
                ),
            });
        }
        let mut seen = vec![false; n_states * n_actions];
        let mut values = vec![0.0; n_states * n_actions];
        for (s, a, v) in entries {
            let idx = s * n_actions + a;
            if seen[idx] {
                return Err(Error::Csv {
                    line: 0,
                    msg: format!("duplicate entry ({s}, {a})"),
                });
            }
            seen[idx] = true;
            values[idx] = v;
        }
        QTable::from_values(n_states, n_actions, values)
    }
}

/// `r + γ max_a' Q(s', a') − Q(s, a)`, bootstrapping 0 at terminal `s'`.
pub fn td_error(q: &QTable, u: &Sample, gamma: f64) -> f64 {
    let bootstrap = if u.done { 0.0 } else { q.max_value(u.s_next) };
    u.r + gamma * bootstrap - q.get(u.s, u.a)
}

/// Single-sample Q-learning step on entry `(s, a)`.
pub fn apply_single(q: &mut QTable, u: &Sample, alpha: f64, gamma: f64) {
    let delta = td_error(q, u, gamma);
    let old = q.get(u.s, u.a);
    q.set(u.s, u.a, old + alpha * delta);
}

/// Simultaneous update from a batch: each `(s, a)` present moves by
/// `alpha` times the mean TD error of its samples, all TD errors taken
/// against the table as it was before the call.
pub fn apply_state_averaged(q: &mut QTable, batch: &[Sample], alpha: f64, gamma: f64) {
    apply_state_averaged_with(q, batch, gamma, |_| alpha);
}

/// As [`apply_state_averaged`] with a per-pair step size. `alpha_for` is
/// called once per distinct pair (flattened `s * |A| + a`) in ascending
/// pair order. Returns the number of pairs updated.
pub fn apply_state_averaged_with<F>(
    q: &mut QTable,
    batch: &[Sample],
    gamma: f64,
    mut alpha_for: F,
) -> usize
where
    F: FnMut(usize) -> f64,
{
    if batch.is_empty() {
        return 0;
    }
    let n_actions = q.n_actions;
    let mut deltas: Vec<(usize, f64)> = batch
        .iter()
        .map(|u| (u.s * n_actions + u.a, td_error(q, u, gamma)))
        .collect();
    deltas.sort_by_key(|&(pair, _)| pair);

    let mut groups = 0;
    for group in deltas.chunk_by(|x, y| x.0 == y.0) {
        let pair = group[0].0;
        let mean = group.iter().map(|&(_, d)| d).sum::<f64>() / group.len() as f64;
        q.values[pair] += alpha_for(pair) * mean;
        groups += 1;
    }
    groups
}

/// `max_{s,a} |q1 − q2|`.
pub fn sup_dist(q1: &QTable, q2: &QTable) -> Result<f64> {
    q1.same_shape(q2)?;
    Ok(q1
        .values
        .iter()
        .zip(&q2.values)
        .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// Sup distance restricted to pairs where `mask` is true.
pub fn sup_dist_masked(q1: &QTable, q2: &QTable, mask: &[bool]) -> Result<f64> {
    q1.same_shape(q2)?;
    if mask.len() != q1.values.len() {
        return Err(Error::ShapeMismatch(
            q1.n_states,
            q1.n_actions,
            mask.len() / q1.n_actions.max(1),
            q1.n_actions,
        ));
    }
    Ok(q1
        .values
        .iter()
        .zip(&q2.values)
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold(0.0, |m, ((a, b), _)| m.max((a - b).abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;

    fn sample(s: usize, a: usize, r: f64, s_next: usize) -> Sample {
        Sample {
            s,
            a,
            r,
            s_next,
            done: false,
            actor_id: 0,
            tick: 0,
        }
    }

    #[test]
    fn td_error_zero_table() {
        let q = QTable::zeros(3, 2);
        assert_eq!(td_error(&q, &sample(0, 1, 1.0, 2), 0.9), 1.0);
    }

    #[test]
    fn td_error_hand_value() {
        let mut q = QTable::zeros(2, 2);
        q.set(0, 0, 2.0);
        q.set(1, 0, 3.0);
        q.set(1, 1, -1.0);
        // Scalar oracle computed independently of the table.
        let (r, gamma, q_sa, v_next) = (0.5_f64, 0.9_f64, 2.0_f64, 3.0_f64);
        let expected = r + gamma * v_next - q_sa;
        let got = td_error(&q, &sample(0, 0, 0.5, 1), 0.9);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 1.2).abs() < 1e-12);
    }

    #[test]
    fn td_error_terminal_bootstrap_is_zero() {
        let mut q = QTable::zeros(2, 1);
        q.set(1, 0, 100.0);
        let mut u = sample(0, 0, 10.0, 1);
        u.done = true;
        assert_eq!(td_error(&q, &u, 0.97), 10.0);
    }

    #[test]
    fn single_update() {
        let mut q = QTable::zeros(2, 2);
        let u = sample(0, 0, 1.2, 1);
        assert_eq!(td_error(&q, &u, 0.9), 1.2);
        apply_single(&mut q, &u, 0.01, 0.9);
        assert!((q.get(0, 0) - 0.012).abs() < 1e-12);

        let before = q.clone();
        apply_single(&mut q, &sample(1, 1, 5.0, 0), 0.0, 0.9);
        assert_eq!(q, before);
    }

    #[test]
    fn zero_delta_leaves_table() {
        let mut q = QTable::zeros(2, 1);
        q.set(0, 0, 0.9);
        q.set(1, 0, 1.0);
        let before = q.clone();
        apply_single(&mut q, &sample(0, 0, 0.0, 1), 0.5, 0.9);
        assert_eq!(q, before);
    }

    #[test]
    fn averaged_two_samples() {
        let mut q = QTable::zeros(3, 1);
        q.set(1, 0, 1.0 / 0.5);
        q.set(2, 0, 3.0 / 0.5);
        // Δ = γ·V(s'): 1.0 and 3.0
        let batch = [sample(0, 0, 0.0, 1), sample(0, 0, 0.0, 2)];
        apply_state_averaged(&mut q, &batch, 0.1, 0.5);
        assert!((q.get(0, 0) - 0.2).abs() < 1e-12);
        assert_eq!(q.get(1, 0), 2.0);
        assert_eq!(q.get(2, 0), 6.0);
    }

    #[test]
    fn averaged_single_matches_single() {
        let mut rng = seeded(5);
        let base = QTable::random_uniform(4, 3, 2.0, &mut rng);
        let u = sample(2, 1, 0.3, 3);
        let mut a = base.clone();
        let mut b = base.clone();
        apply_single(&mut a, &u, 0.2, 0.9);
        apply_state_averaged(&mut b, &[u], 0.2, 0.9);
        assert_eq!(a, b);
        let mut c = base.clone();
        apply_state_averaged(&mut c, &[], 0.2, 0.9);
        assert_eq!(c, base);
    }

    #[test]
    fn averaged_uses_pre_update_table() {
        // (0,0) -> 0 self loop: sequential updates would see the first change.
        let mut q = QTable::filled(1, 1, 1.0);
        let batch = [sample(0, 0, 1.0, 0), sample(0, 0, 1.0, 0)];
        apply_state_averaged(&mut q, &batch, 0.5, 0.5);
        // Δ = 1 + 0.5 - 1 = 0.5 for both.
        assert!((q.get(0, 0) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn sup_dist_cases() {
        let mut rng = seeded(9);
        let a = QTable::random_uniform(5, 4, 1.0, &mut rng);
        assert_eq!(sup_dist(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b.set(3, 2, a.get(3, 2) + 0.5);
        assert!((sup_dist(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert!(sup_dist(&a, &QTable::zeros(4, 4)).is_err());
    }

    #[test]
    fn sup_dist_matches_scan() {
        let mut rng = seeded(10);
        for _ in 0..20 {
            let a = QTable::random_uniform(7, 3, 5.0, &mut rng);
            let b = QTable::random_uniform(7, 3, 5.0, &mut rng);
            let mut oracle = 0.0_f64;
            for s in 0..7 {
                for act in 0..3 {
                    let d = (a.get(s, act) - b.get(s, act)).abs();
                    if d > oracle {
                        oracle = d;
                    }
                }
            }
            assert_eq!(sup_dist(&a, &b).unwrap(), oracle);
        }
    }

    #[test]
    fn masked_distance() {
        let a = QTable::zeros(2, 2);
        let mut b = QTable::zeros(2, 2);
        b.set(1, 1, 4.0);
        b.set(0, 1, 1.0);
        let mask = [true, true, true, false];
        assert_eq!(sup_dist_masked(&a, &b, &mask).unwrap(), 1.0);
        assert!(sup_dist_masked(&a, &b, &mask[..3]).is_err());
    }

    #[test]
    fn greedy_rows() {
        let q = QTable::from_values(3, 4, vec![1., 3., 2., 0., 5., 5., 1., 1., 7., 7., 7., 7.])
            .unwrap();
        assert_eq!(q.greedy_action(0), 1);
        assert_eq!(q.greedy_action(1), 0);
        assert_eq!(q.greedy_action(2), 0);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let mut rng = seeded(1);
        let q = QTable::random_uniform(6, 4, 3.0, &mut rng);
        let text = format!("# comment\n{}", q.to_csv());
        assert_eq!(QTable::from_csv(&text).unwrap(), q);
        assert!(QTable::from_csv("s,a,value\n0,0,1\n0,0,2\n").is_err());
        assert!(QTable::from_csv("x,y\n0,0,1\n").is_err());
        assert!(QTable::from_csv("s,a,value\n0,0,1\n1,1,2\n").is_err());
        assert!(QTable::from_csv("s,a,value\n0,0,abc\n").is_err());
    }

    fn table_strategy() -> impl Strategy<Value = QTable> {
        prop::collection::vec(-10.0f64..10.0, 12)
            .prop_map(|v| QTable::from_values(4, 3, v).unwrap())
    }

    fn sample_strategy() -> impl Strategy<Value = Sample> {
        (0usize..4, 0usize..3, -2.0f64..2.0, 0usize..4, any::<bool>()).prop_map(
            |(s, a, r, s_next, done)| Sample {
                s,
                a,
                r,
                s_next,
                done,
                actor_id: 0,
                tick: 0,
            },
        )
    }

    proptest! {
        #[test]
        fn updates_touch_only_batch_pairs(
            q in table_strategy(),
            batch in prop::collection::vec(sample_strategy(), 0..8),
            alpha in 0.0f64..1.0,
        ) {
            let mut updated = q.clone();
            apply_state_averaged(&mut updated, &batch, alpha, 0.9);
            for s in 0..4 {
                for a in 0..3 {
                    if !batch.iter().any(|u| u.s == s && u.a == a) {
                        prop_assert_eq!(updated.get(s, a), q.get(s, a));
                    }
                }
            }
            if let Some(u) = batch.first() {
                let mut single = q.clone();
                apply_single(&mut single, u, alpha, 0.9);
                for s in 0..4 {
                    for a in 0..3 {
                        if (s, a) != (u.s, u.a) {
                            prop_assert_eq!(single.get(s, a), q.get(s, a));
                        }
                    }
                }
            }
        }

        #[test]
        fn identical_copies_equal_single(
            q in table_strategy(),
            u in sample_strategy(),
            k in 1usize..6,
            alpha in 0.0f64..1.0,
        ) {
            let mut single = q.clone();
            apply_single(&mut single, &u, alpha, 0.9);
            let mut batched = q.clone();
            apply_state_averaged(&mut batched, &vec![u; k], alpha, 0.9);
            prop_assert!((single.get(u.s, u.a) - batched.get(u.s, u.a)).abs() < 1e-12);
        }

        #[test]
        fn td_error_linear_in_reward(q in table_strategy(), u in sample_strategy(), c in -5.0f64..5.0) {
            let mut shifted = u;
            shifted.r += c;
            let diff = td_error(&q, &shifted, 0.9) - td_error(&q, &u, 0.9);
            prop_assert!((diff - c).abs() < 1e-9);
        }

        #[test]
        fn greedy_shift_invariant(
            raw in prop::collection::vec(-80i32..80, 12),
            s in 0usize..4,
            c in -400i32..400,
        ) {
            // Eighths keep every sum exact, so ties survive the shift.
            let q = QTable::from_values(4, 3, raw.iter().map(|&v| v as f64 / 8.0).collect()).unwrap();
            let c = c as f64 / 8.0;
            let shifted: Vec<f64> = q.values().iter().map(|v| v + c).collect();
            let shifted = QTable::from_values(4, 3, shifted).unwrap();
            prop_assert_eq!(q.greedy_action(s), shifted.greedy_action(s));
        }
    }
}
