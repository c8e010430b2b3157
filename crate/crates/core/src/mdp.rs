//! Finite MDPs, the Frozen Lake grid builder and transition sampling.
//!
//! Transition probabilities are stored densely, one row per `(s, a)`, plus a
//! sparse copy of each row's support so that sampling costs O(|support|).
//! Terminal states carry a self-loop row; they are never sampled from.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// Flattened `[s][a][s']`.
    transition: Vec<f64>,
    /// Flattened `[s][a]`.
    reward: Vec<f64>,
    terminal: Vec<bool>,
    s0: usize,
    support: Vec<Vec<(usize, f64)>>,
}

impl Mdp {
    /// Builds an MDP from a dense `[s][a][s']` transition table and an
    /// `[s][a]` reward table.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        terminal: &[usize],
        s0: usize,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidMdp("empty state or action set".into()));
        }
        let pairs = n_states * n_actions;
        if transition.len() != pairs * n_states {
            return Err(Error::InvalidMdp(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                pairs * n_states
            )));
        }
        if reward.len() != pairs {
            return Err(Error::InvalidMdp(format!(
                "reward table has {} entries, expected {pairs}",
                reward.len()
            )));
        }
        if s0 >= n_states {
            return Err(Error::OutOfRange {
                what: "s0",
                index: s0,
                limit: n_states,
            });
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidMdp(format!("non-finite reward {r}")));
        }
        let mut is_terminal = vec![false; n_states];
        for &t in terminal {
            if t >= n_states {
                return Err(Error::OutOfRange {
                    what: "terminal state",
                    index: t,
                    limit: n_states,
                });
            }
            is_terminal[t] = true;
        }
        let mut support = Vec::with_capacity(pairs);
        for (pair, row) in transition.chunks_exact(n_states).enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < 0.0) {
                return Err(Error::InvalidMdp(format!(
                    "row (s={}, a={}) has a negative or non-finite entry",
                    pair / n_actions,
                    pair % n_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidMdp(format!(
                    "row (s={}, a={}) sums to {sum}",
                    pair / n_actions,
                    pair % n_actions
                )));
            }
            support.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s, &p)| (s, p))
                    .collect(),
            );
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            terminal: is_terminal,
            s0,
            support,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn s0(&self) -> usize {
        self.s0
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(s, _)| s)
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::OutOfRange {
                what: "state",
                index: s,
                limit: self.n_states,
            });
        }
        if a >= self.n_actions {
            return Err(Error::OutOfRange {
                what: "action",
                index: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }

    /// The stored probability vector `P(· | s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> Result<&[f64]> {
        self.check(s, a)?;
        Ok(self.row(s, a))
    }

    pub(crate) fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// Nonzero entries of `P(· | s, a)` in ascending state order.
    pub fn support(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.support[s * self.n_actions + a]
    }

    /// Draws `s' ~ P(· | s, a)` by inverse CDF from a single uniform draw.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        self.check(s, a)?;
        if self.terminal[s] {
            return Err(Error::TerminalState(s));
        }
        let u: f64 = rng.random();
        let support = self.support(s, a);
        let mut cumulative = 0.0;
        let mut next = support[support.len() - 1].0;
        for &(s_next, p) in support {
            cumulative += p;
            if u < cumulative {
                next = s_next;
                break;
            }
        }
        Ok((next, self.reward(s, a)))
    }

    /// True when every row is one-hot.
    pub fn is_deterministic(&self) -> bool {
        self.support
            .iter()
            .all(|row| row.len() == 1 && row[0].1 == 1.0)
    }

    /// States reachable from `s0` through positive-probability transitions.
    /// Terminal states are included but not expanded.
    pub fn reachable_states(&self) -> Vec<bool> {
        let mut seen = vec![false; self.n_states];
        let mut queue = VecDeque::from([self.s0]);
        seen[self.s0] = true;
        while let Some(s) = queue.pop_front() {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_actions {
                for &(next, _) in self.support(s, a) {
                    if !seen[next] {
                        seen[next] = true;
                        queue.push_back(next);
                    }
                }
            }
        }
        seen
    }

    /// Mask over `(s, a)` of non-terminal reachable states, all actions.
    pub fn reachable_pairs(&self) -> Vec<bool> {
        let states = self.reachable_states();
        (0..self.n_pairs())
            .map(|pair| {
                let s = pair / self.n_actions;
                states[s] && !self.terminal[s]
            })
            .collect()
    }

    /// Same states, actions, rewards and terminals with a new transition table.
    pub fn with_transitions(&self, transition: Vec<f64>) -> Result<Self> {
        let terminal: Vec<usize> = self.terminal_states().collect();
        Mdp::new(
            self.n_states,
            self.n_actions,
            transition,
            self.reward.clone(),
            &terminal,
            self.s0,
        )
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }
}

/// Grid moves, in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Move::Up => "up",
            Move::Down => "down",
            Move::Left => "left",
            Move::Right => "right",
        };
        f.write_str(name)
    }
}

/// A rectangular Frozen Lake layout plus its dynamics parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub holes: BTreeSet<usize>,
    pub goal: usize,
    pub start: usize,
    pub slip_prob: f64,
    pub reward_hole: f64,
    pub reward_goal: f64,
    pub reward_step: f64,
}

pub const DEFAULT_REWARD_HOLE: f64 = -1.0;
pub const DEFAULT_REWARD_GOAL: f64 = 10.0;
pub const DEFAULT_REWARD_STEP: f64 = -0.01;

impl GridSpec {
    /// Parses an ASCII layout (`S`, `F`, `H`, `G`, one row per line).
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse_layout(text: &str) -> Result<Self> {
        let mut width = None;
        let mut height = 0;
        let mut holes = BTreeSet::new();
        let mut goal = None;
        let mut start = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<char> = line.chars().collect();
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Layout {
                        line: lineno + 1,
                        msg: format!("row has {} cells, expected {w}", row.len()),
                    })
                }
                _ => {}
            }
            let w = row.len();
            for (col, ch) in row.into_iter().enumerate() {
                let cell = height * w + col;
                let slot = match ch {
                    'F' => None,
                    'H' => {
                        holes.insert(cell);
                        None
                    }
                    'S' => Some((&mut start, "S")),
                    'G' => Some((&mut goal, "G")),
                    other => {
                        return Err(Error::Layout {
                            line: lineno + 1,
                            msg: format!("unexpected character {other:?}"),
                        })
                    }
                };
                if let Some((slot, name)) = slot {
                    if slot.replace(cell).is_some() {
                        return Err(Error::Layout {
                            line: lineno + 1,
                            msg: format!("more than one {name} cell"),
                        });
                    }
                }
            }
            height += 1;
        }
        let width = width.ok_or(Error::Layout {
            line: 0,
            msg: "layout is empty".into(),
        })?;
        let missing = |what: &str| Error::Layout {
            line: 0,
            msg: format!("layout has no {what} cell"),
        };
        Ok(GridSpec {
            width,
            height,
            holes,
            goal: goal.ok_or_else(|| missing("G"))?,
            start: start.ok_or_else(|| missing("S"))?,
            slip_prob: 0.0,
            reward_hole: DEFAULT_REWARD_HOLE,
            reward_goal: DEFAULT_REWARD_GOAL,
            reward_step: DEFAULT_REWARD_STEP,
        })
    }

    pub fn with_slip(mut self, slip_prob: f64) -> Self {
        self.slip_prob = slip_prob;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// Target cell of `mv` from `cell`; off-grid moves stay in place.
    pub fn step(&self, cell: usize, mv: Move) -> usize {
        let (row, col) = (cell / self.width, cell % self.width);
        match mv {
            Move::Up if row > 0 => cell - self.width,
            Move::Down if row + 1 < self.height => cell + self.width,
            Move::Left if col > 0 => cell - 1,
            Move::Right if col + 1 < self.width => cell + 1,
            _ => cell,
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid(format!(
                "zero dimension {}x{}",
                self.width, self.height
            )));
        }
        let n = self.n_cells();
        if self.goal >= n {
            return Err(Error::InvalidGrid(format!(
                "goal {} outside {}x{} grid",
                self.goal, self.width, self.height
            )));
        }
        if self.start >= n {
            return Err(Error::InvalidGrid(format!(
                "start {} outside {}x{} grid",
                self.start, self.width, self.height
            )));
        }
        if let Some(h) = self.holes.iter().find(|&&h| h >= n) {
            return Err(Error::InvalidGrid(format!("hole {h} outside grid")));
        }
        if self.holes.contains(&self.goal) {
            return Err(Error::InvalidGrid("goal is a hole".into()));
        }
        if self.holes.contains(&self.start) || self.start == self.goal {
            return Err(Error::InvalidGrid("start must be a frozen cell".into()));
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return Err(Error::InvalidGrid(format!(
                "slip_prob {} not in [0, 1]",
                self.slip_prob
            )));
        }
        for r in [self.reward_hole, self.reward_goal, self.reward_step] {
            if !r.is_finite() {
                return Err(Error::InvalidGrid(format!("non-finite reward {r}")));
            }
        }
        Ok(())
    }
}

/// A small continuing MDP (no terminal states) in which every row has at
/// least two successors, so TD errors never vanish.
pub fn three_state_toy() -> Mdp {
    #[rustfmt::skip]
    let p = vec![
        0.5, 0.0, 0.5,   0.3, 0.3, 0.4,
        0.4, 0.2, 0.4,   0.6, 0.0, 0.4,
        0.5, 0.0, 0.5,   0.3, 0.4, 0.3,
    ];
    Mdp::new(3, 2, p, vec![0.0, 0.2, 0.5, 0.0, 1.0, 0.3], &[], 0).expect("toy rows are stochastic")
}

/// Like [`three_state_toy`] but with one deterministic row `(1, 0) -> 2`
/// and one low-spread row, where the trigger can stop all updates.
pub fn three_state_toy_with_quiet_rows() -> Mdp {
    #[rustfmt::skip]
    let p = vec![
        0.5, 0.5, 0.0,   0.0, 0.2, 0.8,
        0.0, 0.0, 1.0,   0.7, 0.0, 0.3,
        0.6, 0.4, 0.0,   0.5, 0.0, 0.5,
    ];
    Mdp::new(3, 2, p, vec![0.0, 0.1, 0.5, 0.0, 1.0, 0.2], &[], 0).expect("toy rows are stochastic")
}

/// Builds the Frozen Lake MDP for a grid.
///
/// The intended move gets `1 - slip_prob`; the slip mass is split evenly
/// over the three other moves. Rewards depend only on where the intended
/// move leads. Holes and the goal are terminal.
pub fn build_frozen_lake(spec: &GridSpec) -> Result<Mdp> {
    spec.validate()?;
    let n_states = spec.n_cells();
    let n_actions = Move::ALL.len();
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    let mut reward = vec![0.0; n_states * n_actions];
    let is_terminal = |cell: usize| cell == spec.goal || spec.holes.contains(&cell);

    for s in 0..n_states {
        for mv in Move::ALL {
            let pair = s * n_actions + mv.index();
            let row = &mut transition[pair * n_states..(pair + 1) * n_states];
            if is_terminal(s) {
                row[s] = 1.0;
                continue;
            }
            let target = spec.step(s, mv);
            row[target] += 1.0 - spec.slip_prob;
            if spec.slip_prob > 0.0 {
                for other in Move::ALL.into_iter().filter(|&m| m != mv) {
                    row[spec.step(s, other)] += spec.slip_prob / 3.0;
                }
            }
            reward[pair] = if spec.holes.contains(&target) {
                spec.reward_hole
            } else if target == spec.goal {
                spec.reward_goal
            } else {
                spec.reward_step
            };
        }
    }

    let mut terminal: Vec<usize> = spec.holes.iter().copied().collect();
    terminal.push(spec.goal);
    Mdp::new(
        n_states, n_actions, transition, reward, &terminal, spec.start,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    const LAKE4: &str = "SFFF\nFHFH\nFFFH\nHFFG\n";

    fn lake(slip: f64) -> (GridSpec, Mdp) {
        let spec = GridSpec::parse_layout(LAKE4).unwrap().with_slip(slip);
        let mdp = build_frozen_lake(&spec).unwrap();
        (spec, mdp)
    }

    fn open_grid(w: usize, h: usize) -> GridSpec {
        GridSpec {
            width: w,
            height: h,
            holes: BTreeSet::new(),
            goal: w * h - 1,
            start: 0,
            slip_prob: 0.0,
            reward_hole: DEFAULT_REWARD_HOLE,
            reward_goal: DEFAULT_REWARD_GOAL,
            reward_step: DEFAULT_REWARD_STEP,
        }
    }

    #[test]
    fn parses_layout() {
        let spec = GridSpec::parse_layout(LAKE4).unwrap();
        assert_eq!((spec.width, spec.height), (4, 4));
        assert_eq!(spec.start, 0);
        assert_eq!(spec.goal, 15);
        assert_eq!(spec.holes, BTreeSet::from([5, 7, 11, 12]));
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(GridSpec::parse_layout("SFF\nFG\n").is_err());
        assert!(GridSpec::parse_layout("SFX\nFFG\n").is_err());
        assert!(GridSpec::parse_layout("SFF\nFFF\n").is_err());
        assert!(GridSpec::parse_layout("SGG\n").is_err());
        assert!(GridSpec::parse_layout("").is_err());
    }

    #[test]
    fn rejects_invalid_grids() {
        let mut spec = open_grid(3, 3);
        spec.width = 0;
        assert!(matches!(
            build_frozen_lake(&spec),
            Err(Error::InvalidGrid(_))
        ));
        let mut spec = open_grid(3, 3);
        spec.goal = 9;
        assert!(matches!(
            build_frozen_lake(&spec),
            Err(Error::InvalidGrid(_))
        ));
        let mut spec = open_grid(3, 3);
        spec.holes.insert(8);
        assert!(build_frozen_lake(&spec).is_err());
        let spec = open_grid(3, 3).with_slip(1.5);
        assert!(build_frozen_lake(&spec).is_err());
    }

    #[test]
    fn eighteen_by_eighteen_has_1296_pairs() {
        let mdp = build_frozen_lake(&open_grid(18, 18)).unwrap();
        assert_eq!(mdp.n_states(), 324);
        assert_eq!(mdp.n_pairs(), 1296);
    }

    #[test]
    fn zero_slip_is_deterministic() {
        let (_, mdp) = lake(0.0);
        assert!(mdp.is_deterministic());
        for s in 0..mdp.n_states() {
            for a in 0..4 {
                let row = mdp.transition_row(s, a).unwrap();
                assert_eq!(row.iter().filter(|&&p| p != 0.0).count(), 1);
            }
        }
    }

    #[test]
    fn rows_are_normalized() {
        for slip in [0.0, 0.1, 0.3, 1.0] {
            let (_, mdp) = lake(slip);
            for s in 0..mdp.n_states() {
                for a in 0..4 {
                    let row = mdp.transition_row(s, a).unwrap();
                    assert!(row.iter().all(|&p| p >= 0.0));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn interior_up_gets_point_seven() {
        let spec = open_grid(18, 18).with_slip(0.3);
        let mdp = build_frozen_lake(&spec).unwrap();
        let s = spec.cell(9, 9);
        let row = mdp.transition_row(s, Move::Up.index()).unwrap();
        assert!((row[spec.cell(8, 9)] - 0.7).abs() < 1e-12);
        assert!((row[spec.cell(10, 9)] - 0.1).abs() < 1e-12);
        assert!((row[spec.cell(9, 8)] - 0.1).abs() < 1e-12);
        assert!((row[spec.cell(9, 10)] - 0.1).abs() < 1e-12);
        assert!(!mdp.is_deterministic());
    }

    #[test]
    fn corner_slip_collapses_to_stay() {
        let spec = open_grid(3, 3).with_slip(0.3);
        let mdp = build_frozen_lake(&spec).unwrap();
        // From the top-left corner, up and left both stay in place.
        let row = mdp.transition_row(0, Move::Right.index()).unwrap();
        assert!((row[1] - 0.7).abs() < 1e-12);
        assert!((row[0] - 0.2).abs() < 1e-12);
        assert!((row[3] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rewards_follow_intended_move() {
        let (spec, mdp) = lake(0.3);
        // (1,0) moving right enters the hole at (1,1).
        assert_eq!(mdp.reward(spec.cell(1, 0), Move::Right.index()), -1.0);
        // (3,2) moving right enters the goal.
        assert_eq!(mdp.reward(spec.cell(3, 2), Move::Right.index()), 10.0);
        assert_eq!(mdp.reward(0, Move::Right.index()), -0.01);
        assert_eq!(mdp.reward(0, Move::Up.index()), -0.01);
    }

    #[test]
    fn sampling_matches_rows() {
        let (spec, mdp) = lake(0.3);
        let s = spec.cell(2, 1);
        let a = Move::Up.index();
        let mut rng = seeded(11);
        let draws = 100_000;
        let mut counts = vec![0usize; mdp.n_states()];
        for _ in 0..draws {
            let (next, r) = mdp.sample_transition(s, a, &mut rng).unwrap();
            assert_eq!(r, mdp.reward(s, a));
            counts[next] += 1;
        }
        let row = mdp.transition_row(s, a).unwrap();
        for (next, &c) in counts.iter().enumerate() {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - row[next]).abs() < 0.02,
                "s'={next} {freq} vs {}",
                row[next]
            );
        }
    }

    #[test]
    fn deterministic_sampling_ignores_rng() {
        let (spec, mdp) = lake(0.0);
        let mut rng = seeded(3);
        for _ in 0..50 {
            let (next, r) = mdp
                .sample_transition(0, Move::Down.index(), &mut rng)
                .unwrap();
            assert_eq!(next, spec.cell(1, 0));
            assert_eq!(r, -0.01);
        }
    }

    #[test]
    fn sampling_rejects_terminal_and_bad_indices() {
        let (spec, mdp) = lake(0.0);
        let mut rng = seeded(3);
        assert!(matches!(
            mdp.sample_transition(spec.goal, 0, &mut rng),
            Err(Error::TerminalState(_))
        ));
        assert!(mdp.sample_transition(99, 0, &mut rng).is_err());
        assert!(mdp.transition_row(0, 4).is_err());
    }

    #[test]
    fn reachable_set_stops_at_terminals() {
        // The right column is only reachable through the goal.
        let spec = GridSpec::parse_layout("SFG\nFFH\n").unwrap();
        let mdp = build_frozen_lake(&spec).unwrap();
        let states = mdp.reachable_states();
        assert!(states.iter().all(|&r| r));
        let pairs = mdp.reachable_pairs();
        assert!(!pairs[2 * 4]);
        assert!(pairs[0]);
        let walled = GridSpec::parse_layout("SHF\nHFG\n").unwrap();
        let mdp = build_frozen_lake(&walled).unwrap();
        let states = mdp.reachable_states();
        assert!(!states[2] && !states[4]);
    }

    #[test]
    fn custom_mdp_validation() {
        assert!(Mdp::new(2, 1, vec![0.5, 0.4, 0.0, 1.0], vec![0.0, 0.0], &[], 0).is_err());
        assert!(Mdp::new(2, 1, vec![-0.1, 1.1, 0.0, 1.0], vec![0.0, 0.0], &[], 0).is_err());
        assert!(Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![f64::NAN, 0.0], &[], 0).is_err());
        assert!(Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 0.0], &[2], 0).is_err());
        assert!(Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![0.0, 0.0], &[1], 2).is_err());
        assert!(Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0], &[1], 0).is_ok());
    }
}
