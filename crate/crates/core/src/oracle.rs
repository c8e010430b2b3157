//! Ground-truth dynamic programming: the Bellman optimality backup, value
//! iteration for `Q*` (or the biased fixed point under a modified transition
//! table), the stochastic deviation bound `l*`, and the fixed-point gap
//! between two transition tables.
//!
//! Terminal states bootstrap with 0 and their own rows are pinned at 0.

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::qtable::{sup_dist, QTable};

pub const MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub q_star: QTable,
    pub iterations: usize,
    /// Final sup-norm change between consecutive sweeps.
    pub residual: f64,
    /// Sup-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
}

/// `V(s) = max_a Q(s, a)`, or 0 for terminal states.
fn state_values(mdp: &Mdp, q: &QTable) -> Vec<f64> {
    (0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else {
                q.max_value(s)
            }
        })
        .collect()
}

/// One application of `H(Q)(s,a) = Σ_s' P(s'|s,a) (r(s,a) + γ max_a' Q(s',a'))`.
pub fn bellman_backup(mdp: &Mdp, q: &QTable, gamma: f64) -> Result<QTable> {
    if q.shape() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::ShapeMismatch(
            mdp.n_states(),
            mdp.n_actions(),
            q.n_states(),
            q.n_actions(),
        ));
    }
    let v = state_values(mdp, q);
    let mut out = QTable::zeros(mdp.n_states(), mdp.n_actions());
    for s in (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..mdp.n_actions() {
            let expected: f64 = mdp.support(s, a).iter().map(|&(next, p)| p * v[next]).sum();
            out.set(s, a, mdp.reward(s, a) + gamma * expected);
        }
    }
    Ok(out)
}

/// Value iteration from `Q ≡ 0`. Stops once the sweep change drops to
/// `tol (1 − γ) / γ`, which bounds the distance to the fixed point by `tol`.
pub fn solve_q_star(mdp: &Mdp, gamma: f64, tol: f64) -> Result<OracleResult> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma {gamma} not in (0, 1)")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    let threshold = tol * (1.0 - gamma) / gamma;
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    let mut residuals = Vec::new();
    for iteration in 1..=MAX_ITERATIONS {
        let next = bellman_backup(mdp, &q, gamma)?;
        let change = sup_dist(&next, &q)?;
        q = next;
        residuals.push(change);
        if change <= threshold {
            return Ok(OracleResult {
                q_star: q,
                iterations: iteration,
                residual: change,
                residuals,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Fixed point of the backup under a modified transition table, e.g. an
/// empirical estimate of the transmitted-transition frequencies.
pub fn solve_fixed_point(mdp_modified: &Mdp, gamma: f64, tol: f64) -> Result<OracleResult> {
    solve_q_star(mdp_modified, gamma, tol)
}

/// Upper end of the long-run range of the TD tracking signal when learning
/// has converged to `Q*`: `γ · max |E[V*(s') | s, a] − V*(s')|` over
/// non-terminal `(s, a)` and `s'` in the support of `P(· | s, a)`.
pub fn l_star(mdp: &Mdp, q_star: &QTable, gamma: f64) -> f64 {
    let v = state_values(mdp, q_star);
    let mut worst = 0.0_f64;
    for s in (0..mdp.n_states()).filter(|&s| !mdp.is_terminal(s)) {
        for a in 0..mdp.n_actions() {
            let support = mdp.support(s, a);
            let expected: f64 = support.iter().map(|&(next, p)| p * v[next]).sum();
            for &(next, _) in support {
                worst = worst.max((expected - v[next]).abs());
            }
        }
    }
    gamma * worst
}

/// Distances between two transition tables of the same shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionDistance {
    /// Largest absolute entry difference over `(s, a, s')`.
    pub entrywise: f64,
    /// Largest row sum of absolute differences (induced ∞-norm).
    pub row_sum: f64,
}

pub fn transition_distance(p: &Mdp, p_tilde: &Mdp) -> Result<TransitionDistance> {
    if p.n_states() != p_tilde.n_states() || p.n_actions() != p_tilde.n_actions() {
        return Err(Error::ShapeMismatch(
            p.n_states(),
            p.n_actions(),
            p_tilde.n_states(),
            p_tilde.n_actions(),
        ));
    }
    let n = p.n_states();
    let mut entrywise = 0.0_f64;
    let mut row_sum = 0.0_f64;
    for (row, row_tilde) in p
        .transitions()
        .chunks_exact(n)
        .zip(p_tilde.transitions().chunks_exact(n))
    {
        let mut sum = 0.0;
        for (x, y) in row.iter().zip(row_tilde) {
            let d = (x - y).abs();
            entrywise = entrywise.max(d);
            sum += d;
        }
        row_sum = row_sum.max(sum);
    }
    Ok(TransitionDistance { entrywise, row_sum })
}

/// Both sides of `‖Q* − Q̃‖∞ ≤ ‖Q̃‖∞ · γ/(1−γ) · ‖P − P̃‖∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasedGap {
    pub lhs: f64,
    /// Right side with the entrywise transition distance.
    pub rhs: f64,
    /// Right side with the induced row-sum distance, for comparison.
    pub rhs_row_sum: f64,
    pub distance: TransitionDistance,
}

impl BiasedGap {
    pub fn holds(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn biased_gap(
    q_star: &QTable,
    q_tilde: &QTable,
    p: &Mdp,
    p_tilde: &Mdp,
    gamma: f64,
) -> Result<BiasedGap> {
    let lhs = sup_dist(q_star, q_tilde)?;
    let distance = transition_distance(p, p_tilde)?;
    let scale = q_tilde.sup_norm() * gamma / (1.0 - gamma);
    Ok(BiasedGap {
        lhs,
        rhs: scale * distance.entrywise,
        rhs_row_sum: scale * distance.row_sum,
        distance,
    })
}

/// Follows the greedy policy of `q` from `s0` on a deterministic MDP.
/// Returns `(steps, total reward)` if a terminal state is reached within
/// `max_steps`.
pub fn greedy_rollout(mdp: &Mdp, q: &QTable, max_steps: usize) -> Option<(usize, f64)> {
    let mut s = mdp.s0();
    let mut total = 0.0;
    for step in 1..=max_steps {
        let a = q.greedy_action(s);
        total += mdp.reward(s, a);
        let &(next, _) = mdp
            .support(s, a)
            .iter()
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if mdp.is_terminal(next) {
            return Some((step, total));
        }
        s = next;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_frozen_lake, three_state_toy, GridSpec};
    use crate::rng::seeded;

    fn chain() -> Mdp {
        // s0 --(only action, r = 1)--> s1 (terminal)
        Mdp::new(2, 1, vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 0.0], &[1], 0).unwrap()
    }

    #[test]
    fn zero_rewards_zero_backup() {
        let mdp = Mdp::new(
            2,
            2,
            vec![0.5, 0.5, 1.0, 0.0, 0.0, 1.0, 0.3, 0.7],
            vec![0.0; 4],
            &[],
            0,
        )
        .unwrap();
        let h = bellman_backup(&mdp, &QTable::zeros(2, 2), 0.9).unwrap();
        assert_eq!(h, QTable::zeros(2, 2));
        assert!(bellman_backup(&mdp, &QTable::zeros(3, 2), 0.9).is_err());
    }

    #[test]
    fn one_step_chain() {
        let res = solve_q_star(&chain(), 0.9, 1e-9).unwrap();
        assert!((res.q_star.get(0, 0) - 1.0).abs() < 1e-9);
        assert_eq!(res.q_star.get(1, 0), 0.0);
        assert!(res.residual <= 1e-9);
    }

    #[test]
    fn q_star_is_fixed_point() {
        let mdp = three_state_toy();
        let tol = 1e-8;
        let res = solve_q_star(&mdp, 0.9, tol).unwrap();
        let h = bellman_backup(&mdp, &res.q_star, 0.9).unwrap();
        assert!(sup_dist(&h, &res.q_star).unwrap() <= 2.0 * tol);
    }

    #[test]
    fn residuals_non_increasing() {
        let mdp = three_state_toy();
        let res = solve_q_star(&mdp, 0.97, 1e-6).unwrap();
        for w in res.residuals.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(solve_q_star(&chain(), 1.0, 1e-6).is_err());
        assert!(solve_q_star(&chain(), 0.9, 0.0).is_err());
    }

    #[test]
    fn contraction_random_pairs() {
        let mdp = three_state_toy();
        let mut rng = seeded(21);
        for gamma in [0.5, 0.9, 0.97] {
            for _ in 0..100 {
                let q1 = QTable::random_uniform(3, 2, 10.0, &mut rng);
                let q2 = QTable::random_uniform(3, 2, 10.0, &mut rng);
                let lhs = sup_dist(
                    &bellman_backup(&mdp, &q1, gamma).unwrap(),
                    &bellman_backup(&mdp, &q2, gamma).unwrap(),
                )
                .unwrap();
                assert!(lhs <= gamma * sup_dist(&q1, &q2).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_lake_values_near_goal() {
        let layout = "SFFFFF\nFFFFFF\nFFFFFF\nFFFFFF\nFFFFFF\nFFFFFG\n";
        let spec = GridSpec::parse_layout(layout).unwrap();
        let mdp = build_frozen_lake(&spec).unwrap();
        let res = solve_q_star(&mdp, 0.97, 1e-6).unwrap();
        // Entering the goal is worth the goal reward itself.
        let last = spec.cell(5, 4);
        assert!((res.q_star.max_value(last) - 10.0).abs() < 1e-6);
        // One move before that: about γ·10; two moves: about γ²·10.
        let one = res.q_star.max_value(spec.cell(5, 3));
        let two = res.q_star.max_value(spec.cell(5, 2));
        assert!((one - 0.97 * 10.0).abs() < 0.3, "{one}");
        assert!((two - 0.97 * 0.97 * 10.0).abs() < 0.3, "{two}");
        assert!(greedy_rollout(&mdp, &res.q_star, 100).is_some());
    }

    #[test]
    fn deterministic_l_star_is_zero() {
        let spec = GridSpec::parse_layout("SFFH\nFHFF\nFFFG\n").unwrap();
        let mdp = build_frozen_lake(&spec).unwrap();
        let res = solve_q_star(&mdp, 0.97, 1e-6).unwrap();
        assert_eq!(l_star(&mdp, &res.q_star, 0.97), 0.0);
    }

    #[test]
    fn l_star_zero_when_next_values_agree() {
        // Both successors are absorbing with identical values.
        let p = vec![
            0.0, 0.5, 0.5, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0,
        ];
        let mdp = Mdp::new(3, 1, p, vec![0.3, 1.0, 1.0], &[], 0).unwrap();
        let res = solve_q_star(&mdp, 0.9, 1e-9).unwrap();
        assert!(l_star(&mdp, &res.q_star, 0.9) < 1e-8);
    }

    #[test]
    fn l_star_matches_enumeration() {
        let mdp = three_state_toy();
        let gamma = 0.9;
        let q = solve_q_star(&mdp, gamma, 1e-10).unwrap().q_star;
        // Enumerate all (s, a, s') triples over the dense table.
        let mut oracle = 0.0_f64;
        for s in 0..3 {
            for a in 0..2 {
                let row = mdp.transition_row(s, a).unwrap();
                let mut expected = 0.0;
                for (next, &p) in row.iter().enumerate() {
                    let v = (0..2).map(|b| q.get(next, b)).fold(f64::MIN, f64::max);
                    expected += p * v;
                }
                for (next, &p) in row.iter().enumerate() {
                    if p > 0.0 {
                        let v = (0..2).map(|b| q.get(next, b)).fold(f64::MIN, f64::max);
                        oracle = oracle.max(gamma * (expected - v).abs());
                    }
                }
            }
        }
        assert!((l_star(&mdp, &q, gamma) - oracle).abs() < 1e-12);
        assert!(oracle > 0.0);
    }

    #[test]
    fn fixed_point_with_identical_table() {
        let mdp = three_state_toy();
        let tol = 1e-7;
        let a = solve_q_star(&mdp, 0.9, tol).unwrap();
        let b = solve_fixed_point(
            &mdp.with_transitions(mdp.transitions().to_vec()).unwrap(),
            0.9,
            tol,
        )
        .unwrap();
        assert!(sup_dist(&a.q_star, &b.q_star).unwrap() <= 2.0 * tol);
        let gap = biased_gap(&a.q_star, &b.q_star, &mdp, &mdp, 0.9).unwrap();
        assert!(gap.lhs <= 2.0 * tol);
        assert_eq!(gap.rhs, 0.0);
        assert!(gap.holds(2.0 * tol));
    }

    #[test]
    fn one_hot_fixed_point_is_deterministic_solve() {
        let spec = GridSpec::parse_layout("SFF\nFHG\n").unwrap();
        let det = build_frozen_lake(&spec).unwrap();
        let stoch = build_frozen_lake(&spec.clone().with_slip(0.3)).unwrap();
        let reset = stoch.with_transitions(det.transitions().to_vec()).unwrap();
        let a = solve_q_star(&det, 0.97, 1e-8).unwrap();
        let b = solve_fixed_point(&reset, 0.97, 1e-8).unwrap();
        assert_eq!(a.q_star, b.q_star);
    }

    #[test]
    fn removed_transition_gap_bound() {
        let mdp = three_state_toy();
        let gamma = 0.9;
        // Delete s0,a1 -> s2 and renormalize the row: [0.3, 0.3, 0.4] -> [0.5, 0.5, 0].
        let mut p = mdp.transitions().to_vec();
        let row = 1;
        p[row * 3 + 2] = 0.0;
        let sum: f64 = p[row * 3..row * 3 + 3].iter().sum();
        for x in &mut p[row * 3..row * 3 + 3] {
            *x /= sum;
        }
        let modified = mdp.with_transitions(p).unwrap();
        let q_star = solve_q_star(&mdp, gamma, 1e-10).unwrap().q_star;
        let q_tilde = solve_fixed_point(&modified, gamma, 1e-10).unwrap().q_star;
        let gap = biased_gap(&q_star, &q_tilde, &mdp, &modified, gamma).unwrap();
        assert!(gap.lhs > 1e-3);
        assert!((gap.distance.entrywise - 0.4).abs() < 1e-12);
        assert!((gap.distance.row_sum - 0.8).abs() < 1e-12);
        // Independent evaluation of both sides.
        let mut lhs = 0.0_f64;
        for (x, y) in q_star.values().iter().zip(q_tilde.values()) {
            lhs = lhs.max((x - y).abs());
        }
        let c = q_tilde.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let rhs = c * gamma / (1.0 - gamma) * 0.4;
        assert!((gap.lhs - lhs).abs() < 1e-12);
        assert!((gap.rhs - rhs).abs() < 1e-9);
        assert!(lhs <= rhs);
    }
}
