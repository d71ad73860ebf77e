//! Exact discounted dynamic programming: value iteration, greedy policy
//! extraction, policy evaluation, and one-step Bellman backups. This is
//! the ground-truth oracle behind every optimality claim in the crate.
//!
//! Updates are Jacobi-style (each sweep reads only the previous sweep's
//! values), so the optional parallel sweep is bit-identical to the serial
//! one. Terminal states hold value 0. The stopping rule bounds the true
//! value error: iteration ends once the sup-norm residual is at most
//! `tol·(1−γ)/(2γ)`, which guarantees `‖v − v★‖ ≤ tol`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::label::{ActionId, StateId};
use crate::mdp::FiniteMdp;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("discount factor {0} is outside [0, 1)")]
    InvalidDiscount(f64),
    #[error("the MDP carries no reward function")]
    RewardMissing,
    #[error("policy is undefined at non-terminal state {0}")]
    PolicyIncomplete(StateId),
    #[error("action {action} is not available at state {state}")]
    PolicyMismatch { state: StateId, action: ActionId },
}

/// Result of a solve: the value function, the greedy policy (absent on
/// terminal states), and convergence metadata. `converged` is false only
/// when the iteration cap was hit first; the values are then best-so-far.
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: BTreeMap<StateId, f64>,
    pub policy: BTreeMap<StateId, ActionId>,
    pub gamma: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm residual of each sweep, in order.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl Solution {
    pub fn value(&self, s: &StateId) -> f64 {
        self.values.get(s).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Run each sweep's backups on a work pool (needs the `parallel`
    /// feature; ignored otherwise). Sweeps are Jacobi-style, so the
    /// result is bit-identical to the serial sweep.
    pub parallel: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            gamma: DEFAULT_GAMMA,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            parallel: false,
        }
    }
}

impl SolveOptions {
    pub fn with_gamma(gamma: f64) -> Self {
        SolveOptions {
            gamma,
            ..Default::default()
        }
    }

    fn stopping_threshold(&self) -> f64 {
        if self.gamma > 0.0 {
            self.tol * (1.0 - self.gamma) / (2.0 * self.gamma)
        } else {
            0.0
        }
    }
}

fn q_value(m: &FiniteMdp, values: &BTreeMap<StateId, f64>, a: &ActionId, gamma: f64) -> f64 {
    let r = m.reward(a).unwrap_or(0.0);
    let future: f64 = m
        .transition(a)
        .map(|d| d.iter().map(|(s, p)| p * values.get(s).copied().unwrap_or(0.0)).sum())
        .unwrap_or(0.0);
    r + gamma * future
}

fn sweep(
    m: &FiniteMdp,
    values: &BTreeMap<StateId, f64>,
    gamma: f64,
    parallel: bool,
) -> BTreeMap<StateId, f64> {
    let states: Vec<&StateId> = m.states().collect();
    let backup = |s: &&StateId| -> (StateId, f64) {
        let best = m
            .actions_at(s)
            .iter()
            .map(|a| q_value(m, values, a, gamma))
            .fold(f64::NEG_INFINITY, f64::max);
        let v = if best == f64::NEG_INFINITY { 0.0 } else { best };
        ((*s).clone(), v)
    };
    #[cfg(feature = "parallel")]
    if parallel {
        return states.par_iter().map(backup).collect();
    }
    let _ = parallel;
    states.iter().map(backup).collect()
}

/// Solves the Bellman optimality equation by value iteration from v₀ = 0.
/// Greedy ties break to the smallest action identifier, making policies
/// reproducible across relabelings and construction paths.
pub fn value_iteration(m: &FiniteMdp, opts: SolveOptions) -> Result<Solution, SolverError> {
    if !(0.0..1.0).contains(&opts.gamma) {
        return Err(SolverError::InvalidDiscount(opts.gamma));
    }
    if !m.has_reward() {
        return Err(SolverError::RewardMissing);
    }
    let threshold = opts.stopping_threshold();
    let mut values: BTreeMap<StateId, f64> = m.states().map(|s| (s.clone(), 0.0)).collect();
    let mut residual = f64::INFINITY;
    let mut residual_history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let next = sweep(m, &values, opts.gamma, opts.parallel);
        residual = max_diff(&values, &next);
        residual_history.push(residual);
        values = next;
        iterations += 1;
        if residual <= threshold || opts.gamma == 0.0 {
            converged = true;
            break;
        }
    }
    let policy = greedy_policy(m, &values, opts.gamma, opts.tol);
    Ok(Solution {
        values,
        policy,
        gamma: opts.gamma,
        iterations,
        residual,
        residual_history,
        converged,
    })
}

fn max_diff(a: &BTreeMap<StateId, f64>, b: &BTreeMap<StateId, f64>) -> f64 {
    a.iter()
        .map(|(s, &va)| (va - b.get(s).copied().unwrap_or(0.0)).abs())
        .fold(0.0, f64::max)
}

/// The greedy policy for a value function: at each non-terminal state the
/// smallest action within `tie_tol` of the best backup.
pub fn greedy_policy(
    m: &FiniteMdp,
    values: &BTreeMap<StateId, f64>,
    gamma: f64,
    tie_tol: f64,
) -> BTreeMap<StateId, ActionId> {
    let mut policy = BTreeMap::new();
    for s in m.states() {
        let (best, argmax) = bellman_backup(m, values, s, gamma, tie_tol);
        let _ = best;
        if let Some(a) = argmax.first() {
            policy.insert(s.clone(), a.clone());
        }
    }
    policy
}

/// One exact Bellman backup at a state: the best achievable one-step
/// value and the set of actions within `tie_tol` of it, in action order.
/// Terminal states back up to value 0 with an empty argmax set.
pub fn bellman_backup(
    m: &FiniteMdp,
    values: &BTreeMap<StateId, f64>,
    s: &StateId,
    gamma: f64,
    tie_tol: f64,
) -> (f64, Vec<ActionId>) {
    let actions = m.actions_at(s);
    if actions.is_empty() {
        return (0.0, Vec::new());
    }
    let qs: Vec<(ActionId, f64)> = actions
        .iter()
        .map(|a| (a.clone(), q_value(m, values, a, gamma)))
        .collect();
    let best = qs.iter().map(|(_, q)| *q).fold(f64::NEG_INFINITY, f64::max);
    let mut argmax: Vec<ActionId> = qs
        .into_iter()
        .filter(|(_, q)| *q >= best - tie_tol)
        .map(|(a, _)| a)
        .collect();
    argmax.sort();
    (best, argmax)
}

/// Iterates the fixed-point equation of a fixed policy. The policy must
/// cover every non-terminal state with one of its own actions.
pub fn policy_evaluation(
    m: &FiniteMdp,
    policy: &BTreeMap<StateId, ActionId>,
    opts: SolveOptions,
) -> Result<BTreeMap<StateId, f64>, SolverError> {
    if !(0.0..1.0).contains(&opts.gamma) {
        return Err(SolverError::InvalidDiscount(opts.gamma));
    }
    if !m.has_reward() {
        return Err(SolverError::RewardMissing);
    }
    for s in m.states() {
        if m.is_terminal(s) {
            continue;
        }
        match policy.get(s) {
            None => return Err(SolverError::PolicyIncomplete(s.clone())),
            Some(a) if m.anchor(a) != Some(s) => {
                return Err(SolverError::PolicyMismatch {
                    state: s.clone(),
                    action: a.clone(),
                })
            }
            _ => {}
        }
    }
    let threshold = opts.stopping_threshold();
    let mut values: BTreeMap<StateId, f64> = m.states().map(|s| (s.clone(), 0.0)).collect();
    for _ in 0..opts.max_iter {
        let next: BTreeMap<StateId, f64> = m
            .states()
            .map(|s| {
                let v = policy
                    .get(s)
                    .filter(|_| !m.is_terminal(s))
                    .map(|a| q_value(m, &values, a, opts.gamma))
                    .unwrap_or(0.0);
                (s.clone(), v)
            })
            .collect();
        let residual = max_diff(&values, &next);
        values = next;
        if residual <= threshold || opts.gamma == 0.0 {
            break;
        }
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;

    fn rewarded(actions: Vec<(&str, &str, Vec<(&str, f64)>, f64)>, states: Vec<&str>) -> FiniteMdp {
        let reward: BTreeMap<ActionId, f64> = actions
            .iter()
            .map(|(a, _, _, r)| (ActionId::atom(*a), *r))
            .collect();
        FiniteMdp::new(
            states.into_iter().map(StateId::atom),
            actions.into_iter().map(|(a, s, dist, _)| {
                (
                    ActionId::atom(a),
                    StateId::atom(s),
                    Dist::from_pairs(dist.into_iter().map(|(t, p)| (StateId::atom(t), p)))
                        .unwrap(),
                )
            }),
            Some(reward),
        )
    }

    #[test]
    fn self_loop_value_is_geometric_series() {
        let m = rewarded(vec![("loop", "s", vec![("s", 1.0)], 1.0)], vec!["s"]);
        let sol = value_iteration(
            &m,
            SolveOptions {
                gamma: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(sol.converged);
        assert!((sol.value(&StateId::atom("s")) - 2.0).abs() <= 1e-9);
    }

    #[test]
    fn chain_into_terminal_state() {
        let m = rewarded(
            vec![("step", "s", vec![("t", 1.0)], 1.0)],
            vec!["s", "t"],
        );
        let sol = value_iteration(&m, SolveOptions::default()).unwrap();
        assert!((sol.value(&StateId::atom("s")) - 1.0).abs() <= 1e-9);
        assert_eq!(sol.value(&StateId::atom("t")), 0.0);
        assert!(!sol.policy.contains_key(&StateId::atom("t")));
    }

    #[test]
    fn invalid_discount_rejected() {
        let m = rewarded(vec![("loop", "s", vec![("s", 1.0)], 0.0)], vec!["s"]);
        assert!(matches!(
            value_iteration(&m, SolveOptions::with_gamma(1.0)),
            Err(SolverError::InvalidDiscount(_))
        ));
    }

    #[test]
    fn missing_reward_rejected() {
        let s = StateId::atom("s");
        let m = FiniteMdp::new(
            [s.clone()],
            [(ActionId::atom("a"), s.clone(), Dist::point(s))],
            None,
        );
        assert!(matches!(
            value_iteration(&m, SolveOptions::default()),
            Err(SolverError::RewardMissing)
        ));
    }

    #[test]
    fn backup_on_terminal_state_is_zero_with_empty_argmax() {
        let m = rewarded(vec![("step", "s", vec![("t", 1.0)], 1.0)], vec!["s", "t"]);
        let values: BTreeMap<StateId, f64> = BTreeMap::new();
        let (v, argmax) = bellman_backup(&m, &values, &StateId::atom("t"), 0.9, 1e-9);
        assert_eq!(v, 0.0);
        assert!(argmax.is_empty());
    }

    #[test]
    fn backup_prefers_higher_reward() {
        let m = rewarded(
            vec![
                ("a1", "s", vec![("t", 1.0)], 1.0),
                ("a2", "s", vec![("t", 1.0)], 2.0),
            ],
            vec!["s", "t"],
        );
        let values: BTreeMap<StateId, f64> = m.states().map(|s| (s.clone(), 0.0)).collect();
        let (v, argmax) = bellman_backup(&m, &values, &StateId::atom("s"), 0.9, 1e-9);
        assert_eq!(v, 2.0);
        assert_eq!(argmax, vec![ActionId::atom("a2")]);
    }

    #[test]
    fn policy_that_stays_forever_on_zero_reward_evaluates_to_zero() {
        let m = rewarded(vec![("loop", "s", vec![("s", 1.0)], 0.0)], vec!["s"]);
        let policy: BTreeMap<StateId, ActionId> =
            [(StateId::atom("s"), ActionId::atom("loop"))].into();
        let values = policy_evaluation(&m, &policy, SolveOptions::default()).unwrap();
        assert_eq!(values[&StateId::atom("s")], 0.0);
    }

    #[test]
    fn optimal_policy_evaluation_matches_value_iteration() {
        let m = rewarded(
            vec![
                ("go@s", "s", vec![("t", 0.7), ("s", 0.3)], 1.0),
                ("stay@s", "s", vec![("s", 1.0)], 0.2),
                ("back@t", "t", vec![("s", 1.0)], 0.0),
                ("stay@t", "t", vec![("t", 1.0)], 0.5),
            ],
            vec!["s", "t"],
        );
        let sol = value_iteration(&m, SolveOptions::default()).unwrap();
        let values = policy_evaluation(&m, &sol.policy, SolveOptions::default()).unwrap();
        for s in m.states() {
            assert!((values[s] - sol.value(s)).abs() <= 2e-9, "state {s}");
        }
    }

    /// Independent oracle: a 3-state fixed policy is a linear system
    /// v = r + γ P v, solved here by direct Gaussian elimination.
    #[test]
    fn policy_evaluation_matches_linear_solve() {
        let gamma = 0.9;
        let m = rewarded(
            vec![
                ("a0", "s0", vec![("s1", 0.5), ("s2", 0.5)], 1.0),
                ("a1", "s1", vec![("s0", 0.25), ("s2", 0.75)], 0.3),
                ("a2", "s2", vec![("s2", 1.0)], 0.1),
            ],
            vec!["s0", "s1", "s2"],
        );
        let policy: BTreeMap<StateId, ActionId> = [
            (StateId::atom("s0"), ActionId::atom("a0")),
            (StateId::atom("s1"), ActionId::atom("a1")),
            (StateId::atom("s2"), ActionId::atom("a2")),
        ]
        .into();

        // (I - γP) v = r
        let p = [[0.0, 0.5, 0.5], [0.25, 0.0, 0.75], [0.0, 0.0, 1.0]];
        let r = [1.0, 0.3, 0.1];
        let mut a = [[0.0f64; 4]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = if i == j { 1.0 } else { 0.0 } - gamma * p[i][j];
            }
            a[i][3] = r[i];
        }
        for col in 0..3 {
            let pivot = (col..3)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            for row in 0..3 {
                if row != col {
                    let factor = a[row][col] / a[col][col];
                    for k in col..4 {
                        a[row][k] -= factor * a[col][k];
                    }
                }
            }
        }
        let expected = [a[0][3] / a[0][0], a[1][3] / a[1][1], a[2][3] / a[2][2]];

        let values = policy_evaluation(
            &m,
            &policy,
            SolveOptions {
                gamma,
                ..Default::default()
            },
        )
        .unwrap();
        for (i, name) in ["s0", "s1", "s2"].iter().enumerate() {
            assert!(
                (values[&StateId::atom(*name)] - expected[i]).abs() <= 1e-8,
                "{name}: {} vs {}",
                values[&StateId::atom(*name)],
                expected[i]
            );
        }
    }

    #[test]
    fn ties_break_to_smallest_action_id() {
        let m = rewarded(
            vec![
                ("beta", "s", vec![("t", 1.0)], 1.0),
                ("alpha", "s", vec![("t", 1.0)], 1.0),
            ],
            vec!["s", "t"],
        );
        let sol = value_iteration(&m, SolveOptions::default()).unwrap();
        assert_eq!(sol.policy[&StateId::atom("s")], ActionId::atom("alpha"));
    }
}
