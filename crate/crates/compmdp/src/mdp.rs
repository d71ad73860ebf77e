//! The finite MDP data model and its structural validation.
//!
//! An MDP here is a set of states, a set of actions, an anchoring map
//! sending each action to the state it is available at, and a transition
//! distribution per action. A reward function on actions is optional;
//! when present the MDP lives in the reward-carrying category.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::dist::{Dist, DEFAULT_EPS};
use crate::label::{ActionId, StateId};

/// A finite MDP. Immutable after construction; share it freely.
///
/// Construction does not reject ill-formed data — [`FiniteMdp::validate`]
/// reports problems as diagnostics so that broken inputs (for example a
/// document with an unnormalized distribution) can be loaded and explained.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    states: BTreeSet<StateId>,
    actions: BTreeSet<ActionId>,
    anchor: BTreeMap<ActionId, StateId>,
    trans: BTreeMap<ActionId, Dist>,
    reward: Option<BTreeMap<ActionId, f64>>,
    /// Derived index: actions available at each state, in action order.
    actions_at: BTreeMap<StateId, Vec<ActionId>>,
}

impl FiniteMdp {
    pub fn new(
        states: impl IntoIterator<Item = StateId>,
        actions: impl IntoIterator<Item = (ActionId, StateId, Dist)>,
        reward: Option<BTreeMap<ActionId, f64>>,
    ) -> Self {
        let states: BTreeSet<StateId> = states.into_iter().collect();
        let mut action_set = BTreeSet::new();
        let mut anchor = BTreeMap::new();
        let mut trans = BTreeMap::new();
        for (a, s, d) in actions {
            action_set.insert(a.clone());
            anchor.insert(a.clone(), s);
            trans.insert(a, d);
        }
        let mut actions_at: BTreeMap<StateId, Vec<ActionId>> = BTreeMap::new();
        for s in &states {
            actions_at.entry(s.clone()).or_default();
        }
        for (a, s) in &anchor {
            actions_at.entry(s.clone()).or_default().push(a.clone());
        }
        FiniteMdp {
            states,
            actions: action_set,
            anchor,
            trans,
            reward,
            actions_at,
        }
    }

    /// The constant MDP: one state, one self-looping action, reward 0.
    /// It is the terminal object — every MDP maps to it uniquely.
    pub fn point() -> Self {
        let s = StateId::atom("pt");
        let a = ActionId::atom("pt");
        FiniteMdp::new(
            [s.clone()],
            [(a.clone(), s.clone(), Dist::point(s))],
            Some([(a, 0.0)].into()),
        )
    }

    pub fn states(&self) -> impl ExactSizeIterator<Item = &StateId> {
        self.states.iter()
    }

    pub fn actions(&self) -> impl ExactSizeIterator<Item = &ActionId> {
        self.actions.iter()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn has_state(&self, s: &StateId) -> bool {
        self.states.contains(s)
    }

    pub fn has_action(&self, a: &ActionId) -> bool {
        self.actions.contains(a)
    }

    /// The state an action is anchored at.
    pub fn anchor(&self, a: &ActionId) -> Option<&StateId> {
        self.anchor.get(a)
    }

    pub fn transition(&self, a: &ActionId) -> Option<&Dist> {
        self.trans.get(a)
    }

    /// Actions available at `s` (the fiber of the anchoring map).
    pub fn actions_at(&self, s: &StateId) -> &[ActionId] {
        self.actions_at.get(s).map(Vec::as_slice).unwrap_or(&[])
    }

    /// A state with no available actions. Terminal states are legal:
    /// puncturing can empty an action set, and the solver assigns them
    /// value zero.
    pub fn is_terminal(&self, s: &StateId) -> bool {
        self.actions_at(s).is_empty()
    }

    pub fn has_reward(&self) -> bool {
        self.reward.is_some()
    }

    pub fn reward(&self, a: &ActionId) -> Option<f64> {
        self.reward.as_ref().and_then(|r| r.get(a)).copied()
    }

    pub fn reward_map(&self) -> Option<&BTreeMap<ActionId, f64>> {
        self.reward.as_ref()
    }

    /// The same MDP with its reward function replaced (or removed).
    pub fn with_reward(&self, reward: Option<BTreeMap<ActionId, f64>>) -> Self {
        let mut out = self.clone();
        out.reward = reward;
        out
    }

    /// Keeps only the given states and actions, restricting anchors,
    /// transitions and rewards. Used by puncturing and canonical
    /// subprocess construction; the caller is responsible for choosing a
    /// closed action set.
    pub(crate) fn restrict(&self, states: &BTreeSet<StateId>, actions: &BTreeSet<ActionId>) -> Self {
        FiniteMdp::new(
            states.iter().cloned(),
            actions.iter().filter_map(|a| {
                Some((
                    a.clone(),
                    self.anchor(a)?.clone(),
                    self.transition(a)?.clone(),
                ))
            }),
            self.reward.as_ref().map(|r| {
                r.iter()
                    .filter(|(a, _)| actions.contains(*a))
                    .map(|(a, &v)| (a.clone(), v))
                    .collect()
            }),
        )
    }

    /// Rebuilds the MDP with every state and action label transformed.
    /// The maps must be injective on the respective sets.
    pub(crate) fn relabel(
        &self,
        fs: impl Fn(&StateId) -> StateId,
        fa: impl Fn(&ActionId) -> ActionId,
    ) -> Self {
        FiniteMdp::new(
            self.states.iter().map(&fs),
            self.actions.iter().map(|a| {
                (
                    fa(a),
                    fs(&self.anchor[a]),
                    self.trans[a].relabel(&fs),
                )
            }),
            self.reward
                .as_ref()
                .map(|r| r.iter().map(|(a, &v)| (fa(a), v)).collect()),
        )
    }

    /// Checks every structural invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        self.validate_with_eps(DEFAULT_EPS)
    }

    pub fn validate_with_eps(&self, eps: f64) -> ValidationReport {
        let mut report = ValidationReport::default();
        for a in &self.actions {
            match self.anchor.get(a) {
                None => report.push(format!("action {a} has no anchor state")),
                Some(s) if !self.states.contains(s) => {
                    report.push(format!("action {a} is anchored at unknown state {s}"))
                }
                _ => {}
            }
            match self.trans.get(a) {
                None => report.push(format!("action {a} has no transition distribution")),
                Some(d) => {
                    for (s, _) in d.iter() {
                        if !self.states.contains(s) {
                            report.push(format!(
                                "action {a} carries mass to unknown state {s}"
                            ));
                        }
                    }
                    if !d.is_normalized(eps) {
                        report.push(format!(
                            "mass {} ≠ 1 for action {a}",
                            d.total_mass()
                        ));
                    }
                }
            }
            if let Some(r) = &self.reward {
                if !r.contains_key(a) {
                    report.push(format!("action {a} has no reward entry"));
                }
            }
        }
        if let Some(r) = &self.reward {
            for a in r.keys() {
                if !self.actions.contains(a) {
                    report.push(format!("reward entry for unknown action {a}"));
                }
            }
        }
        report
    }

    pub fn is_well_formed(&self) -> bool {
        self.validate().is_empty()
    }

    pub fn into_arc(self) -> Arc<FiniteMdp> {
        Arc::new(self)
    }
}

/// Diagnostics from structural validation. Empty means well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    violations: Vec<String>,
}

impl ValidationReport {
    pub(crate) fn push(&mut self, violation: String) {
        self.violations.push(violation);
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "ok")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}
