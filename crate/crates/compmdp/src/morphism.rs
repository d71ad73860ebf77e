//! Morphisms between finite MDPs.
//!
//! A morphism is a pair of maps — one on states, one on actions — that
//! respects anchoring (the image of an action is anchored at the image of
//! its state) and transitions (the pushforward of a source distribution
//! equals the target distribution of the image action). Subprocesses are
//! morphisms whose maps are injective; a full subprocess additionally pulls
//! back every target action over its image states.
//!
//! Maps are stored as explicit finite tables so that all morphisms between
//! small MDPs can be enumerated when testing universal properties.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::dist::{Dist, DistError, DEFAULT_EPS};
use crate::label::{ActionId, StateId};
use crate::mdp::{FiniteMdp, ValidationReport};

#[derive(Debug, Error)]
pub enum MorphismError {
    #[error("composition endpoint mismatch: target of the first morphism differs from source of the second")]
    Mismatch,
    #[error("morphism is not a subprocess")]
    NotASubprocess,
    #[error("{0} is not included in the target MDP")]
    NotIncluded(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("enumeration budget of {0} nodes exceeded")]
    BudgetExceeded(usize),
}

/// Pushforward of a distribution along a state map. Re-exported from the
/// distribution type for callers that work with bare maps.
pub fn pushforward(map: &BTreeMap<StateId, StateId>, mu: &Dist) -> Result<Dist, DistError> {
    mu.pushforward(map)
}

/// A morphism of MDPs, stored as explicit tables.
///
/// `preserve_reward` selects the category: when set, validation also
/// requires the source reward to equal the target reward of the image
/// action. The same pair of maps can be a valid MDP morphism while failing
/// in the reward-carrying category, so the choice is the caller's.
#[derive(Debug, Clone)]
pub struct MdpMorphism {
    source: Arc<FiniteMdp>,
    target: Arc<FiniteMdp>,
    state_map: BTreeMap<StateId, StateId>,
    action_map: BTreeMap<ActionId, ActionId>,
    preserve_reward: bool,
}

impl MdpMorphism {
    pub fn new(
        source: impl Into<Arc<FiniteMdp>>,
        target: impl Into<Arc<FiniteMdp>>,
        state_map: BTreeMap<StateId, StateId>,
        action_map: BTreeMap<ActionId, ActionId>,
    ) -> Self {
        MdpMorphism {
            source: source.into(),
            target: target.into(),
            state_map,
            action_map,
            preserve_reward: false,
        }
    }

    /// Flags the morphism as living in the reward-carrying category.
    pub fn preserving_reward(mut self) -> Self {
        self.preserve_reward = true;
        self
    }

    pub fn preserves_reward(&self) -> bool {
        self.preserve_reward
    }

    pub fn source(&self) -> &FiniteMdp {
        &self.source
    }

    pub fn target(&self) -> &FiniteMdp {
        &self.target
    }

    pub fn source_arc(&self) -> Arc<FiniteMdp> {
        Arc::clone(&self.source)
    }

    pub fn target_arc(&self) -> Arc<FiniteMdp> {
        Arc::clone(&self.target)
    }

    pub fn state_map(&self) -> &BTreeMap<StateId, StateId> {
        &self.state_map
    }

    pub fn action_map(&self) -> &BTreeMap<ActionId, ActionId> {
        &self.action_map
    }

    pub fn apply_state(&self, s: &StateId) -> Option<&StateId> {
        self.state_map.get(s)
    }

    pub fn apply_action(&self, a: &ActionId) -> Option<&ActionId> {
        self.action_map.get(a)
    }

    /// Image of the state map as a set.
    pub fn state_image(&self) -> BTreeSet<StateId> {
        self.state_map.values().cloned().collect()
    }

    /// Image of the action map as a set.
    pub fn action_image(&self) -> BTreeSet<ActionId> {
        self.action_map.values().cloned().collect()
    }

    /// The identity morphism on `m`.
    pub fn identity(m: impl Into<Arc<FiniteMdp>>) -> Self {
        let m = m.into();
        let state_map = m.states().map(|s| (s.clone(), s.clone())).collect();
        let action_map = m.actions().map(|a| (a.clone(), a.clone())).collect();
        let preserve_reward = m.has_reward();
        MdpMorphism {
            source: Arc::clone(&m),
            target: m,
            state_map,
            action_map,
            preserve_reward,
        }
    }

    /// The unique morphism to the constant MDP: both maps are constant.
    pub fn to_point(m: impl Into<Arc<FiniteMdp>>) -> Self {
        let m = m.into();
        let pt = Arc::new(FiniteMdp::point());
        let s = StateId::atom("pt");
        let a = ActionId::atom("pt");
        let state_map = m.states().map(|x| (x.clone(), s.clone())).collect();
        let action_map = m.actions().map(|x| (x.clone(), a.clone())).collect();
        MdpMorphism::new(m, pt, state_map, action_map)
    }

    /// The identity-label inclusion of a sub-MDP into a larger one.
    /// Fails if some state or action of `sub` is missing from `sup`.
    pub fn inclusion(
        sub: impl Into<Arc<FiniteMdp>>,
        sup: impl Into<Arc<FiniteMdp>>,
    ) -> Result<Self, MorphismError> {
        let sub = sub.into();
        let sup = sup.into();
        for s in sub.states() {
            if !sup.has_state(s) {
                return Err(MorphismError::NotIncluded(format!("state {s}")));
            }
        }
        for a in sub.actions() {
            if !sup.has_action(a) {
                return Err(MorphismError::NotIncluded(format!("action {a}")));
            }
        }
        let state_map = sub.states().map(|s| (s.clone(), s.clone())).collect();
        let action_map = sub.actions().map(|a| (a.clone(), a.clone())).collect();
        let preserve_reward = sub.has_reward() && sup.has_reward();
        Ok(MdpMorphism {
            source: sub,
            target: sup,
            state_map,
            action_map,
            preserve_reward,
        })
    }

    /// Checks totality, the anchoring square, the pushforward square and
    /// (when flagged) reward preservation. Violations name the offending
    /// state or action.
    pub fn check(&self) -> ValidationReport {
        self.check_with_eps(DEFAULT_EPS)
    }

    pub fn check_with_eps(&self, eps: f64) -> ValidationReport {
        let mut report = ValidationReport::default();
        for s in self.source.states() {
            match self.state_map.get(s) {
                None => report.push(format!("state map undefined at {s}")),
                Some(t) if !self.target.has_state(t) => {
                    report.push(format!("state map sends {s} outside the target"))
                }
                _ => {}
            }
        }
        for a in self.source.actions() {
            let b = match self.action_map.get(a) {
                None => {
                    report.push(format!("action map undefined at {a}"));
                    continue;
                }
                Some(b) => b,
            };
            if !self.target.has_action(b) {
                report.push(format!("action map sends {a} outside the target"));
                continue;
            }
            let (Some(src_anchor), Some(tgt_anchor)) =
                (self.source.anchor(a), self.target.anchor(b))
            else {
                continue;
            };
            match self.state_map.get(src_anchor) {
                Some(mapped) if mapped == tgt_anchor => {}
                _ => report.push(format!(
                    "anchoring square fails at action {a}: expected anchor {tgt_anchor}"
                )),
            }
            let (Some(src_dist), Some(tgt_dist)) =
                (self.source.transition(a), self.target.transition(b))
            else {
                continue;
            };
            match src_dist.pushforward(&self.state_map) {
                Ok(pushed) => {
                    if !pushed.approx_eq(tgt_dist, eps) {
                        report.push(format!(
                            "pushforward square fails at action {a}"
                        ));
                    }
                }
                Err(e) => report.push(format!("pushforward undefined at action {a}: {e}")),
            }
            if self.preserve_reward {
                match (self.source.reward(a), self.target.reward(b)) {
                    (Some(r1), Some(r2)) if (r1 - r2).abs() <= eps => {}
                    (None, _) | (_, None) => {
                        report.push(format!("reward missing for action {a} or its image"))
                    }
                    (Some(r1), Some(r2)) => report.push(format!(
                        "reward mismatch at action {a}: {r1} vs {r2}"
                    )),
                }
            }
        }
        report
    }

    pub fn is_valid(&self) -> bool {
        self.check().is_empty()
    }

    /// Composition `next ∘ self`. Requires `self.target == next.source`.
    pub fn then(&self, next: &MdpMorphism) -> Result<MdpMorphism, MorphismError> {
        if *self.target != *next.source {
            return Err(MorphismError::Mismatch);
        }
        let state_map = self
            .state_map
            .iter()
            .filter_map(|(s, t)| Some((s.clone(), next.state_map.get(t)?.clone())))
            .collect();
        let action_map = self
            .action_map
            .iter()
            .filter_map(|(a, b)| Some((a.clone(), next.action_map.get(b)?.clone())))
            .collect();
        Ok(MdpMorphism {
            source: Arc::clone(&self.source),
            target: Arc::clone(&next.target),
            state_map,
            action_map,
            preserve_reward: self.preserve_reward && next.preserve_reward,
        })
    }

    fn state_map_injective(&self) -> bool {
        self.state_image().len() == self.state_map.len()
    }

    fn action_map_injective(&self) -> bool {
        self.action_image().len() == self.action_map.len()
    }

    /// True iff both maps are injective. Assumes the morphism itself is
    /// valid (see [`MdpMorphism::check`]).
    pub fn is_subprocess(&self) -> bool {
        self.state_map_injective() && self.action_map_injective()
    }

    /// True iff the anchoring square is cartesian: the action map hits
    /// every target action anchored over the image states, so the only
    /// available actions on the image come from the source.
    pub fn is_full_subprocess(&self) -> bool {
        if !self.is_subprocess() {
            return false;
        }
        let image_states = self.state_image();
        let anchored_over_image: usize = image_states
            .iter()
            .map(|s| self.target.actions_at(s).len())
            .sum();
        anchored_over_image == self.action_map.len()
    }
}

/// The maximal subprocess of `m` on a subset of its states: the actions
/// anchored inside the subset whose transitions stay inside it. Returns
/// the sub-MDP together with its inclusion morphism.
pub fn canonical_subprocess(m: &FiniteMdp, keep: &BTreeSet<StateId>) -> (FiniteMdp, MdpMorphism) {
    canonical_subprocess_with_eps(m, keep, DEFAULT_EPS)
}

pub fn canonical_subprocess_with_eps(
    m: &FiniteMdp,
    keep: &BTreeSet<StateId>,
    eps: f64,
) -> (FiniteMdp, MdpMorphism) {
    let states: BTreeSet<StateId> = m.states().filter(|s| keep.contains(s)).cloned().collect();
    let actions: BTreeSet<ActionId> = m
        .actions()
        .filter(|a| {
            let anchored_inside = m.anchor(a).is_some_and(|s| states.contains(s));
            let escaping_mass: f64 = m
                .transition(a)
                .map(|d| {
                    d.iter()
                        .filter(|(s, _)| !states.contains(*s))
                        .map(|(_, p)| p)
                        .sum()
                })
                .unwrap_or(0.0);
            anchored_inside && escaping_mass <= eps
        })
        .cloned()
        .collect();
    let mut sub = m.restrict(&states, &actions);
    // Drop sub-eps stray support that the qualification test tolerated.
    sub = FiniteMdp::new(
        sub.states().cloned(),
        sub.actions().map(|a| {
            let d = Dist::from_pairs(
                sub.transition(a)
                    .unwrap()
                    .iter()
                    .filter(|(s, _)| states.contains(*s))
                    .map(|(s, p)| (s.clone(), p)),
            )
            .expect("restriction of a nonnegative distribution");
            (a.clone(), sub.anchor(a).unwrap().clone(), d)
        }),
        sub.reward_map().cloned(),
    );
    let incl = MdpMorphism::inclusion(sub.clone(), m.clone())
        .expect("canonical subprocess is included by construction");
    (sub, incl)
}

/// Factors a subprocess through the canonical subprocess on its state
/// image: the returned morphism composes with the canonical inclusion to
/// give back the original. Unique because the inclusions are injective.
pub fn factor_through_canonical(sub: &MdpMorphism) -> Result<MdpMorphism, MorphismError> {
    if !sub.is_valid() || !sub.is_subprocess() {
        return Err(MorphismError::NotASubprocess);
    }
    let keep = sub.state_image();
    let (canon, _) = canonical_subprocess(sub.target(), &keep);
    let factored = MdpMorphism::new(
        sub.source_arc(),
        canon,
        sub.state_map().clone(),
        sub.action_map().clone(),
    );
    if !factored.is_valid() {
        return Err(MorphismError::NotASubprocess);
    }
    Ok(factored)
}

/// Enumerates every valid morphism from `source` to `target` in the plain
/// (reward-free) category. Intended for universal-property checks on tiny
/// instances; `budget` bounds the number of candidate assignments visited.
pub fn enumerate_morphisms(
    source: &FiniteMdp,
    target: &FiniteMdp,
    budget: usize,
) -> Result<Vec<MdpMorphism>, MorphismError> {
    enumerate_morphisms_with_eps(source, target, budget, DEFAULT_EPS)
}

pub fn enumerate_morphisms_with_eps(
    source: &FiniteMdp,
    target: &FiniteMdp,
    budget: usize,
    eps: f64,
) -> Result<Vec<MdpMorphism>, MorphismError> {
    let src_states: Vec<&StateId> = source.states().collect();
    let tgt_states: Vec<&StateId> = target.states().collect();
    if !src_states.is_empty() && tgt_states.is_empty() {
        return Ok(Vec::new());
    }
    let src_arc = Arc::new(source.clone());
    let tgt_arc = Arc::new(target.clone());
    let mut results = Vec::new();
    let mut nodes = 0usize;
    let mut state_map: BTreeMap<StateId, StateId> = BTreeMap::new();

    fn assign_states(
        depth: usize,
        src_states: &[&StateId],
        tgt_states: &[&StateId],
        source: &FiniteMdp,
        target: &FiniteMdp,
        src_arc: &Arc<FiniteMdp>,
        tgt_arc: &Arc<FiniteMdp>,
        state_map: &mut BTreeMap<StateId, StateId>,
        results: &mut Vec<MdpMorphism>,
        nodes: &mut usize,
        budget: usize,
        eps: f64,
    ) -> Result<(), MorphismError> {
        *nodes += 1;
        if *nodes > budget {
            return Err(MorphismError::BudgetExceeded(budget));
        }
        if depth == src_states.len() {
            return extend_actions(
                source, target, src_arc, tgt_arc, state_map, results, nodes, budget, eps,
            );
        }
        for t in tgt_states {
            state_map.insert(src_states[depth].clone(), (*t).clone());
            assign_states(
                depth + 1,
                src_states,
                tgt_states,
                source,
                target,
                src_arc,
                tgt_arc,
                state_map,
                results,
                nodes,
                budget,
                eps,
            )?;
        }
        state_map.remove(src_states[depth]);
        Ok(())
    }

    fn extend_actions(
        source: &FiniteMdp,
        target: &FiniteMdp,
        src_arc: &Arc<FiniteMdp>,
        tgt_arc: &Arc<FiniteMdp>,
        state_map: &BTreeMap<StateId, StateId>,
        results: &mut Vec<MdpMorphism>,
        nodes: &mut usize,
        budget: usize,
        eps: f64,
    ) -> Result<(), MorphismError> {
        // Per-action candidate images, pruned by anchor and pushforward.
        let mut candidates: Vec<(&ActionId, Vec<&ActionId>)> = Vec::new();
        for a in source.actions() {
            let anchor = state_map
                .get(source.anchor(a).expect("validated source"))
                .expect("total state map");
            let pushed = match source.transition(a).unwrap().pushforward(state_map) {
                Ok(p) => p,
                Err(_) => return Ok(()),
            };
            let options: Vec<&ActionId> = target
                .actions_at(anchor)
                .iter()
                .filter(|b| {
                    target
                        .transition(b)
                        .is_some_and(|d| d.approx_eq(&pushed, eps))
                })
                .collect();
            if options.is_empty() {
                return Ok(());
            }
            candidates.push((a, options));
        }
        let mut action_map: BTreeMap<ActionId, ActionId> = BTreeMap::new();
        fn assign_actions(
            depth: usize,
            candidates: &[(&ActionId, Vec<&ActionId>)],
            action_map: &mut BTreeMap<ActionId, ActionId>,
            state_map: &BTreeMap<StateId, StateId>,
            src_arc: &Arc<FiniteMdp>,
            tgt_arc: &Arc<FiniteMdp>,
            results: &mut Vec<MdpMorphism>,
            nodes: &mut usize,
            budget: usize,
        ) -> Result<(), MorphismError> {
            *nodes += 1;
            if *nodes > budget {
                return Err(MorphismError::BudgetExceeded(budget));
            }
            if depth == candidates.len() {
                results.push(MdpMorphism::new(
                    Arc::clone(src_arc),
                    Arc::clone(tgt_arc),
                    state_map.clone(),
                    action_map.clone(),
                ));
                return Ok(());
            }
            let (a, options) = &candidates[depth];
            for b in options {
                action_map.insert((*a).clone(), (*b).clone());
                assign_actions(
                    depth + 1,
                    candidates,
                    action_map,
                    state_map,
                    src_arc,
                    tgt_arc,
                    results,
                    nodes,
                    budget,
                )?;
            }
            action_map.remove(candidates[depth].0);
            Ok(())
        }
        assign_actions(
            0, &candidates, &mut action_map, state_map, src_arc, tgt_arc, results, nodes, budget,
        )
    }

    assign_states(
        0,
        &src_states,
        &tgt_states,
        source,
        target,
        &src_arc,
        &tgt_arc,
        &mut state_map,
        &mut results,
        &mut nodes,
        budget,
        eps,
    )?;
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;

    fn two_chain() -> FiniteMdp {
        // s --step--> t, t terminal
        let s = StateId::atom("s");
        let t = StateId::atom("t");
        FiniteMdp::new(
            [s.clone(), t.clone()],
            [(ActionId::atom("step"), s, Dist::point(t))],
            None,
        )
    }

    #[test]
    fn identity_checks_and_is_full() {
        let m = two_chain();
        let id = MdpMorphism::identity(m);
        assert!(id.check().is_empty());
        assert!(id.is_subprocess());
        assert!(id.is_full_subprocess());
    }

    #[test]
    fn to_point_checks_but_is_not_subprocess() {
        let m = two_chain();
        let p = MdpMorphism::to_point(m);
        assert!(p.check().is_empty());
        assert!(!p.is_subprocess());
    }

    #[test]
    fn composition_with_identity_is_identity() {
        let m = two_chain();
        let id = MdpMorphism::identity(m.clone());
        let p = MdpMorphism::to_point(m);
        let composed = id.then(&p).unwrap();
        assert_eq!(composed.state_map(), p.state_map());
        assert_eq!(composed.action_map(), p.action_map());
        assert!(composed.check().is_empty());
    }

    #[test]
    fn composition_endpoint_mismatch_rejected() {
        let m = two_chain();
        let p = MdpMorphism::to_point(m.clone());
        let id = MdpMorphism::identity(m);
        assert!(matches!(p.then(&id), Err(MorphismError::Mismatch)));
    }

    #[test]
    fn canonical_subprocess_on_all_states_is_everything() {
        let m = two_chain();
        let keep: BTreeSet<StateId> = m.states().cloned().collect();
        let (sub, incl) = canonical_subprocess(&m, &keep);
        assert_eq!(sub, m);
        assert!(incl.check().is_empty());
    }

    #[test]
    fn canonical_subprocess_on_empty_set_is_empty() {
        let m = two_chain();
        let (sub, incl) = canonical_subprocess(&m, &BTreeSet::new());
        assert_eq!(sub.state_count(), 0);
        assert_eq!(sub.action_count(), 0);
        assert!(incl.check().is_empty());
    }

    #[test]
    fn canonical_subprocess_drops_escaping_actions() {
        let m = two_chain();
        let keep: BTreeSet<StateId> = [StateId::atom("s")].into();
        let (sub, _) = canonical_subprocess(&m, &keep);
        assert_eq!(sub.state_count(), 1);
        assert_eq!(sub.action_count(), 0, "step escapes the kept set");
    }

    #[test]
    fn factoring_the_canonical_inclusion_gives_identity_maps() {
        let m = two_chain();
        let keep: BTreeSet<StateId> = [StateId::atom("t")].into();
        let (sub, incl) = canonical_subprocess(&m, &keep);
        let factored = factor_through_canonical(&incl).unwrap();
        assert_eq!(factored.source(), &sub);
        assert_eq!(factored.target(), &sub);
        assert!(factored.is_valid());
    }

    #[test]
    fn enumeration_finds_the_unique_map_to_point() {
        let m = two_chain();
        let pt = FiniteMdp::point();
        let all = enumerate_morphisms(&m, &pt, 10_000).unwrap();
        assert_eq!(all.len(), 1);
        assert!(all[0].is_valid());
    }
}
