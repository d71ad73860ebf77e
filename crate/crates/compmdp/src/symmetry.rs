//! Finite group actions on MDPs and orbit quotients.
//!
//! A group acts through automorphisms: pairs of permutations of states
//! and actions that are valid morphisms in both directions. The quotient
//! collapses each orbit to a single state or action; its transitions are
//! the pushforward of any representative's transitions, which is
//! well-defined exactly because every group element is an automorphism.
//! The quotient is universal among group-invariant morphisms.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::composition::{CompositionError, Span};
use crate::dist::{Dist, DEFAULT_EPS};
use crate::label::{ActionId, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::{MdpMorphism, MorphismError};

pub const DEFAULT_GROUP_BUDGET: usize = 10_000;

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("generator {index} is not an automorphism: {reason}")]
    NotAutomorphism { index: usize, reason: String },
    #[error("group closure exceeded the budget of {0} elements")]
    BudgetExceeded(usize),
    #[error("orbit of action {0} has representatives with disagreeing pushforwards")]
    InconsistentOrbit(ActionId),
    #[error("reward is not constant on the orbit of action {0}")]
    RewardNotInvariant(ActionId),
    #[error("morphism is not invariant under element {element}: moved at {witness}")]
    NotInvariant { element: usize, witness: String },
    #[error(transparent)]
    Morphism(#[from] MorphismError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
}

/// One group element: a pair of permutations forming an automorphism.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroupElement {
    pub state_perm: BTreeMap<StateId, StateId>,
    pub action_perm: BTreeMap<ActionId, ActionId>,
}

impl GroupElement {
    pub fn identity(m: &FiniteMdp) -> Self {
        GroupElement {
            state_perm: m.states().map(|s| (s.clone(), s.clone())).collect(),
            action_perm: m.actions().map(|a| (a.clone(), a.clone())).collect(),
        }
    }

    /// `self` after `first`: the composite permutation x ↦ self(first(x)).
    fn after(&self, first: &GroupElement) -> GroupElement {
        GroupElement {
            state_perm: first
                .state_perm
                .iter()
                .map(|(x, y)| (x.clone(), self.state_perm[y].clone()))
                .collect(),
            action_perm: first
                .action_perm
                .iter()
                .map(|(x, y)| (x.clone(), self.action_perm[y].clone()))
                .collect(),
        }
    }

    pub fn apply_state(&self, s: &StateId) -> &StateId {
        &self.state_perm[s]
    }

    pub fn apply_action(&self, a: &ActionId) -> &ActionId {
        &self.action_perm[a]
    }
}

/// A finite group acting on a fixed MDP, presented by its full enumerated
/// element set (closed under composition, containing the identity).
#[derive(Debug, Clone)]
pub struct GroupAction {
    mdp: Arc<FiniteMdp>,
    elements: Vec<GroupElement>,
}

impl GroupAction {
    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn state_orbit(&self, s: &StateId) -> BTreeSet<StateId> {
        self.elements
            .iter()
            .map(|g| g.apply_state(s).clone())
            .collect()
    }

    pub fn action_orbit(&self, a: &ActionId) -> BTreeSet<ActionId> {
        self.elements
            .iter()
            .map(|g| g.apply_action(a).clone())
            .collect()
    }

    pub fn state_orbits(&self) -> Vec<BTreeSet<StateId>> {
        let mut seen: BTreeSet<StateId> = BTreeSet::new();
        let mut orbits = Vec::new();
        for s in self.mdp.states() {
            if seen.contains(s) {
                continue;
            }
            let orbit = self.state_orbit(s);
            seen.extend(orbit.iter().cloned());
            orbits.push(orbit);
        }
        orbits
    }

    pub fn action_orbits(&self) -> Vec<BTreeSet<ActionId>> {
        let mut seen: BTreeSet<ActionId> = BTreeSet::new();
        let mut orbits = Vec::new();
        for a in self.mdp.actions() {
            if seen.contains(a) {
                continue;
            }
            let orbit = self.action_orbit(a);
            seen.extend(orbit.iter().cloned());
            orbits.push(orbit);
        }
        orbits
    }

    /// The group element as a morphism of the underlying MDP.
    pub fn as_morphism(&self, g: &GroupElement) -> MdpMorphism {
        MdpMorphism::new(
            Arc::clone(&self.mdp),
            Arc::clone(&self.mdp),
            g.state_perm.clone(),
            g.action_perm.clone(),
        )
    }
}

fn automorphism_reason(m: &FiniteMdp, g: &GroupElement) -> Option<String> {
    let states: BTreeSet<&StateId> = m.states().collect();
    let state_values: BTreeSet<&StateId> = g.state_perm.values().collect();
    if g.state_perm.len() != m.state_count()
        || state_values != states
        || !g.state_perm.keys().all(|s| states.contains(s))
    {
        return Some("state map is not a permutation of the state set".into());
    }
    let actions: BTreeSet<&ActionId> = m.actions().collect();
    let action_values: BTreeSet<&ActionId> = g.action_perm.values().collect();
    if g.action_perm.len() != m.action_count()
        || action_values != actions
        || !g.action_perm.keys().all(|a| actions.contains(a))
    {
        return Some("action map is not a permutation of the action set".into());
    }
    let as_morphism = MdpMorphism::new(
        m.clone(),
        m.clone(),
        g.state_perm.clone(),
        g.action_perm.clone(),
    );
    let report = as_morphism.check();
    if !report.is_empty() {
        return Some(report.to_string());
    }
    // A bijective morphism between finite MDPs has a morphism inverse, so
    // no separate reverse check is needed.
    None
}

/// Closes a set of generator permutations into a full group action,
/// verifying that each generator is an automorphism. Enumeration stops
/// with an error past `budget` elements.
pub fn close_group(
    m: &FiniteMdp,
    generators: Vec<GroupElement>,
    budget: usize,
) -> Result<GroupAction, SymmetryError> {
    for (index, g) in generators.iter().enumerate() {
        if let Some(reason) = automorphism_reason(m, g) {
            return Err(SymmetryError::NotAutomorphism { index, reason });
        }
    }
    let mut elements: BTreeSet<GroupElement> = BTreeSet::new();
    elements.insert(GroupElement::identity(m));
    let mut frontier: Vec<GroupElement> = elements.iter().cloned().collect();
    while let Some(e) = frontier.pop() {
        for g in &generators {
            let next = g.after(&e);
            if elements.insert(next.clone()) {
                if elements.len() > budget {
                    return Err(SymmetryError::BudgetExceeded(budget));
                }
                frontier.push(next);
            }
        }
    }
    Ok(GroupAction {
        mdp: Arc::new(m.clone()),
        elements: elements.into_iter().collect(),
    })
}

/// Deterministic atom labels for group elements, by their position in the
/// sorted element list.
fn element_labels(action: &GroupAction) -> Vec<StateId> {
    (0..action.order())
        .map(|i| StateId::atom(format!("g{i}")))
        .collect()
}

/// The auxiliary product of an MDP with a group: one copy of the state
/// and action spaces per element. The transition out of `(a, g)` lands on
/// `(s′, g)` with the mass of `T(a)(s′)`; rewards pull back along the
/// first projection when present.
pub fn product_with_group(action: &GroupAction) -> FiniteMdp {
    let m = action.mdp();
    let labels = element_labels(action);
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut reward: BTreeMap<ActionId, f64> = BTreeMap::new();
    for tag in &labels {
        for s in m.states() {
            states.push(s.pair(&StateId(tag.label().clone())));
        }
        for a in m.actions() {
            let pa = a.pair(&ActionId(tag.label().clone()));
            let anchor = m.anchor(a).unwrap().pair(tag);
            let dist = m
                .transition(a)
                .unwrap()
                .relabel(|t| t.pair(tag));
            if let Some(r) = m.reward(a) {
                reward.insert(pa.clone(), r);
            }
            actions.push((pa, anchor, dist));
        }
    }
    FiniteMdp::new(states, actions, m.has_reward().then_some(reward))
}

/// The span of the product with the group over the original MDP: the
/// first-projection leg forgets the element, the action leg applies it.
/// The pushout of this span is an alternative route to the quotient.
pub fn group_span(action: &GroupAction) -> Result<Span, SymmetryError> {
    let m = action.mdp();
    let product = product_with_group(action);
    let labels = element_labels(action);
    let mut proj_s = BTreeMap::new();
    let mut proj_a = BTreeMap::new();
    let mut act_s = BTreeMap::new();
    let mut act_a = BTreeMap::new();
    for (i, tag) in labels.iter().enumerate() {
        let g = &action.elements()[i];
        for s in m.states() {
            let key = s.pair(&StateId(tag.label().clone()));
            proj_s.insert(key.clone(), s.clone());
            act_s.insert(key, g.apply_state(s).clone());
        }
        for a in m.actions() {
            let key = a.pair(&ActionId(tag.label().clone()));
            proj_a.insert(key.clone(), a.clone());
            act_a.insert(key, g.apply_action(a).clone());
        }
    }
    let product = Arc::new(product);
    let m_arc = Arc::new(m.clone());
    let projection = MdpMorphism::new(
        Arc::clone(&product),
        Arc::clone(&m_arc),
        proj_s,
        proj_a,
    );
    let acting = MdpMorphism::new(product, m_arc, act_s, act_a);
    Ok(Span::new(projection, acting)?)
}

/// The orbit quotient: one state per state orbit, one action per action
/// orbit, transitions pushed forward from the smallest representative and
/// verified to agree across all representatives. Rewards must be constant
/// on orbits. Returns the quotient and the quotient morphism.
pub fn quotient(action: &GroupAction) -> Result<(FiniteMdp, MdpMorphism), SymmetryError> {
    quotient_with_eps(action, DEFAULT_EPS)
}

pub fn quotient_with_eps(
    action: &GroupAction,
    eps: f64,
) -> Result<(FiniteMdp, MdpMorphism), SymmetryError> {
    let m = action.mdp();
    let mut q_state: BTreeMap<StateId, StateId> = BTreeMap::new();
    let mut states = Vec::new();
    for orbit in action.state_orbits() {
        let id = StateId::orbit_of(orbit.iter().cloned());
        for member in &orbit {
            q_state.insert(member.clone(), id.clone());
        }
        states.push(id);
    }

    let mut q_action: BTreeMap<ActionId, ActionId> = BTreeMap::new();
    let mut actions = Vec::new();
    let mut reward: BTreeMap<ActionId, f64> = BTreeMap::new();
    for orbit in action.action_orbits() {
        let id = ActionId::orbit_of(orbit.iter().cloned());
        let rep = orbit.iter().min().expect("orbits are nonempty");
        let anchor = q_state[m.anchor(rep).unwrap()].clone();
        let dist = push_through(m.transition(rep).unwrap(), &q_state);
        for member in &orbit {
            let other = push_through(m.transition(member).unwrap(), &q_state);
            if !other.approx_eq(&dist, eps) {
                return Err(SymmetryError::InconsistentOrbit(id));
            }
            if q_state[m.anchor(member).unwrap()] != anchor {
                return Err(SymmetryError::InconsistentOrbit(id));
            }
        }
        if m.has_reward() {
            let r = m.reward(rep).unwrap_or(0.0);
            for member in &orbit {
                if (m.reward(member).unwrap_or(0.0) - r).abs() > eps {
                    return Err(SymmetryError::RewardNotInvariant(id));
                }
            }
            reward.insert(id.clone(), r);
        }
        for member in &orbit {
            q_action.insert(member.clone(), id.clone());
        }
        actions.push((id, anchor, dist));
    }

    let quotient = FiniteMdp::new(states, actions, m.has_reward().then_some(reward));
    let mut q = MdpMorphism::new(m.clone(), quotient.clone(), q_state, q_action);
    if m.has_reward() {
        q = q.preserving_reward();
    }
    Ok((quotient, q))
}

fn push_through(d: &Dist, map: &BTreeMap<StateId, StateId>) -> Dist {
    d.pushforward(map).expect("total quotient map")
}

/// Factors a group-invariant morphism through the quotient: the unique
/// morphism out of the quotient whose composition with the quotient map
/// is the given morphism. Fails naming the group element and state or
/// action moved by a non-invariant input.
pub fn quotient_mediator(
    action: &GroupAction,
    q: &MdpMorphism,
    invariant: &MdpMorphism,
) -> Result<MdpMorphism, SymmetryError> {
    let m = action.mdp();
    for (element, g) in action.elements().iter().enumerate() {
        for s in m.states() {
            if invariant.apply_state(g.apply_state(s)) != invariant.apply_state(s) {
                return Err(SymmetryError::NotInvariant {
                    element,
                    witness: format!("state {s}"),
                });
            }
        }
        for a in m.actions() {
            if invariant.apply_action(g.apply_action(a)) != invariant.apply_action(a) {
                return Err(SymmetryError::NotInvariant {
                    element,
                    witness: format!("action {a}"),
                });
            }
        }
    }
    let mut state_map: BTreeMap<StateId, StateId> = BTreeMap::new();
    for (s, orbit_id) in q.state_map() {
        state_map.insert(orbit_id.clone(), invariant.state_map()[s].clone());
    }
    let mut action_map: BTreeMap<ActionId, ActionId> = BTreeMap::new();
    for (a, orbit_id) in q.action_map() {
        action_map.insert(orbit_id.clone(), invariant.action_map()[a].clone());
    }
    Ok(MdpMorphism::new(
        q.target_arc(),
        invariant.target_arc(),
        state_map,
        action_map,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composition::pushout;
    use crate::iso::are_isomorphic;

    /// Two rings of four rotational positions each; rotation shifts the
    /// angle on both rings at once. Moving up/down switches rings,
    /// turning moves along the ring.
    fn ring_world() -> FiniteMdp {
        let state = |r: usize, a: usize| StateId::atom(format!("r{r}a{a}"));
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for r in 0..2 {
            for a in 0..4 {
                states.push(state(r, a));
                actions.push((
                    ActionId::atom(format!("cw@r{r}a{a}")),
                    state(r, a),
                    Dist::point(state(r, (a + 1) % 4)),
                ));
                actions.push((
                    ActionId::atom(format!("ccw@r{r}a{a}")),
                    state(r, a),
                    Dist::point(state(r, (a + 3) % 4)),
                ));
                actions.push((
                    ActionId::atom(format!("flip@r{r}a{a}")),
                    state(r, a),
                    Dist::point(state(1 - r, a)),
                ));
            }
        }
        FiniteMdp::new(states, actions, None)
    }

    fn rotation(m: &FiniteMdp) -> GroupElement {
        let shift = |id: &str| -> String {
            // r{r}a{a} -> same ring, angle + 1 mod 4
            let r: usize = id[1..2].parse().unwrap();
            let a: usize = id[3..4].parse().unwrap();
            format!("r{r}a{}", (a + 1) % 4)
        };
        GroupElement {
            state_perm: m
                .states()
                .map(|s| (s.clone(), StateId::atom(shift(&s.to_string()))))
                .collect(),
            action_perm: m
                .actions()
                .map(|a| {
                    let text = a.to_string();
                    let (kind, at) = text.split_once('@').unwrap();
                    (a.clone(), ActionId::atom(format!("{kind}@{}", shift(at))))
                })
                .collect(),
        }
    }

    #[test]
    fn empty_generators_give_the_trivial_group() {
        let m = ring_world();
        let g = close_group(&m, vec![], 100).unwrap();
        assert_eq!(g.order(), 1);
        let (quot, q) = quotient(&g).unwrap();
        assert_eq!(quot.state_count(), m.state_count());
        assert!(q.check().is_empty());
    }

    #[test]
    fn rotation_closes_to_a_cyclic_group_of_order_four() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        assert_eq!(g.order(), 4);
    }

    #[test]
    fn broken_generator_is_rejected() {
        let m = ring_world();
        let mut gen = rotation(&m);
        // Redirect one action image so the pushforward square breaks.
        let cw = ActionId::atom("cw@r0a0");
        let flip = ActionId::atom("flip@r0a1");
        gen.action_perm.insert(cw.clone(), flip.clone());
        let other = gen
            .action_perm
            .iter()
            .find(|(k, v)| **v == ActionId::atom("cw@r0a1") && **k != cw)
            .map(|(k, _)| k.clone());
        if let Some(k) = other {
            gen.action_perm.insert(k, ActionId::atom("cw@r0a1"));
        }
        assert!(matches!(
            close_group(&m, vec![gen], 100),
            Err(SymmetryError::NotAutomorphism { .. })
        ));
    }

    #[test]
    fn rotation_quotient_has_one_state_per_ring() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let (quot, q) = quotient(&g).unwrap();
        assert_eq!(quot.state_count(), 2);
        // cw, ccw and flip orbits per ring.
        assert_eq!(quot.action_count(), 6);
        assert!(q.check().is_empty());
        assert!(quot.validate().is_empty());
    }

    #[test]
    fn quotient_map_is_invariant_under_the_group() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let (_, q) = quotient(&g).unwrap();
        for e in g.elements() {
            for s in m.states() {
                assert_eq!(q.apply_state(e.apply_state(s)), q.apply_state(s));
            }
        }
    }

    #[test]
    fn product_with_group_doubles_per_element() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let product = product_with_group(&g);
        assert_eq!(product.state_count(), m.state_count() * 4);
        assert_eq!(product.action_count(), m.action_count() * 4);
        assert!(product.validate().is_empty());
    }

    #[test]
    fn group_span_legs_are_valid_morphisms() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let span = group_span(&g).unwrap();
        assert!(span.left().check().is_empty());
        assert!(span.right().check().is_empty());
    }

    #[test]
    fn quotient_agrees_with_the_pushout_route() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let (quot, _) = quotient(&g).unwrap();
        let glued = pushout(&group_span(&g).unwrap()).unwrap();
        assert!(are_isomorphic(&glued.glued, &quot).unwrap());
    }

    #[test]
    fn mediator_for_q_itself_is_identity() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let (quot, q) = quotient(&g).unwrap();
        let med = quotient_mediator(&g, &q, &q).unwrap();
        assert!(med.check().is_empty());
        for s in quot.states() {
            assert_eq!(med.apply_state(s), Some(s));
        }
    }

    #[test]
    fn mediator_for_map_to_point() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let (_, q) = quotient(&g).unwrap();
        let med = quotient_mediator(&g, &q, &MdpMorphism::to_point(m.clone())).unwrap();
        assert!(med.check().is_empty());
        assert_eq!(med.target().state_count(), 1);
        // Factorization: q then mediator equals the original morphism.
        let recomposed = q.then(&med).unwrap();
        assert_eq!(
            recomposed.state_map(),
            MdpMorphism::to_point(m).state_map()
        );
    }

    #[test]
    fn non_invariant_morphism_is_rejected() {
        let m = ring_world();
        let g = close_group(&m, vec![rotation(&m)], 100).unwrap();
        let (_, q) = quotient(&g).unwrap();
        let id = MdpMorphism::identity(m);
        assert!(matches!(
            quotient_mediator(&g, &q, &id),
            Err(SymmetryError::NotInvariant { .. })
        ));
    }
}
