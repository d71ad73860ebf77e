//! Puncturing: removal of hazardous states and every action that can
//! reach them, plus the multi-agent diagonal constructions built on top
//! of it.
//!
//! Puncturing an MDP along a state set removes those states, the actions
//! anchored on them, and the actions carrying positive mass into them.
//! The result is exactly the canonical maximal subprocess on the
//! complement, which is what makes punctured worlds compose well with
//! fiber products and pushouts.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::composition::{
    cartesian_product, fiber_product, pushout, CompositionError, Cospan, Span,
};
use crate::dist::DEFAULT_EPS;
use crate::iso::{are_isomorphic, IsoError};
use crate::label::{ActionId, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::{canonical_subprocess_with_eps, MdpMorphism, MorphismError};

#[derive(Debug, Error)]
pub enum PunctureError {
    #[error("action {0} violates the support precondition")]
    PreconditionFailed(ActionId),
    #[error("product would have {0} states, over the budget of {1}")]
    BudgetExceeded(usize, usize),
    #[error("need at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error(transparent)]
    Iso(#[from] IsoError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
}

/// Removes the obstacle states, the actions anchored on them, and the
/// actions with positive (above `eps`) mass into them. Returns the
/// punctured MDP and its inclusion, which is a subprocess morphism.
pub fn puncture(m: &FiniteMdp, obstacles: &BTreeSet<StateId>) -> (FiniteMdp, MdpMorphism) {
    puncture_with_eps(m, obstacles, DEFAULT_EPS)
}

pub fn puncture_with_eps(
    m: &FiniteMdp,
    obstacles: &BTreeSet<StateId>,
    eps: f64,
) -> (FiniteMdp, MdpMorphism) {
    let keep: BTreeSet<StateId> = m
        .states()
        .filter(|s| !obstacles.contains(s))
        .cloned()
        .collect();
    canonical_subprocess_with_eps(m, &keep, eps)
}

/// Punctures `m2` along the state image of a morphism into it.
pub fn puncture_along(m2: &FiniteMdp, sub: &MdpMorphism) -> (FiniteMdp, MdpMorphism) {
    let image: BTreeSet<StateId> = sub.state_image();
    puncture(m2, &image)
}

/// Verifies that two disjoint obstacle sets factor the ambient MDP both
/// ways: the fiber product of the singly punctured MDPs over the ambient
/// one is the doubly punctured MDP, and gluing the singly punctured MDPs
/// along it recovers the ambient MDP. Both comparisons are up to
/// isomorphism.
pub fn check_static_obstacles(
    m: &FiniteMdp,
    o1: &BTreeSet<StateId>,
    o2: &BTreeSet<StateId>,
) -> Result<bool, PunctureError> {
    let (m1, incl1) = puncture(m, o1);
    let (m2, incl2) = puncture(m, o2);
    let union: BTreeSet<StateId> = o1.union(o2).cloned().collect();
    let (m12, _) = puncture(m, &union);

    let fiber = fiber_product(&Cospan::new(incl1, incl2)?);
    if !are_isomorphic(&fiber.product, &m12)? {
        return Ok(false);
    }

    let left = MdpMorphism::inclusion(m12.clone(), m1)?;
    let right = MdpMorphism::inclusion(m12, m2)?;
    let glued = pushout(&Span::new(left, right)?)?;
    Ok(are_isomorphic(&glued.glued, m)?)
}

/// Verifies that gluing two MDPs along a shared subprocess and then
/// puncturing the glue along the second component recovers the first.
/// Precondition: every action of the second MDP outside the shared image
/// keeps positive mass outside the shared states; the offending action is
/// named otherwise.
pub fn check_disjoint_recovery(span: &Span) -> Result<bool, PunctureError> {
    let m1 = span.left().target();
    let m2 = span.right().target();
    let shared_states = span.right().state_image();
    let shared_actions = span.right().action_image();
    for a2 in m2.actions() {
        if shared_actions.contains(a2) {
            continue;
        }
        let outside_mass: f64 = m2
            .transition(a2)
            .map(|d| {
                d.iter()
                    .filter(|(s, _)| !shared_states.contains(*s))
                    .map(|(_, p)| p)
                    .sum()
            })
            .unwrap_or(0.0);
        if outside_mass <= DEFAULT_EPS {
            return Err(PunctureError::PreconditionFailed(a2.clone()));
        }
    }

    let glued = pushout(span)?;
    // The second component punctured along the shared part, viewed inside
    // the glue through the right inclusion.
    let (m2_punctured, m2_punct_incl) = puncture_along(m2, span.right());
    let _ = m2_punctured;
    let in_glue = m2_punct_incl.then(&glued.incl_right)?;
    let (recovered, _) = puncture_along(&glued.glued, &in_glue);
    Ok(are_isomorphic(&recovered, m1)?)
}

/// The default cap on product state counts for collision products.
pub const DEFAULT_PRODUCT_BUDGET: usize = 1_000_000;

/// The n-fold independent product of an MDP with itself, punctured along
/// the big diagonal (every tuple in which two agents share a state).
/// Association is left-to-right, so tuple labels are left-nested pairs.
pub fn collision_free_product(
    m: &FiniteMdp,
    n_agents: usize,
    budget: usize,
) -> Result<FiniteMdp, PunctureError> {
    if n_agents < 2 {
        return Err(PunctureError::TooFewAgents(n_agents));
    }
    let size = m
        .state_count()
        .checked_pow(n_agents as u32)
        .unwrap_or(usize::MAX);
    if size > budget {
        return Err(PunctureError::BudgetExceeded(size, budget));
    }
    let mut product = m.clone();
    for _ in 1..n_agents {
        product = cartesian_product(&product, m).product;
    }
    let diagonal: BTreeSet<StateId> = product
        .states()
        .filter(|s| {
            let parts = s.label().pair_components();
            (0..parts.len()).any(|i| (i + 1..parts.len()).any(|j| parts[i] == parts[j]))
        })
        .cloned()
        .collect();
    Ok(puncture(&product, &diagonal).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;
    use crate::morphism::canonical_subprocess;

    fn two_state_free() -> FiniteMdp {
        // Two states, each with a "hop" to the other and a "stay".
        let a = StateId::atom("a");
        let b = StateId::atom("b");
        FiniteMdp::new(
            [a.clone(), b.clone()],
            [
                (ActionId::atom("hop@a"), a.clone(), Dist::point(b.clone())),
                (ActionId::atom("stay@a"), a.clone(), Dist::point(a.clone())),
                (ActionId::atom("hop@b"), b.clone(), Dist::point(a.clone())),
                (ActionId::atom("stay@b"), b.clone(), Dist::point(b.clone())),
            ],
            None,
        )
    }

    #[test]
    fn empty_obstacle_set_changes_nothing() {
        let m = two_state_free();
        let (p, incl) = puncture(&m, &BTreeSet::new());
        assert_eq!(p, m);
        assert!(incl.check().is_empty());
        assert!(incl.is_subprocess());
    }

    #[test]
    fn puncturing_the_only_state_empties_the_mdp() {
        let s = StateId::atom("s");
        let m = FiniteMdp::new(
            [s.clone()],
            [(ActionId::atom("loop"), s.clone(), Dist::point(s.clone()))],
            None,
        );
        let (p, _) = puncture(&m, &[s].into());
        assert_eq!(p.state_count(), 0);
        assert_eq!(p.action_count(), 0);
    }

    #[test]
    fn punctured_actions_never_reach_obstacles() {
        let m = two_state_free();
        let obstacles: BTreeSet<StateId> = [StateId::atom("b")].into();
        let (p, incl) = puncture(&m, &obstacles);
        assert_eq!(p.state_count(), 1);
        // hop@a enters b; hop@b and stay@b are anchored at b: only stay@a
        // survives.
        assert_eq!(p.action_count(), 1);
        assert!(p.has_action(&ActionId::atom("stay@a")));
        for a in p.actions() {
            let d = p.transition(a).unwrap();
            assert!(obstacles.iter().all(|o| d.mass(o) <= DEFAULT_EPS));
        }
        assert!(incl.is_subprocess());
    }

    #[test]
    fn puncture_equals_canonical_subprocess_on_complement() {
        let m = two_state_free();
        let obstacles: BTreeSet<StateId> = [StateId::atom("a")].into();
        let (p, _) = puncture(&m, &obstacles);
        let keep: BTreeSet<StateId> = [StateId::atom("b")].into();
        let (canon, _) = canonical_subprocess(&m, &keep);
        assert_eq!(p, canon);
    }

    #[test]
    fn puncture_along_identity_empties() {
        let m = two_state_free();
        let (p, _) = puncture_along(&m, &MdpMorphism::identity(m.clone()));
        assert_eq!(p.state_count(), 0);
    }

    #[test]
    fn static_obstacles_trivial_on_empty_sets() {
        let m = two_state_free();
        assert!(check_static_obstacles(&m, &BTreeSet::new(), &BTreeSet::new()).unwrap());
    }

    #[test]
    fn collision_product_of_two_agents_on_two_states() {
        let m = two_state_free();
        let p = collision_free_product(&m, 2, 1000).unwrap();
        // 4 product states minus the 2 diagonal ones.
        assert_eq!(p.state_count(), 2);
        assert!(p.validate().is_empty());
    }

    #[test]
    fn collision_product_of_single_state_is_empty() {
        let s = StateId::atom("s");
        let m = FiniteMdp::new(
            [s.clone()],
            [(ActionId::atom("loop"), s.clone(), Dist::point(s))],
            None,
        );
        let p = collision_free_product(&m, 2, 1000).unwrap();
        assert_eq!(p.state_count(), 0);
    }

    #[test]
    fn collision_product_budget_guard() {
        let m = two_state_free();
        assert!(matches!(
            collision_free_product(&m, 10, 100),
            Err(PunctureError::BudgetExceeded(1024, 100))
        ));
    }

    #[test]
    fn three_agents_on_two_states_collide_everywhere() {
        let m = two_state_free();
        let p = collision_free_product(&m, 3, 1000).unwrap();
        // Any 3-tuple over 2 states repeats one; nothing survives.
        assert_eq!(p.state_count(), 0);
    }

    #[test]
    fn disjoint_recovery_rejects_inward_supported_actions() {
        // m2's go@c sends all mass into the shared cell b.
        let cell = |x: &str| StateId::atom(x);
        let m1 = FiniteMdp::new(
            [cell("a"), cell("b")],
            [
                (ActionId::atom("go@a"), cell("a"), Dist::point(cell("b"))),
                (ActionId::atom("stay@b"), cell("b"), Dist::point(cell("b"))),
            ],
            None,
        );
        let m2 = FiniteMdp::new(
            [cell("b"), cell("c")],
            [
                (ActionId::atom("stay@b"), cell("b"), Dist::point(cell("b"))),
                (ActionId::atom("go@c"), cell("c"), Dist::point(cell("b"))),
            ],
            None,
        );
        let apex = FiniteMdp::new(
            [cell("b")],
            [(ActionId::atom("stay@b"), cell("b"), Dist::point(cell("b")))],
            None,
        );
        let left = MdpMorphism::inclusion(apex.clone(), m1).unwrap();
        let right = MdpMorphism::inclusion(apex, m2).unwrap();
        let span = Span::new(left, right).unwrap();
        assert!(matches!(
            check_disjoint_recovery(&span),
            Err(PunctureError::PreconditionFailed(a)) if a == ActionId::atom("go@c")
        ));
    }

    #[test]
    fn disjoint_recovery_holds_with_outward_support() {
        let cell = |x: &str| StateId::atom(x);
        let m1 = FiniteMdp::new(
            [cell("a"), cell("b")],
            [
                (ActionId::atom("go@a"), cell("a"), Dist::point(cell("b"))),
                (ActionId::atom("stay@b"), cell("b"), Dist::point(cell("b"))),
            ],
            None,
        );
        let m2 = FiniteMdp::new(
            [cell("b"), cell("c")],
            [
                (ActionId::atom("stay@b"), cell("b"), Dist::point(cell("b"))),
                (ActionId::atom("stay@c"), cell("c"), Dist::point(cell("c"))),
            ],
            None,
        );
        let apex = FiniteMdp::new(
            [cell("b")],
            [(ActionId::atom("stay@b"), cell("b"), Dist::point(cell("b")))],
            None,
        );
        let left = MdpMorphism::inclusion(apex.clone(), m1).unwrap();
        let right = MdpMorphism::inclusion(apex, m2).unwrap();
        let span = Span::new(left, right).unwrap();
        assert!(check_disjoint_recovery(&span).unwrap());
    }

    #[test]
    fn recovery_is_trivial_when_second_component_equals_apex() {
        let m = two_state_free();
        let apex = m.clone();
        let span = Span::new(
            MdpMorphism::inclusion(apex.clone(), m.clone()).unwrap(),
            MdpMorphism::identity(apex),
        )
        .unwrap();
        assert!(check_disjoint_recovery(&span).unwrap());
    }
}
