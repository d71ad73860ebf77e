//! Seeded random instance generation for randomized checks.
//!
//! Everything here is deterministic in the seed: the command-line
//! randomized checks and the acceptance suite both draw from these
//! generators so that failures replay exactly.

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::composition::{Cospan, Span};
use crate::dist::Dist;
use crate::label::{ActionId, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::MdpMorphism;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random well-formed MDP with `1..=max_states` states and
/// `1..=max_actions` actions, each action anchored at a random state with
/// a random distribution over at most three targets.
pub fn random_mdp(
    rng: &mut impl Rng,
    max_states: usize,
    max_actions: usize,
    rewarded: bool,
) -> FiniteMdp {
    let n_states = rng.gen_range(1..=max_states.max(1));
    let n_actions = rng.gen_range(1..=max_actions.max(1));
    let states: Vec<StateId> = (0..n_states)
        .map(|i| StateId::atom(format!("s{i}")))
        .collect();
    let mut actions = Vec::new();
    let mut reward = BTreeMap::new();
    for i in 0..n_actions {
        let id = ActionId::atom(format!("a{i}"));
        let anchor = states[rng.gen_range(0..n_states)].clone();
        actions.push((id.clone(), anchor, random_dist(rng, &states)));
        reward.insert(id, (rng.gen_range(0..20) as f64) / 2.0);
    }
    FiniteMdp::new(states, actions, rewarded.then_some(reward))
}

/// A random distribution over at most three of the given states, with
/// masses normalized to 1.
pub fn random_dist(rng: &mut impl Rng, states: &[StateId]) -> Dist {
    let support_size = rng.gen_range(1..=3.min(states.len()));
    let mut chosen: Vec<usize> = (0..states.len()).collect();
    chosen.shuffle(rng);
    chosen.truncate(support_size);
    let weights: Vec<f64> = (0..support_size).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    Dist::from_pairs(
        chosen
            .into_iter()
            .zip(weights)
            .map(|(i, w)| (states[i].clone(), w / total)),
    )
    .expect("positive masses")
}

/// An isomorphism from `m` onto a copy with shuffled atom names, useful
/// as a nontrivial target that a factorization must reproduce.
pub fn random_renaming(rng: &mut impl Rng, m: &FiniteMdp, tag: &str) -> MdpMorphism {
    let mut state_names: Vec<usize> = (0..m.state_count()).collect();
    state_names.shuffle(rng);
    let mut action_names: Vec<usize> = (0..m.action_count()).collect();
    action_names.shuffle(rng);
    let state_map: BTreeMap<StateId, StateId> = m
        .states()
        .zip(&state_names)
        .map(|(s, i)| (s.clone(), StateId::atom(format!("{tag}s{i}"))))
        .collect();
    let action_map: BTreeMap<ActionId, ActionId> = m
        .actions()
        .zip(&action_names)
        .map(|(a, i)| (a.clone(), ActionId::atom(format!("{tag}a{i}"))))
        .collect();
    let renamed = m.relabel(|s| state_map[s].clone(), |a| action_map[a].clone());
    let mut morphism = MdpMorphism::new(m.clone(), renamed, state_map, action_map);
    if m.has_reward() {
        morphism = morphism.preserving_reward();
    }
    morphism
}

/// A random morphism into `apex`: states map onto apex states, and each
/// action refines an apex action by splitting its target masses across
/// the preimage fibers, so the pushforward square holds by construction.
pub fn random_morphism_into(
    rng: &mut impl Rng,
    apex: &FiniteMdp,
    max_states: usize,
    max_actions: usize,
    tag: &str,
) -> MdpMorphism {
    let n_states = rng.gen_range(1..=max_states.max(1));
    let states: Vec<StateId> = (0..n_states)
        .map(|i| StateId::atom(format!("{tag}s{i}")))
        .collect();
    let apex_states: Vec<&StateId> = apex.states().collect();
    let mut state_map: BTreeMap<StateId, StateId> = BTreeMap::new();
    for s in &states {
        state_map.insert(s.clone(), apex_states[rng.gen_range(0..apex_states.len())].clone());
    }
    let mut fibers: BTreeMap<&StateId, Vec<&StateId>> = BTreeMap::new();
    for (s, t) in &state_map {
        fibers.entry(t).or_default().push(s);
    }

    let apex_actions: Vec<&ActionId> = apex.actions().collect();
    let mut actions = Vec::new();
    let mut action_map: BTreeMap<ActionId, ActionId> = BTreeMap::new();
    let n_actions = rng.gen_range(1..=max_actions.max(1));
    let mut made = 0;
    let mut attempts = 0;
    while made < n_actions && attempts < 10 * n_actions {
        attempts += 1;
        let b = apex_actions[rng.gen_range(0..apex_actions.len())];
        let anchor_fiber = match fibers.get(apex.anchor(b).expect("validated apex")) {
            Some(f) => f,
            None => continue,
        };
        let target_dist = apex.transition(b).expect("validated apex");
        if target_dist.states().any(|u| !fibers.contains_key(u)) {
            continue;
        }
        let anchor = anchor_fiber[rng.gen_range(0..anchor_fiber.len())].clone();
        let mut pairs = Vec::new();
        for (u, p) in target_dist.iter() {
            let fiber = &fibers[u];
            let weights: Vec<f64> = (0..fiber.len()).map(|_| rng.gen_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            for (s, w) in fiber.iter().zip(weights) {
                pairs.push(((*s).clone(), p * w / total));
            }
        }
        let id = ActionId::atom(format!("{tag}a{made}"));
        action_map.insert(id.clone(), b.clone());
        actions.push((
            id,
            anchor,
            Dist::from_pairs(pairs).expect("positive masses"),
        ));
        made += 1;
    }
    let source = FiniteMdp::new(states, actions, None);
    MdpMorphism::new(source, apex.clone(), state_map, action_map)
}

/// A random cospan over a random apex, with both legs built by
/// [`random_morphism_into`].
pub fn random_cospan(
    rng: &mut impl Rng,
    apex_states: usize,
    apex_actions: usize,
    leg_states: usize,
    leg_actions: usize,
) -> Cospan {
    let apex = random_mdp(rng, apex_states, apex_actions, false);
    let left = random_morphism_into(rng, &apex, leg_states, leg_actions, "l");
    let right = random_morphism_into(rng, &apex, leg_states, leg_actions, "r");
    Cospan::new(left, right).expect("legs are valid by construction")
}

/// Extends an MDP with fresh states and actions; existing states and
/// actions are untouched, so the original includes into the result. When
/// `outward` is set, every new action keeps at least a third of its mass
/// on the new states.
fn extend(
    rng: &mut impl Rng,
    base: &FiniteMdp,
    extra_states: usize,
    extra_actions: usize,
    tag: &str,
    outward: bool,
) -> FiniteMdp {
    let new_states: Vec<StateId> = (0..extra_states)
        .map(|i| StateId::atom(format!("{tag}e{i}")))
        .collect();
    let all_states: Vec<StateId> = base.states().cloned().chain(new_states.clone()).collect();
    let mut actions: Vec<(ActionId, StateId, Dist)> = base
        .actions()
        .map(|a| {
            (
                a.clone(),
                base.anchor(a).unwrap().clone(),
                base.transition(a).unwrap().clone(),
            )
        })
        .collect();
    let mut reward: BTreeMap<ActionId, f64> = base.reward_map().cloned().unwrap_or_default();
    for i in 0..extra_actions {
        let id = ActionId::atom(format!("{tag}x{i}"));
        let anchor = all_states[rng.gen_range(0..all_states.len())].clone();
        let dist = if outward && !new_states.is_empty() {
            let inside = random_dist(rng, &all_states);
            let out = new_states[rng.gen_range(0..new_states.len())].clone();
            Dist::from_pairs(
                inside
                    .iter()
                    .map(|(s, p)| (s.clone(), p * (2.0 / 3.0)))
                    .chain([(out, 1.0 / 3.0)]),
            )
            .expect("positive masses")
        } else {
            random_dist(rng, &all_states)
        };
        reward.insert(id.clone(), (rng.gen_range(0..20) as f64) / 2.0);
        actions.push((id, anchor, dist));
    }
    FiniteMdp::new(
        all_states,
        actions,
        base.has_reward().then_some(reward),
    )
}

/// A random span whose legs are inclusions: each side extends the shared
/// apex with fresh states and actions. With `outward_support` the second
/// side's extra actions all keep mass outside the shared part.
pub fn random_injective_span(
    rng: &mut impl Rng,
    apex_states: usize,
    apex_actions: usize,
    extra_states: usize,
    extra_actions: usize,
    outward_support: bool,
) -> Span {
    let apex = random_mdp(rng, apex_states, apex_actions, false);
    let extra_left = rng.gen_range(0..=extra_states);
    let extra_right = if outward_support {
        rng.gen_range(1..=extra_states.max(1))
    } else {
        rng.gen_range(0..=extra_states)
    };
    let left_actions = rng.gen_range(0..=extra_actions);
    let right_actions = rng.gen_range(0..=extra_actions);
    let m1 = extend(rng, &apex, extra_left, left_actions, "L", false);
    let m2 = extend(rng, &apex, extra_right, right_actions, "R", outward_support);
    let left = MdpMorphism::inclusion(apex.clone(), m1).expect("extension includes the base");
    let right = MdpMorphism::inclusion(apex, m2).expect("extension includes the base");
    Span::new(left, right).expect("inclusions are valid")
}

/// A random subset of the states of an MDP.
pub fn random_state_subset(rng: &mut impl Rng, m: &FiniteMdp) -> BTreeSet<StateId> {
    m.states().filter(|_| rng.gen_bool(0.5)).cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_mdps_are_well_formed() {
        let mut rng = seeded(7);
        for _ in 0..50 {
            let m = random_mdp(&mut rng, 6, 12, true);
            assert!(m.validate().is_empty(), "{}", m.validate());
        }
    }

    #[test]
    fn random_morphisms_into_an_apex_are_valid() {
        let mut rng = seeded(11);
        for _ in 0..30 {
            let apex = random_mdp(&mut rng, 3, 4, false);
            let leg = random_morphism_into(&mut rng, &apex, 4, 6, "n");
            assert!(leg.check().is_empty(), "{}", leg.check());
        }
    }

    #[test]
    fn random_spans_have_subprocess_legs() {
        let mut rng = seeded(13);
        for _ in 0..30 {
            let span = random_injective_span(&mut rng, 3, 4, 3, 4, false);
            assert!(span.left().is_subprocess());
            assert!(span.right().is_subprocess());
        }
    }

    #[test]
    fn renaming_is_a_valid_isomorphism() {
        let mut rng = seeded(17);
        for _ in 0..20 {
            let m = random_mdp(&mut rng, 5, 8, true);
            let renaming = random_renaming(&mut rng, &m, "z");
            assert!(renaming.check().is_empty());
            assert!(renaming.is_subprocess());
            assert_eq!(renaming.target().state_count(), m.state_count());
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let a = random_mdp(&mut seeded(42), 6, 12, true);
        let b = random_mdp(&mut seeded(42), 6, 12, true);
        assert_eq!(a, b);
    }
}
