//! Isomorphism testing between finite MDPs.
//!
//! Used to assert that two constructions produce "the same" MDP up to
//! relabeling: a bijective morphism whose maps respect anchoring and
//! transitions, and rewards when both sides carry them.
//!
//! The search is exact. Structure-only color refinement (no masses, so a
//! color mismatch can never wrongly separate isomorphic MDPs) narrows the
//! state candidates, then backtracking assigns a state bijection and a
//! per-state action matching verifies distributions within tolerance. A
//! node budget bounds the work; exhausting it is an error, never a wrong
//! answer.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::dist::DEFAULT_EPS;
use crate::label::{ActionId, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::MdpMorphism;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IsoError {
    #[error("isomorphism search budget of {0} nodes exceeded")]
    SizeExceeded(usize),
}

#[derive(Debug, Clone, Copy)]
pub struct IsoOptions {
    /// Bound on backtracking nodes. The default comfortably covers
    /// brute-force search on MDPs with a dozen states and refinement-guided
    /// search on larger desk-scale instances.
    pub node_budget: usize,
    pub eps: f64,
}

impl Default for IsoOptions {
    fn default() -> Self {
        IsoOptions {
            node_budget: 2_000_000,
            eps: DEFAULT_EPS,
        }
    }
}

/// Searches for an isomorphism witnessing that the two MDPs are equal up
/// to relabeling. Returns the witnessing morphism, `None` if provably no
/// isomorphism exists, or an error when the search budget is exhausted.
pub fn find_isomorphism(
    m1: &FiniteMdp,
    m2: &FiniteMdp,
) -> Result<Option<MdpMorphism>, IsoError> {
    find_isomorphism_with(m1, m2, IsoOptions::default())
}

pub fn are_isomorphic(m1: &FiniteMdp, m2: &FiniteMdp) -> Result<bool, IsoError> {
    Ok(find_isomorphism(m1, m2)?.is_some())
}

pub fn find_isomorphism_with(
    m1: &FiniteMdp,
    m2: &FiniteMdp,
    opts: IsoOptions,
) -> Result<Option<MdpMorphism>, IsoError> {
    if m1.state_count() != m2.state_count() || m1.action_count() != m2.action_count() {
        return Ok(None);
    }
    let compare_rewards = m1.has_reward() && m2.has_reward();
    // Label-identical fast path.
    if m1 == m2 {
        return Ok(Some(MdpMorphism::identity(m1.clone())));
    }

    let colors1 = refine_colors(m1);
    let colors2 = refine_colors(m2);
    let mut search = Search {
        m1,
        m2,
        colors1: &colors1,
        colors2: &colors2,
        compare_rewards,
        eps: opts.eps,
        budget: opts.node_budget,
        nodes: 0,
        assignment: BTreeMap::new(),
        used: BTreeSet::new(),
    };
    let order = assignment_order(m1, &colors1);
    match search.assign(0, &order) {
        Ok(Some(state_map)) => {
            let action_map = match match_all_actions(m1, m2, &state_map, compare_rewards, opts.eps)
            {
                Some(am) => am,
                None => unreachable!("assign only returns fully matched assignments"),
            };
            let mut iso = MdpMorphism::new(
                Arc::new(m1.clone()),
                Arc::new(m2.clone()),
                state_map,
                action_map,
            );
            if compare_rewards {
                iso = iso.preserving_reward();
            }
            Ok(Some(iso))
        }
        Ok(None) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Orders the states for assignment: start in the rarest color class and
/// grow through transition adjacency, so each new assignment is checkable
/// against already-assigned neighbors.
fn assignment_order<'a>(m: &'a FiniteMdp, colors: &BTreeMap<StateId, u64>) -> Vec<&'a StateId> {
    let mut class_size: BTreeMap<u64, usize> = BTreeMap::new();
    for c in colors.values() {
        *class_size.entry(*c).or_insert(0) += 1;
    }
    let mut neighbors: BTreeMap<&StateId, BTreeSet<&StateId>> = BTreeMap::new();
    for a in m.actions() {
        let anchor = m.anchor(a).expect("anchored");
        if let Some(d) = m.transition(a) {
            for t in d.states() {
                neighbors.entry(anchor).or_default().insert(t);
                neighbors.entry(t).or_default().insert(anchor);
            }
        }
    }
    let mut order: Vec<&StateId> = Vec::with_capacity(m.state_count());
    let mut placed: BTreeSet<&StateId> = BTreeSet::new();
    while placed.len() < m.state_count() {
        let next = m
            .states()
            .filter(|s| !placed.contains(s))
            .min_by_key(|s| {
                let adjacency = neighbors
                    .get(*s)
                    .map(|ns| ns.iter().filter(|n| placed.contains(*n)).count())
                    .unwrap_or(0);
                // Prefer states touching the assigned region, then rare
                // colors.
                (usize::MAX - adjacency, class_size[&colors[*s]], (*s).clone())
            })
            .expect("states remain");
        placed.insert(next);
        order.push(next);
    }
    order
}

/// Structure-only color refinement: colors depend on action counts,
/// distinct-successor counts and the colors of transition targets, never
/// on masses or rewards, so they are invariant under any isomorphism.
fn refine_colors(m: &FiniteMdp) -> BTreeMap<StateId, u64> {
    let mut state_color: BTreeMap<StateId, u64> = m
        .states()
        .map(|s| {
            let distinct_out: BTreeSet<&StateId> = m
                .actions_at(s)
                .iter()
                .flat_map(|a| m.transition(a).map(|d| d.states()).into_iter().flatten())
                .filter(|t| *t != s)
                .collect();
            let mut h = DefaultHasher::new();
            (m.actions_at(s).len() as u64).hash(&mut h);
            (distinct_out.len() as u64).hash(&mut h);
            (s.clone(), h.finish())
        })
        .collect();
    let rounds = m.state_count().min(8);
    for _ in 0..rounds {
        let mut action_color: BTreeMap<ActionId, u64> = BTreeMap::new();
        for a in m.actions() {
            let mut targets: Vec<u64> = m
                .transition(a)
                .map(|d| d.states().map(|s| state_color[s]).collect())
                .unwrap_or_default();
            targets.sort_unstable();
            let mut h = DefaultHasher::new();
            state_color[m.anchor(a).expect("anchored")].hash(&mut h);
            targets.hash(&mut h);
            action_color.insert(a.clone(), h.finish());
        }
        let mut incoming: BTreeMap<StateId, Vec<u64>> = BTreeMap::new();
        for a in m.actions() {
            if let Some(d) = m.transition(a) {
                for s in d.states() {
                    incoming.entry(s.clone()).or_default().push(action_color[a]);
                }
            }
        }
        let mut next = BTreeMap::new();
        for s in m.states() {
            let mut own: Vec<u64> = m.actions_at(s).iter().map(|a| action_color[a]).collect();
            own.sort_unstable();
            let mut inc = incoming.remove(s).unwrap_or_default();
            inc.sort_unstable();
            let mut h = DefaultHasher::new();
            state_color[s].hash(&mut h);
            own.hash(&mut h);
            inc.hash(&mut h);
            next.insert(s.clone(), h.finish());
        }
        if partition_of(&next) == partition_of(&state_color) {
            break;
        }
        state_color = next;
    }
    state_color
}

fn partition_of(colors: &BTreeMap<StateId, u64>) -> Vec<Vec<&StateId>> {
    let mut classes: BTreeMap<u64, Vec<&StateId>> = BTreeMap::new();
    for (s, c) in colors {
        classes.entry(*c).or_default().push(s);
    }
    classes.into_values().collect()
}

struct Search<'a> {
    m1: &'a FiniteMdp,
    m2: &'a FiniteMdp,
    colors1: &'a BTreeMap<StateId, u64>,
    colors2: &'a BTreeMap<StateId, u64>,
    compare_rewards: bool,
    eps: f64,
    budget: usize,
    nodes: usize,
    assignment: BTreeMap<StateId, StateId>,
    used: BTreeSet<StateId>,
}

impl Search<'_> {
    fn assign(
        &mut self,
        depth: usize,
        order: &[&StateId],
    ) -> Result<Option<BTreeMap<StateId, StateId>>, IsoError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(IsoError::SizeExceeded(self.budget));
        }
        if depth == order.len() {
            if match_all_actions(self.m1, self.m2, &self.assignment, self.compare_rewards, self.eps)
                .is_some()
            {
                return Ok(Some(self.assignment.clone()));
            }
            return Ok(None);
        }
        let s1 = order[depth];
        let want = self.colors1[s1];
        let candidates: Vec<StateId> = self
            .m2
            .states()
            .filter(|s2| {
                !self.used.contains(*s2)
                    && self.colors2[*s2] == want
                    && self.m2.actions_at(s2).len() == self.m1.actions_at(s1).len()
            })
            .cloned()
            .collect();
        for s2 in candidates {
            self.assignment.insert(s1.clone(), s2.clone());
            self.used.insert(s2.clone());
            if self.consistent_so_far() {
                if let Some(found) = self.assign(depth + 1, order)? {
                    return Ok(Some(found));
                }
            }
            self.assignment.remove(s1);
            self.used.remove(&s2);
        }
        Ok(None)
    }

    /// Forward checking: every action whose anchor and full support are
    /// already assigned must have at least one compatible image action.
    /// Existence per action is weaker than a full matching but kills
    /// inconsistent branches as soon as the relevant states are placed.
    fn consistent_so_far(&self) -> bool {
        for (u, fu) in &self.assignment {
            for a in self.m1.actions_at(u) {
                let Some(d) = self.m1.transition(a) else {
                    continue;
                };
                if !d.states().all(|t| self.assignment.contains_key(t)) {
                    continue;
                }
                let pushed = d
                    .pushforward(&self.assignment)
                    .expect("support is assigned");
                let feasible = self.m2.actions_at(fu).iter().any(|b| {
                    let dist_ok = self
                        .m2
                        .transition(b)
                        .is_some_and(|bd| bd.approx_eq(&pushed, self.eps));
                    let reward_ok = !self.compare_rewards
                        || matches!(
                            (self.m1.reward(a), self.m2.reward(b)),
                            (Some(r1), Some(r2)) if (r1 - r2).abs() <= self.eps
                        );
                    dist_ok && reward_ok
                });
                if !feasible {
                    return false;
                }
            }
        }
        true
    }
}

/// Given a full state bijection, tries to match each source action to a
/// distinct target action over the image anchor with an equal pushforward
/// (and equal reward when requested). Returns the full action bijection.
fn match_all_actions(
    m1: &FiniteMdp,
    m2: &FiniteMdp,
    state_map: &BTreeMap<StateId, StateId>,
    compare_rewards: bool,
    eps: f64,
) -> Option<BTreeMap<ActionId, ActionId>> {
    let mut action_map = BTreeMap::new();
    for s1 in m1.states() {
        let s2 = state_map.get(s1)?;
        let own = m1.actions_at(s1);
        let theirs = m2.actions_at(s2);
        if own.len() != theirs.len() {
            return None;
        }
        let matched = match_state_actions(m1, m2, own, theirs, state_map, compare_rewards, eps)?;
        action_map.extend(matched);
    }
    Some(action_map)
}

fn match_state_actions(
    m1: &FiniteMdp,
    m2: &FiniteMdp,
    own: &[ActionId],
    theirs: &[ActionId],
    state_map: &BTreeMap<StateId, StateId>,
    compare_rewards: bool,
    eps: f64,
) -> Option<Vec<(ActionId, ActionId)>> {
    fn go(
        idx: usize,
        own: &[ActionId],
        theirs: &[ActionId],
        taken: &mut Vec<bool>,
        acc: &mut Vec<(ActionId, ActionId)>,
        m1: &FiniteMdp,
        m2: &FiniteMdp,
        state_map: &BTreeMap<StateId, StateId>,
        compare_rewards: bool,
        eps: f64,
    ) -> bool {
        if idx == own.len() {
            return true;
        }
        let a = &own[idx];
        let pushed = match m1.transition(a).and_then(|d| d.pushforward(state_map).ok()) {
            Some(p) => p,
            None => return false,
        };
        for (j, b) in theirs.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let dist_ok = m2.transition(b).is_some_and(|d| d.approx_eq(&pushed, eps));
            let reward_ok = !compare_rewards
                || matches!(
                    (m1.reward(a), m2.reward(b)),
                    (Some(r1), Some(r2)) if (r1 - r2).abs() <= eps
                );
            if dist_ok && reward_ok {
                taken[j] = true;
                acc.push((a.clone(), b.clone()));
                if go(idx + 1, own, theirs, taken, acc, m1, m2, state_map, compare_rewards, eps) {
                    return true;
                }
                acc.pop();
                taken[j] = false;
            }
        }
        false
    }
    let mut taken = vec![false; theirs.len()];
    let mut acc = Vec::new();
    if go(
        0, own, theirs, &mut taken, &mut acc, m1, m2, state_map, compare_rewards, eps,
    ) {
        Some(acc)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Dist;

    fn chain(p: f64) -> FiniteMdp {
        let s = StateId::atom("s");
        let t = StateId::atom("t");
        FiniteMdp::new(
            [s.clone(), t.clone()],
            [(
                ActionId::atom("go"),
                s.clone(),
                Dist::from_pairs([(t.clone(), p), (s, 1.0 - p)]).unwrap(),
            )],
            None,
        )
    }

    #[test]
    fn identical_mdps_give_identity() {
        let m = chain(0.5);
        let iso = find_isomorphism(&m, &m).unwrap().unwrap();
        assert!(iso.is_valid());
        for s in m.states() {
            assert_eq!(iso.apply_state(s), Some(s));
        }
    }

    #[test]
    fn renamed_copy_is_found() {
        let m = chain(0.5);
        let renamed = m.relabel(
            |s| StateId::atom(format!("z_{s}")),
            |a| ActionId::atom(format!("z_{a}")),
        );
        let iso = find_isomorphism(&m, &renamed).unwrap().unwrap();
        assert!(iso.is_valid());
        assert!(iso.is_subprocess());
        assert_eq!(
            iso.apply_state(&StateId::atom("s")),
            Some(&StateId::atom("z_s"))
        );
    }

    #[test]
    fn perturbed_probability_is_not_isomorphic() {
        assert!(find_isomorphism(&chain(0.5), &chain(0.6)).unwrap().is_none());
    }

    #[test]
    fn symmetry_is_respected() {
        let m = chain(0.3);
        let renamed = m.relabel(
            |s| StateId::atom(format!("w{s}")),
            |a| ActionId::atom(format!("w{a}")),
        );
        assert!(are_isomorphic(&m, &renamed).unwrap());
        assert!(are_isomorphic(&renamed, &m).unwrap());
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let m = chain(0.5);
        let renamed = m.relabel(
            |s| StateId::atom(format!("z_{s}")),
            |a| ActionId::atom(format!("z_{a}")),
        );
        let result = find_isomorphism_with(
            &m,
            &renamed,
            IsoOptions {
                node_budget: 1,
                eps: DEFAULT_EPS,
            },
        );
        assert_eq!(result.unwrap_err(), IsoError::SizeExceeded(1));
    }
}
