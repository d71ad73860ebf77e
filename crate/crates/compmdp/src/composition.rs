//! Fiber products and pushout gluing.
//!
//! A cospan (two morphisms into a shared apex) has a fiber product: the
//! categorical intersection, whose transition masses come from the joint
//! density ν(s₁,s₂) = μ₁(s₁)·μ₂(s₂)/μ₃(f₁(s₁)), zero where the apex mass
//! vanishes. With the constant MDP as apex this is the independent
//! cartesian product. The product is universal among cones whose legs form
//! a conditionally independent pair.
//!
//! A span (two morphisms out of a shared apex) has a pushout: the gluing
//! of the two targets along the apex, componentwise on states, actions and
//! transitions. Gluing subprocesses yields subprocesses.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::dist::{Dist, DEFAULT_EPS};
use crate::label::{ActionId, Label, StateId};
use crate::mdp::FiniteMdp;
use crate::morphism::{MdpMorphism, MorphismError};

#[derive(Debug, Error)]
pub enum CompositionError {
    #[error("the two legs do not share an endpoint")]
    MismatchedApex,
    #[error("leg morphism is invalid: {0}")]
    InvalidLeg(String),
    #[error("diagram does not commute: {0}")]
    NonCommuting(String),
    #[error("cone legs are not conditionally independent")]
    NotIndependent,
    #[error("reward clash on glued action {0}")]
    RewardClash(ActionId),
    #[error(transparent)]
    Morphism(#[from] MorphismError),
}

/// Two morphisms into a shared apex.
#[derive(Debug, Clone)]
pub struct Cospan {
    left: MdpMorphism,
    right: MdpMorphism,
}

impl Cospan {
    pub fn new(left: MdpMorphism, right: MdpMorphism) -> Result<Self, CompositionError> {
        if left.target() != right.target() {
            return Err(CompositionError::MismatchedApex);
        }
        for (name, leg) in [("left", &left), ("right", &right)] {
            let report = leg.check();
            if !report.is_empty() {
                return Err(CompositionError::InvalidLeg(format!("{name}: {report}")));
            }
        }
        Ok(Cospan { left, right })
    }

    pub fn left(&self) -> &MdpMorphism {
        &self.left
    }

    pub fn right(&self) -> &MdpMorphism {
        &self.right
    }

    pub fn apex(&self) -> &FiniteMdp {
        self.left.target()
    }

    /// Whether the product should carry a reward pulled back from the apex.
    fn in_reward_category(&self) -> bool {
        self.left.preserves_reward() && self.right.preserves_reward() && self.apex().has_reward()
    }
}

/// Two morphisms out of a shared apex.
#[derive(Debug, Clone)]
pub struct Span {
    left: MdpMorphism,
    right: MdpMorphism,
}

impl Span {
    pub fn new(left: MdpMorphism, right: MdpMorphism) -> Result<Self, CompositionError> {
        if left.source() != right.source() {
            return Err(CompositionError::MismatchedApex);
        }
        for (name, leg) in [("left", &left), ("right", &right)] {
            let report = leg.check();
            if !report.is_empty() {
                return Err(CompositionError::InvalidLeg(format!("{name}: {report}")));
            }
        }
        Ok(Span { left, right })
    }

    pub fn left(&self) -> &MdpMorphism {
        &self.left
    }

    pub fn right(&self) -> &MdpMorphism {
        &self.right
    }

    pub fn apex(&self) -> &FiniteMdp {
        self.left.source()
    }
}

#[derive(Debug, Clone)]
pub struct FiberProductResult {
    pub product: FiniteMdp,
    pub proj_left: MdpMorphism,
    pub proj_right: MdpMorphism,
}

#[derive(Debug, Clone)]
pub struct PushoutResult {
    pub glued: FiniteMdp,
    pub incl_left: MdpMorphism,
    pub incl_right: MdpMorphism,
}

/// The fiber product of a cospan of finite MDPs. States and actions are
/// the pairs agreeing over the apex, with `Pair` labels; each product
/// action's distribution has density ν as described in the module docs.
/// When both legs preserve rewards, the product reward is the apex reward
/// pulled back along either action projection.
pub fn fiber_product(c: &Cospan) -> FiberProductResult {
    let m1 = c.left.source();
    let m2 = c.right.source();
    let f1 = c.left.state_map();
    let f2 = c.right.state_map();
    let g1 = c.left.action_map();
    let g2 = c.right.action_map();

    let mut states = Vec::new();
    let mut proj_s: BTreeMap<StateId, (StateId, StateId)> = BTreeMap::new();
    for s1 in m1.states() {
        for s2 in m2.states() {
            if f1[s1] == f2[s2] {
                let p = s1.pair(s2);
                proj_s.insert(p.clone(), (s1.clone(), s2.clone()));
                states.push(p);
            }
        }
    }

    let with_reward = c.in_reward_category();
    let apex_reward = c.apex().reward_map();
    let mut actions = Vec::new();
    let mut reward: BTreeMap<ActionId, f64> = BTreeMap::new();
    let mut proj_a: BTreeMap<ActionId, (ActionId, ActionId)> = BTreeMap::new();
    for a1 in m1.actions() {
        for a2 in m2.actions() {
            if g1[a1] != g2[a2] {
                continue;
            }
            let pa = a1.pair(a2);
            let anchor = m1.anchor(a1).unwrap().pair(m2.anchor(a2).unwrap());
            let dist = joint_density(
                m1.transition(a1).unwrap(),
                m2.transition(a2).unwrap(),
                f1,
                f2,
            );
            if with_reward {
                let r3 = apex_reward
                    .and_then(|r| r.get(&g1[a1]))
                    .copied()
                    .unwrap_or(0.0);
                reward.insert(pa.clone(), r3);
            }
            proj_a.insert(pa.clone(), (a1.clone(), a2.clone()));
            actions.push((pa, anchor, dist));
        }
    }

    let product = Arc::new(FiniteMdp::new(
        states,
        actions,
        with_reward.then_some(reward),
    ));
    let mut proj_left = MdpMorphism::new(
        Arc::clone(&product),
        c.left.source_arc(),
        proj_s
            .iter()
            .map(|(p, (s1, _))| (p.clone(), s1.clone()))
            .collect(),
        proj_a
            .iter()
            .map(|(p, (a1, _))| (p.clone(), a1.clone()))
            .collect(),
    );
    let mut proj_right = MdpMorphism::new(
        Arc::clone(&product),
        c.right.source_arc(),
        proj_s
            .iter()
            .map(|(p, (_, s2))| (p.clone(), s2.clone()))
            .collect(),
        proj_a
            .iter()
            .map(|(p, (_, a2))| (p.clone(), a2.clone()))
            .collect(),
    );
    if with_reward {
        proj_left = proj_left.preserving_reward();
        proj_right = proj_right.preserving_reward();
    }
    FiberProductResult {
        product: (*product).clone(),
        proj_left,
        proj_right,
    }
}

/// The joint density on pair states: ν(t₁,t₂) = μ₁(t₁)·μ₂(t₂)/μ₃(f₁(t₁))
/// where μ₃ is the common pushforward of the factors into the apex, and 0
/// where μ₃ vanishes. No renormalization is applied.
fn joint_density(
    mu1: &Dist,
    mu2: &Dist,
    f1: &BTreeMap<StateId, StateId>,
    f2: &BTreeMap<StateId, StateId>,
) -> Dist {
    let mu3 = mu1.pushforward(f1).expect("validated cospan leg");
    let mut pairs = Vec::new();
    for (t1, p1) in mu1.iter() {
        for (t2, p2) in mu2.iter() {
            if f1[t1] != f2[t2] {
                continue;
            }
            let denom = mu3.mass(&f1[t1]);
            if denom > 0.0 {
                pairs.push((t1.pair(t2), p1 * p2 / denom));
            }
        }
    }
    Dist::from_pairs(pairs).expect("products of nonnegative masses")
}

/// The independent product of two MDPs: the fiber product over the
/// constant MDP. Rewards are dropped; attach a product reward afterwards
/// if one is needed.
pub fn cartesian_product(m1: &FiniteMdp, m2: &FiniteMdp) -> FiberProductResult {
    let c = Cospan::new(
        MdpMorphism::to_point(m1.clone()),
        MdpMorphism::to_point(m2.clone()),
    )
    .expect("maps to the terminal object always form a cospan");
    fiber_product(&c)
}

/// Checks that both projections of a fiber product push each product
/// distribution back onto the factor distributions.
pub fn check_marginals(r: &FiberProductResult) -> bool {
    check_marginals_with_eps(r, DEFAULT_EPS)
}

pub fn check_marginals_with_eps(r: &FiberProductResult, eps: f64) -> bool {
    let recovers = |proj: &MdpMorphism, a: &ActionId, d: &Dist| -> bool {
        match d.pushforward(proj.state_map()) {
            Ok(pushed) => proj.apply_action(a).is_some_and(|fa| {
                proj.target()
                    .transition(fa)
                    .is_some_and(|mu| pushed.approx_eq(mu, eps))
            }),
            Err(_) => false,
        }
    };
    r.product.actions().all(|a| {
        let d = r.product.transition(a).unwrap();
        recovers(&r.proj_left, a, d) && recovers(&r.proj_right, a, d)
    })
}

/// Tests whether a cone over the cospan is conditionally independent: for
/// every cone action, the joint mass on each pair of singleton sets equals
/// the density ν computed from the leg images. Singletons generate the
/// power-set σ-algebra, so this decides the finite case.
pub fn is_conditionally_independent(
    leg1: &MdpMorphism,
    leg2: &MdpMorphism,
    c: &Cospan,
) -> Result<bool, CompositionError> {
    is_conditionally_independent_with_eps(leg1, leg2, c, DEFAULT_EPS)
}

pub fn is_conditionally_independent_with_eps(
    leg1: &MdpMorphism,
    leg2: &MdpMorphism,
    c: &Cospan,
    eps: f64,
) -> Result<bool, CompositionError> {
    check_cone_shape(leg1, leg2, c)?;
    let n = leg1.source();
    let m1 = c.left.source();
    let m2 = c.right.source();
    for a in n.actions() {
        let a1 = &leg1.action_map()[a];
        let a2 = &leg2.action_map()[a];
        let nu = joint_density(
            m1.transition(a1).unwrap(),
            m2.transition(a2).unwrap(),
            c.left.state_map(),
            c.right.state_map(),
        );
        // Joint mass of the cone action on each pair (α₁(x), α₂(x)); the
        // pairing map may identify states, so masses accumulate.
        let joint = Dist::from_pairs(
            n.transition(a)
                .unwrap()
                .iter()
                .map(|(x, p)| (leg1.state_map()[x].pair(&leg2.state_map()[x]), p)),
        )
        .expect("nonnegative masses");
        if !joint.approx_eq(&nu, eps) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn check_cone_shape(
    leg1: &MdpMorphism,
    leg2: &MdpMorphism,
    c: &Cospan,
) -> Result<(), CompositionError> {
    if leg1.source() != leg2.source() {
        return Err(CompositionError::MismatchedApex);
    }
    if leg1.target() != c.left.source() || leg2.target() != c.right.source() {
        return Err(CompositionError::MismatchedApex);
    }
    for (name, leg) in [("left", leg1), ("right", leg2)] {
        let report = leg.check();
        if !report.is_empty() {
            return Err(CompositionError::InvalidLeg(format!("{name}: {report}")));
        }
    }
    let via_left = leg1.then(c.left())?;
    let via_right = leg2.then(c.right())?;
    if via_left.state_map() != via_right.state_map()
        || via_left.action_map() != via_right.action_map()
    {
        return Err(CompositionError::NonCommuting(
            "cone square over the apex".into(),
        ));
    }
    Ok(())
}

/// The mediating morphism from a conditionally independent cone into the
/// fiber product: states and actions map to the pair of their leg images.
/// Composing with either projection recovers the corresponding leg, and
/// the pair form makes the mediator unique.
pub fn fiber_mediator(
    leg1: &MdpMorphism,
    leg2: &MdpMorphism,
    c: &Cospan,
    r: &FiberProductResult,
) -> Result<MdpMorphism, CompositionError> {
    if !is_conditionally_independent(leg1, leg2, c)? {
        return Err(CompositionError::NotIndependent);
    }
    let state_map = leg1
        .state_map()
        .iter()
        .map(|(x, s1)| (x.clone(), s1.pair(&leg2.state_map()[x])))
        .collect();
    let action_map = leg1
        .action_map()
        .iter()
        .map(|(x, a1)| (x.clone(), a1.pair(&leg2.action_map()[x])))
        .collect();
    Ok(MdpMorphism::new(
        leg1.source_arc(),
        r.product.clone(),
        state_map,
        action_map,
    ))
}

/// Tags for elements of the two legs of a span, used while building the
/// identification classes of a pushout.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Side<T> {
    L(T),
    R(T),
}

/// Union-find over tagged elements; classes are the connected components
/// generated by identifying the two images of each apex element.
struct Classes<T: Ord + Clone> {
    parent: BTreeMap<Side<T>, Side<T>>,
}

impl<T: Ord + Clone> Classes<T> {
    fn new(elems: impl IntoIterator<Item = Side<T>>) -> Self {
        Classes {
            parent: elems.into_iter().map(|e| (e.clone(), e)).collect(),
        }
    }

    fn find(&mut self, x: &Side<T>) -> Side<T> {
        let p = self.parent[x].clone();
        if p == *x {
            return p;
        }
        let root = self.find(&p);
        self.parent.insert(x.clone(), root.clone());
        root
    }

    fn union(&mut self, a: &Side<T>, b: &Side<T>) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent.insert(ra, rb);
        }
    }

    fn groups(&mut self) -> Vec<Vec<Side<T>>> {
        let keys: Vec<Side<T>> = self.parent.keys().cloned().collect();
        let mut by_root: BTreeMap<Side<T>, Vec<Side<T>>> = BTreeMap::new();
        for k in keys {
            let root = self.find(&k);
            by_root.entry(root).or_default().push(k);
        }
        by_root.into_values().collect()
    }
}

/// Deterministic label for an identification class: untouched elements
/// keep their side as a `Left`/`Right` wrapper; glued classes are tagged
/// `Glued` with their smallest left-side member (every glued class has
/// one, since each identification pairs a left and a right element).
fn class_label(members: &[Side<Label>]) -> Label {
    if members.len() == 1 {
        return match &members[0] {
            Side::L(l) => Label::left(l.clone()),
            Side::R(l) => Label::right(l.clone()),
        };
    }
    let min_left = members
        .iter()
        .filter_map(|m| match m {
            Side::L(l) => Some(l.clone()),
            Side::R(_) => None,
        })
        .min();
    match min_left {
        Some(l) => Label::glued(l),
        None => unreachable!("glued class without a left-side member"),
    }
}

/// The pushout of a span: the gluing of the two target MDPs along the
/// apex. Transitions on unglued states restrict from their side; on the
/// overlap the two candidate definitions agree for any valid span, so the
/// canonical representative is used. Rewards are glued when both targets
/// carry them, erroring on a clash.
pub fn pushout(s: &Span) -> Result<PushoutResult, CompositionError> {
    pushout_with_eps(s, DEFAULT_EPS)
}

pub fn pushout_with_eps(s: &Span, eps: f64) -> Result<PushoutResult, CompositionError> {
    let m1 = s.left.target();
    let m2 = s.right.target();
    let apex = s.apex();

    let mut sc = Classes::new(
        m1.states()
            .map(|x| Side::L(x.clone()))
            .chain(m2.states().map(|x| Side::R(x.clone()))),
    );
    for s3 in apex.states() {
        sc.union(
            &Side::L(s.left.state_map()[s3].clone()),
            &Side::R(s.right.state_map()[s3].clone()),
        );
    }
    let mut state_of: BTreeMap<Side<StateId>, StateId> = BTreeMap::new();
    let mut states = Vec::new();
    for group in sc.groups() {
        let labels: Vec<Side<Label>> = group
            .iter()
            .map(|m| match m {
                Side::L(StateId(l)) => Side::L(l.clone()),
                Side::R(StateId(l)) => Side::R(l.clone()),
            })
            .collect();
        let id = StateId(class_label(&labels));
        for member in group {
            state_of.insert(member, id.clone());
        }
        states.push(id);
    }

    let mut ac = Classes::new(
        m1.actions()
            .map(|x| Side::L(x.clone()))
            .chain(m2.actions().map(|x| Side::R(x.clone()))),
    );
    for a3 in apex.actions() {
        ac.union(
            &Side::L(s.left.action_map()[a3].clone()),
            &Side::R(s.right.action_map()[a3].clone()),
        );
    }

    let with_reward = m1.has_reward() && m2.has_reward();
    let mut actions = Vec::new();
    let mut reward: BTreeMap<ActionId, f64> = BTreeMap::new();
    let mut action_of: BTreeMap<Side<ActionId>, ActionId> = BTreeMap::new();
    for group in ac.groups() {
        let labels: Vec<Side<Label>> = group
            .iter()
            .map(|m| match m {
                Side::L(ActionId(l)) => Side::L(l.clone()),
                Side::R(ActionId(l)) => Side::R(l.clone()),
            })
            .collect();
        let id = ActionId(class_label(&labels));
        let rep = group
            .iter()
            .filter(|m| matches!(m, Side::L(_)))
            .min()
            .or_else(|| group.iter().min())
            .expect("nonempty class")
            .clone();
        let (anchor, dist) = match &rep {
            Side::L(a1) => (
                state_of[&Side::L(m1.anchor(a1).unwrap().clone())].clone(),
                m1.transition(a1)
                    .unwrap()
                    .relabel(|t| state_of[&Side::L(t.clone())].clone()),
            ),
            Side::R(a2) => (
                state_of[&Side::R(m2.anchor(a2).unwrap().clone())].clone(),
                m2.transition(a2)
                    .unwrap()
                    .relabel(|t| state_of[&Side::R(t.clone())].clone()),
            ),
        };
        if with_reward {
            let mut value: Option<f64> = None;
            for member in &group {
                let r = match member {
                    Side::L(a1) => m1.reward(a1).unwrap_or(0.0),
                    Side::R(a2) => m2.reward(a2).unwrap_or(0.0),
                };
                match value {
                    None => value = Some(r),
                    Some(v) if (v - r).abs() <= eps => {}
                    Some(_) => return Err(CompositionError::RewardClash(id)),
                }
            }
            reward.insert(id.clone(), value.unwrap_or(0.0));
        }
        for member in group {
            action_of.insert(member, id.clone());
        }
        actions.push((id, anchor, dist));
    }

    let glued = Arc::new(FiniteMdp::new(
        states,
        actions,
        with_reward.then_some(reward),
    ));
    let mut incl_left = MdpMorphism::new(
        s.left.target_arc(),
        Arc::clone(&glued),
        m1.states()
            .map(|x| (x.clone(), state_of[&Side::L(x.clone())].clone()))
            .collect(),
        m1.actions()
            .map(|x| (x.clone(), action_of[&Side::L(x.clone())].clone()))
            .collect(),
    );
    let mut incl_right = MdpMorphism::new(
        s.right.target_arc(),
        Arc::clone(&glued),
        m2.states()
            .map(|x| (x.clone(), state_of[&Side::R(x.clone())].clone()))
            .collect(),
        m2.actions()
            .map(|x| (x.clone(), action_of[&Side::R(x.clone())].clone()))
            .collect(),
    );
    if with_reward {
        incl_left = incl_left.preserving_reward();
        incl_right = incl_right.preserving_reward();
    }
    Ok(PushoutResult {
        glued: (*glued).clone(),
        incl_left,
        incl_right,
    })
}

/// The mediating morphism out of a pushout, induced by a cocone. The two
/// inclusions are jointly surjective, so the mediator is forced pointwise;
/// this also makes it unique.
pub fn pushout_mediator(
    r: &PushoutResult,
    s: &Span,
    cand_left: &MdpMorphism,
    cand_right: &MdpMorphism,
) -> Result<MdpMorphism, CompositionError> {
    if cand_left.target() != cand_right.target() {
        return Err(CompositionError::MismatchedApex);
    }
    if cand_left.source() != s.left.target() || cand_right.source() != s.right.target() {
        return Err(CompositionError::MismatchedApex);
    }
    for (name, leg) in [("left", cand_left), ("right", cand_right)] {
        let report = leg.check();
        if !report.is_empty() {
            return Err(CompositionError::InvalidLeg(format!("{name}: {report}")));
        }
    }
    let via_left = s.left.then(cand_left)?;
    let via_right = s.right.then(cand_right)?;
    if via_left.state_map() != via_right.state_map()
        || via_left.action_map() != via_right.action_map()
    {
        return Err(CompositionError::NonCommuting(
            "cocone square under the apex".into(),
        ));
    }

    let mut state_map: BTreeMap<StateId, StateId> = BTreeMap::new();
    for (x, glued) in r.incl_left.state_map() {
        state_map.insert(glued.clone(), cand_left.state_map()[x].clone());
    }
    for (x, glued) in r.incl_right.state_map() {
        let image = cand_right.state_map()[x].clone();
        if let Some(existing) = state_map.get(glued) {
            if *existing != image {
                return Err(CompositionError::NonCommuting(format!(
                    "cocone disagrees on glued state {glued}"
                )));
            }
        }
        state_map.insert(glued.clone(), image);
    }
    let mut action_map: BTreeMap<ActionId, ActionId> = BTreeMap::new();
    for (x, glued) in r.incl_left.action_map() {
        action_map.insert(glued.clone(), cand_left.action_map()[x].clone());
    }
    for (x, glued) in r.incl_right.action_map() {
        let image = cand_right.action_map()[x].clone();
        if let Some(existing) = action_map.get(glued) {
            if *existing != image {
                return Err(CompositionError::NonCommuting(format!(
                    "cocone disagrees on glued action {glued}"
                )));
            }
        }
        action_map.insert(glued.clone(), image);
    }
    Ok(MdpMorphism::new(
        r.glued.clone(),
        cand_left.target_arc(),
        state_map,
        action_map,
    ))
}

/// Gluing along subprocess legs yields subprocess inclusions.
pub fn gluing_preserves_subprocesses(r: &PushoutResult) -> bool {
    r.incl_left.is_subprocess() && r.incl_right.is_subprocess()
}

/// The empty MDP, the apex for disjoint unions.
pub fn empty_mdp() -> FiniteMdp {
    FiniteMdp::new([], [], None)
}

/// Disjoint union as the pushout over the empty MDP.
pub fn disjoint_union(m1: &FiniteMdp, m2: &FiniteMdp) -> Result<PushoutResult, CompositionError> {
    let empty = empty_mdp();
    let left = MdpMorphism::new(empty.clone(), m1.clone(), BTreeMap::new(), BTreeMap::new());
    let right = MdpMorphism::new(empty, m2.clone(), BTreeMap::new(), BTreeMap::new());
    pushout(&Span::new(left, right)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin(name: &str, heads: &str, tails: &str) -> FiniteMdp {
        let h = StateId::atom(heads);
        let t = StateId::atom(tails);
        FiniteMdp::new(
            [h.clone(), t.clone()],
            [
                (
                    ActionId::atom(format!("{name}@{heads}")),
                    h.clone(),
                    Dist::from_pairs([(h.clone(), 0.5), (t.clone(), 0.5)]).unwrap(),
                ),
                (
                    ActionId::atom(format!("{name}@{tails}")),
                    t.clone(),
                    Dist::from_pairs([(h, 0.5), (t, 0.5)]).unwrap(),
                ),
            ],
            None,
        )
    }

    #[test]
    fn product_over_point_is_cartesian() {
        let m1 = coin("flip", "h", "t");
        let m2 = coin("toss", "u", "v");
        let r = cartesian_product(&m1, &m2);
        assert_eq!(r.product.state_count(), 4);
        assert_eq!(r.product.action_count(), 4);
        assert!(r.product.validate().is_empty());
        // Joint mass is the product of marginals: 0.25 on each pair.
        let a = r.product.actions().next().unwrap().clone();
        let d = r.product.transition(&a).unwrap();
        assert_eq!(d.len(), 4);
        for (_, p) in d.iter() {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert!(r.proj_left.check().is_empty());
        assert!(r.proj_right.check().is_empty());
        assert!(check_marginals(&r));
    }

    #[test]
    fn projections_are_conditionally_independent_and_mediate_to_identity() {
        let m1 = coin("flip", "h", "t");
        let m2 = coin("toss", "u", "v");
        let c = Cospan::new(
            MdpMorphism::to_point(m1.clone()),
            MdpMorphism::to_point(m2),
        )
        .unwrap();
        let r = fiber_product(&c);
        assert!(is_conditionally_independent(&r.proj_left, &r.proj_right, &c).unwrap());
        let med = fiber_mediator(&r.proj_left, &r.proj_right, &c, &r).unwrap();
        assert!(med.check().is_empty());
        for s in r.product.states() {
            assert_eq!(med.apply_state(s), Some(s));
        }
    }

    #[test]
    fn correlated_cone_is_not_independent() {
        // Joint mass 0.5/0.5 on diagonal pairs only; the independent
        // density would be 0.25 on all four.
        let m1 = coin("flip", "h", "t");
        let m2 = coin("toss", "u", "v");
        let c = Cospan::new(
            MdpMorphism::to_point(m1.clone()),
            MdpMorphism::to_point(m2.clone()),
        )
        .unwrap();
        let x = StateId::atom("x");
        let y = StateId::atom("y");
        let n = FiniteMdp::new(
            [x.clone(), y.clone()],
            [(
                ActionId::atom("corr"),
                x.clone(),
                Dist::from_pairs([(x.clone(), 0.5), (y.clone(), 0.5)]).unwrap(),
            )],
            None,
        );
        let leg1 = MdpMorphism::new(
            n.clone(),
            m1,
            [
                (x.clone(), StateId::atom("h")),
                (y.clone(), StateId::atom("t")),
            ]
            .into(),
            [(ActionId::atom("corr"), ActionId::atom("flip@h"))].into(),
        );
        let leg2 = MdpMorphism::new(
            n,
            m2,
            [(x, StateId::atom("u")), (y, StateId::atom("v"))].into(),
            [(ActionId::atom("corr"), ActionId::atom("toss@u"))].into(),
        );
        assert!(leg1.check().is_empty());
        assert!(leg2.check().is_empty());
        assert!(!is_conditionally_independent(&leg1, &leg2, &c).unwrap());
        assert!(matches!(
            fiber_mediator(&leg1, &leg2, &c, &fiber_product(&c)),
            Err(CompositionError::NotIndependent)
        ));
    }

    #[test]
    fn pushout_over_empty_apex_is_disjoint_union() {
        let m1 = coin("flip", "h", "t");
        let m2 = coin("toss", "u", "v");
        let r = disjoint_union(&m1, &m2).unwrap();
        assert_eq!(r.glued.state_count(), 4);
        assert_eq!(r.glued.action_count(), 4);
        assert!(r.glued.has_state(&StateId(Label::left(Label::atom("h")))));
        assert!(r.glued.has_state(&StateId(Label::right(Label::atom("v")))));
        assert!(r.incl_left.check().is_empty());
        assert!(r.incl_right.check().is_empty());
        assert!(gluing_preserves_subprocesses(&r));
    }

    /// Two 2-cell corridors glued along the shared end cell give a 3-cell
    /// corridor with the expected labels.
    #[test]
    fn corridor_gluing() {
        let corridor = |a: &str, b: &str| {
            let sa = StateId::atom(a);
            let sb = StateId::atom(b);
            FiniteMdp::new(
                [sa.clone(), sb.clone()],
                [
                    (
                        ActionId::atom(format!("go@{a}")),
                        sa.clone(),
                        Dist::point(sb.clone()),
                    ),
                    (
                        ActionId::atom(format!("stay@{b}")),
                        sb.clone(),
                        Dist::point(sb),
                    ),
                ],
                None,
            )
        };
        let m1 = corridor("c0", "c1");
        let m2 = corridor("c1", "c2");
        // The shared sub-MDP is the cell c1 with no actions: m1's action
        // there self-loops while m2's moves on, so they cannot be shared.
        let apex = FiniteMdp::new([StateId::atom("c1")], [], None);
        let left = MdpMorphism::new(
            apex.clone(),
            m1.clone(),
            [(StateId::atom("c1"), StateId::atom("c1"))].into(),
            BTreeMap::new(),
        );
        let right = MdpMorphism::new(
            apex,
            m2.clone(),
            [(StateId::atom("c1"), StateId::atom("c1"))].into(),
            BTreeMap::new(),
        );
        let r = pushout(&Span::new(left, right).unwrap()).unwrap();
        assert_eq!(r.glued.state_count(), 3);
        assert_eq!(r.glued.action_count(), 4);
        assert!(r.glued.validate().is_empty());
        assert!(r.glued.has_state(&StateId(Label::left(Label::atom("c0")))));
        assert!(r.glued.has_state(&StateId(Label::glued(Label::atom("c1")))));
        assert!(r.glued.has_state(&StateId(Label::right(Label::atom("c2")))));
        assert!(gluing_preserves_subprocesses(&r));
    }

    #[test]
    fn gluing_along_identity_recovers_the_mdp() {
        let m = coin("flip", "h", "t");
        let span = Span::new(
            MdpMorphism::identity(m.clone()),
            MdpMorphism::identity(m.clone()),
        )
        .unwrap();
        let r = pushout(&span).unwrap();
        assert!(crate::iso::find_isomorphism(&r.glued, &m)
            .unwrap()
            .is_some());
    }

    #[test]
    fn mediator_for_own_inclusions_is_identity() {
        let m1 = coin("flip", "h", "t");
        let m2 = coin("toss", "u", "v");
        let empty = empty_mdp();
        let span = Span::new(
            MdpMorphism::new(empty.clone(), m1, BTreeMap::new(), BTreeMap::new()),
            MdpMorphism::new(empty, m2, BTreeMap::new(), BTreeMap::new()),
        )
        .unwrap();
        let r = pushout(&span).unwrap();
        let med = pushout_mediator(&r, &span, &r.incl_left, &r.incl_right).unwrap();
        assert!(med.check().is_empty());
        for s in r.glued.states() {
            assert_eq!(med.apply_state(s), Some(s));
        }
    }

    #[test]
    fn mediator_to_point_is_the_unique_map() {
        let m1 = coin("flip", "h", "t");
        let m2 = coin("toss", "u", "v");
        let empty = empty_mdp();
        let span = Span::new(
            MdpMorphism::new(empty.clone(), m1.clone(), BTreeMap::new(), BTreeMap::new()),
            MdpMorphism::new(empty, m2.clone(), BTreeMap::new(), BTreeMap::new()),
        )
        .unwrap();
        let r = pushout(&span).unwrap();
        let med = pushout_mediator(
            &r,
            &span,
            &MdpMorphism::to_point(m1),
            &MdpMorphism::to_point(m2),
        )
        .unwrap();
        assert!(med.check().is_empty());
        assert_eq!(med.target().state_count(), 1);
    }

    #[test]
    fn reward_clash_is_an_error() {
        let mk = |r: f64| {
            let s = StateId::atom("s");
            let a = ActionId::atom("a");
            FiniteMdp::new(
                [s.clone()],
                [(a.clone(), s.clone(), Dist::point(s))],
                Some([(a, r)].into()),
            )
        };
        let m1 = mk(1.0);
        let m2 = mk(2.0);
        let apex = FiniteMdp::new(
            [StateId::atom("s")],
            [(
                ActionId::atom("a"),
                StateId::atom("s"),
                Dist::point(StateId::atom("s")),
            )],
            None,
        );
        let leg = |tgt: &FiniteMdp| {
            MdpMorphism::new(
                apex.clone(),
                tgt.clone(),
                [(StateId::atom("s"), StateId::atom("s"))].into(),
                [(ActionId::atom("a"), ActionId::atom("a"))].into(),
            )
        };
        let span = Span::new(leg(&m1), leg(&m2)).unwrap();
        assert!(matches!(
            pushout(&span),
            Err(CompositionError::RewardClash(_))
        ));
    }
}
