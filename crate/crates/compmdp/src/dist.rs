//! Finitely supported probability distributions over states.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::label::StateId;

/// Default tolerance for measure comparisons.
pub const DEFAULT_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("negative mass {mass} at state {state}")]
    NegativeMass { state: StateId, mass: f64 },
    #[error("state {0} is outside the map's domain")]
    DanglingState(StateId),
}

/// A distribution stored by its support: states with exactly zero mass are
/// absent, every stored mass is strictly positive. Normalization is a
/// property checked separately (see [`Dist::total_mass`]), so that
/// ill-formed inputs can be represented and reported by validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    support: BTreeMap<StateId, f64>,
}

impl Dist {
    /// Accumulates `(state, mass)` pairs, summing repeated states and
    /// dropping exact zeros. Negative masses are rejected.
    pub fn from_pairs(
        pairs: impl IntoIterator<Item = (StateId, f64)>,
    ) -> Result<Self, DistError> {
        let mut support: BTreeMap<StateId, f64> = BTreeMap::new();
        for (state, mass) in pairs {
            if mass < 0.0 || mass.is_nan() {
                return Err(DistError::NegativeMass { state, mass });
            }
            if mass == 0.0 {
                continue;
            }
            *support.entry(state).or_insert(0.0) += mass;
        }
        Ok(Dist { support })
    }

    /// The point mass at `state`.
    pub fn point(state: StateId) -> Self {
        let mut support = BTreeMap::new();
        support.insert(state, 1.0);
        Dist { support }
    }

    pub fn mass(&self, state: &StateId) -> f64 {
        self.support.get(state).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.support.values().sum()
    }

    pub fn is_normalized(&self, eps: f64) -> bool {
        (self.total_mass() - 1.0).abs() <= eps
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StateId, f64)> {
        self.support.iter().map(|(s, &p)| (s, p))
    }

    pub fn states(&self) -> impl Iterator<Item = &StateId> {
        self.support.keys()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Total mass assigned to a set of states.
    pub fn mass_of_set<'a>(&self, states: impl IntoIterator<Item = &'a StateId>) -> f64 {
        states.into_iter().map(|s| self.mass(s)).sum()
    }

    /// Image distribution under a state map: the mass of a target point is
    /// the total mass of its preimage. Fails if the support escapes the
    /// map's domain.
    pub fn pushforward(&self, map: &BTreeMap<StateId, StateId>) -> Result<Dist, DistError> {
        let mut support: BTreeMap<StateId, f64> = BTreeMap::new();
        for (s, p) in self.iter() {
            let t = map
                .get(s)
                .ok_or_else(|| DistError::DanglingState(s.clone()))?;
            *support.entry(t.clone()).or_insert(0.0) += p;
        }
        Ok(Dist { support })
    }

    /// Pointwise comparison within `eps`, over the union of supports.
    pub fn approx_eq(&self, other: &Dist, eps: f64) -> bool {
        self.support
            .keys()
            .chain(other.support.keys())
            .all(|s| (self.mass(s) - other.mass(s)).abs() <= eps)
    }

    /// Relabels every support point. The map must be injective on the
    /// support (guaranteed for the label-wrapping maps used by the
    /// constructions in this crate).
    pub fn relabel(&self, f: impl Fn(&StateId) -> StateId) -> Dist {
        let mut support = BTreeMap::new();
        for (s, p) in self.iter() {
            support.insert(f(s), p);
        }
        Dist { support }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(name: &str) -> StateId {
        StateId::atom(name)
    }

    #[test]
    fn zeros_dropped_and_repeats_summed() {
        let d = Dist::from_pairs([(s("a"), 0.25), (s("b"), 0.0), (s("a"), 0.75)]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.mass(&s("a")), 1.0);
        assert!(d.is_normalized(DEFAULT_EPS));
    }

    #[test]
    fn negative_mass_rejected() {
        let err = Dist::from_pairs([(s("a"), -0.5)]).unwrap_err();
        assert!(matches!(err, DistError::NegativeMass { .. }));
    }

    #[test]
    fn pushforward_collapses_preimages() {
        let d = Dist::from_pairs([(s("x"), 0.3), (s("y"), 0.7)]).unwrap();
        let map: BTreeMap<_, _> = [(s("x"), s("t")), (s("y"), s("t"))].into();
        let pushed = d.pushforward(&map).unwrap();
        assert_eq!(pushed.mass(&s("t")), 1.0);
        assert_eq!(pushed.len(), 1);
    }

    #[test]
    fn pushforward_rejects_escaping_support() {
        let d = Dist::point(s("x"));
        let map = BTreeMap::new();
        assert_eq!(d.pushforward(&map).unwrap_err(), DistError::DanglingState(s("x")));
    }
}
