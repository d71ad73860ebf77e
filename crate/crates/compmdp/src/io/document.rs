//! JSON document types for MDPs, morphisms, groups, bridges and solver
//! output. Probabilities serialize with the shortest representation that
//! reparses to the same value, so parse ∘ serialize is the identity on
//! labels, structure and masses.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dist::Dist;
use crate::label::{ActionId, Label, StateId};
use crate::mdp::FiniteMdp;
use crate::solver::Solution;

use super::IoError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub states: Vec<String>,
    pub actions: Vec<ActionDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActionDocument {
    pub id: String,
    pub state: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    pub to: BTreeMap<String, f64>,
}

/// A morphism document; `source` and `target` name bound MDPs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MorphismDocument {
    pub source: String,
    pub target: String,
    pub states: BTreeMap<String, String>,
    pub actions: BTreeMap<String, String>,
    #[serde(default)]
    pub preserve_reward: bool,
}

/// A group presented by generator permutations in structural cycle
/// notation: each generator lists disjoint cycles of state identifiers
/// and of action identifiers; unlisted elements are fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupDocument {
    pub mdp: String,
    pub generators: Vec<GeneratorDocument>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratorDocument {
    #[serde(default)]
    pub states: Vec<Vec<String>>,
    #[serde(default)]
    pub actions: Vec<Vec<String>>,
}

/// A bridge document; `left` and `right` name bound morphisms out of the
/// same source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BridgeDocument {
    pub left: String,
    pub right: String,
}

/// Solver output: values and greedy policy keyed by identifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub gamma: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub values: BTreeMap<String, f64>,
    pub policy: BTreeMap<String, String>,
}

impl SolutionDocument {
    pub fn from_solution(sol: &Solution) -> Self {
        SolutionDocument {
            gamma: sol.gamma,
            iterations: sol.iterations,
            residual: sol.residual,
            converged: sol.converged,
            values: sol
                .values
                .iter()
                .map(|(s, v)| (s.to_string(), *v))
                .collect(),
            policy: sol
                .policy
                .iter()
                .map(|(s, a)| (s.to_string(), a.to_string()))
                .collect(),
        }
    }
}

pub(super) fn parse_label(text: &str, role: &str) -> Result<Label, IoError> {
    text.parse()
        .map_err(|e| IoError::Semantic(format!("bad {role} identifier '{text}': {e}")))
}

/// Parses an MDP document without checking well-formedness; diagnostics
/// stay available through [`FiniteMdp::validate`].
pub fn parse_mdp_lenient(text: &str) -> Result<FiniteMdp, IoError> {
    let doc: MdpDocument = serde_json::from_str(text).map_err(|e| IoError::from_json(&e))?;
    mdp_from_document(&doc)
}

/// Parses and validates an MDP document; structural violations are
/// semantic errors carrying the full report.
pub fn parse_mdp(text: &str) -> Result<FiniteMdp, IoError> {
    let m = parse_mdp_lenient(text)?;
    let report = m.validate();
    if !report.is_empty() {
        return Err(IoError::Semantic(report.to_string().trim_end().to_string()));
    }
    Ok(m)
}

pub(super) fn mdp_from_document(doc: &MdpDocument) -> Result<FiniteMdp, IoError> {
    let states: Vec<StateId> = doc
        .states
        .iter()
        .map(|s| Ok(StateId(parse_label(s, "state")?)))
        .collect::<Result<_, IoError>>()?;
    let any_reward = doc.actions.iter().any(|a| a.reward.is_some());
    let mut actions = Vec::new();
    let mut reward = BTreeMap::new();
    for a in &doc.actions {
        let id = ActionId(parse_label(&a.id, "action")?);
        let anchor = StateId(parse_label(&a.state, "state")?);
        let dist = Dist::from_pairs(
            a.to
                .iter()
                .map(|(s, p)| Ok((StateId(parse_label(s, "state")?), *p)))
                .collect::<Result<Vec<_>, IoError>>()?,
        )
        .map_err(|e| IoError::Semantic(e.to_string()))?;
        if let Some(r) = a.reward {
            reward.insert(id.clone(), r);
        }
        actions.push((id, anchor, dist));
    }
    Ok(FiniteMdp::new(states, actions, any_reward.then_some(reward)))
}

pub fn serialize_mdp(m: &FiniteMdp) -> String {
    let doc = MdpDocument {
        states: m.states().map(|s| s.to_string()).collect(),
        actions: m
            .actions()
            .map(|a| ActionDocument {
                id: a.to_string(),
                state: m.anchor(a).map(|s| s.to_string()).unwrap_or_default(),
                reward: m.reward(a),
                to: m
                    .transition(a)
                    .map(|d| d.iter().map(|(s, p)| (s.to_string(), p)).collect())
                    .unwrap_or_default(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("document serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_loop_document_round_trips() {
        let text = r#"{
            "states": ["s"],
            "actions": [{"id": "a", "state": "s", "reward": 1.0, "to": {"s": 1.0}}]
        }"#;
        let m = parse_mdp(text).unwrap();
        assert_eq!(m.state_count(), 1);
        assert_eq!(m.reward(&ActionId::atom("a")), Some(1.0));
        let again = parse_mdp(&serialize_mdp(&m)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn unnormalized_mass_is_a_semantic_error() {
        let text = r#"{
            "states": ["s"],
            "actions": [{"id": "a", "state": "s", "to": {"s": 0.5}}]
        }"#;
        let err = parse_mdp(text).unwrap_err();
        assert!(matches!(err, IoError::Semantic(_)), "{err}");
        assert!(err.to_string().contains("mass 0.5"));
        // The lenient parser accepts it for diagnostics.
        assert!(parse_mdp_lenient(text).is_ok());
    }

    #[test]
    fn broken_json_reports_line_and_column() {
        let err = parse_mdp("{\n  \"states\": [,]\n}").unwrap_err();
        match err {
            IoError::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col > 0);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn structured_labels_survive_the_document_format() {
        let s = StateId(Label::glued(Label::pair(
            Label::atom("x0y0"),
            Label::atom("x1y1"),
        )));
        let a = ActionId(Label::left(Label::atom("go")));
        let m = FiniteMdp::new(
            [s.clone()],
            [(a, s.clone(), Dist::point(s))],
            None,
        );
        let again = parse_mdp(&serialize_mdp(&m)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn awkward_probabilities_reparse_identically() {
        let s = StateId::atom("s");
        let t = StateId::atom("t");
        let third = 1.0_f64 / 3.0;
        let m = FiniteMdp::new(
            [s.clone(), t.clone()],
            [(
                ActionId::atom("a"),
                s.clone(),
                Dist::from_pairs([(s, third), (t, 1.0 - third)]).unwrap(),
            )],
            None,
        );
        let again = parse_mdp(&serialize_mdp(&m)).unwrap();
        assert_eq!(m, again);
    }
}
