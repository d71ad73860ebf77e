//! Serialization and the composition expression language.
//!
//! MDPs, morphisms, groups and bridges travel as JSON documents whose
//! identifiers use the structured label grammar (`L(x)`, `R(x)`, `G(x)`,
//! `(x,y)`, `{x|y}`, atoms). Composition trees are written in a tiny
//! expression language and evaluated against named bindings.

mod document;
mod expr;

pub use document::{
    parse_mdp, parse_mdp_lenient, serialize_mdp, ActionDocument, BridgeDocument,
    GeneratorDocument, GroupDocument, MdpDocument, MorphismDocument, SolutionDocument,
};
pub use expr::{
    evaluate, group_on, parse_expr, resolve_bindings, Binding, Bound, ComposeExpr, Environment,
    EvalDetail, EvalOutcome, ExprFile,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("unbound name '{0}'")]
    UnboundName(String),
    #[error("'{name}' is bound to a {actual}, expected a {expected}")]
    WrongKind {
        name: String,
        actual: &'static str,
        expected: &'static str,
    },
    #[error("cannot read {path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Composition(#[from] crate::composition::CompositionError),
    #[error(transparent)]
    Symmetry(#[from] crate::symmetry::SymmetryError),
    #[error(transparent)]
    ZigZag(#[from] crate::zigzag::ZigZagError),
}

impl IoError {
    pub(crate) fn from_json(e: &serde_json::Error) -> IoError {
        IoError::Syntax {
            line: e.line(),
            col: e.column(),
            msg: e.to_string(),
        }
    }
}
