//! The composition expression language.
//!
//! ```text
//! expr := NAME
//!       | "product(" expr "," expr ")"
//!       | "fiber(" expr "," expr "over" expr "via" NAME "," NAME ")"
//!       | "glue(" expr "," expr "along" expr "via" NAME "," NAME ")"
//!       | "puncture(" expr "minus" "{" id-list "}" ")"
//!       | "quotient(" expr "by" NAME ")"
//!       | "zigzag(" expr ("-[" NAME "]-" expr)+ ")"
//! ```
//!
//! Names bind to loaded documents: MDPs, morphisms, groups, or bridges.
//! Identifiers in the puncture list are bare atoms or quoted structured
//! labels. The language is whitespace-insensitive and has no variables or
//! recursion; parse errors report line and column.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::composition::{fiber_product, pushout, Cospan, FiberProductResult, PushoutResult, Span};
use crate::label::StateId;
use crate::mdp::FiniteMdp;
use crate::morphism::MdpMorphism;
use crate::puncture::puncture;
use crate::symmetry::{close_group, quotient, GroupAction, GroupElement, DEFAULT_GROUP_BUDGET};
use crate::zigzag::{build_composite, Bridge, ZigZagDiagram};

use super::document::{
    mdp_from_document, parse_label, BridgeDocument, GroupDocument, MdpDocument, MorphismDocument,
};
use super::IoError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComposeExpr {
    Name(String),
    Product(Box<ComposeExpr>, Box<ComposeExpr>),
    Fiber {
        left: Box<ComposeExpr>,
        right: Box<ComposeExpr>,
        over: Box<ComposeExpr>,
        via: (String, String),
    },
    Glue {
        left: Box<ComposeExpr>,
        right: Box<ComposeExpr>,
        along: Box<ComposeExpr>,
        via: (String, String),
    },
    Puncture {
        inner: Box<ComposeExpr>,
        minus: Vec<String>,
    },
    Quotient {
        inner: Box<ComposeExpr>,
        by: String,
    },
    ZigZag {
        environments: Vec<ComposeExpr>,
        bridges: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Quoted(String),
    LParen,
    RParen,
    Comma,
    LBrace,
    RBrace,
    BridgeOpen,
    BridgeClose,
}

#[derive(Debug, Clone)]
struct Spanned {
    token: Token,
    line: usize,
    col: usize,
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_.@+#'".contains(c)
}

fn tokenize(src: &str) -> Result<Vec<Spanned>, IoError> {
    let mut tokens = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (tl, tc) = (line, col);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            c
        };
        match c {
            c if c.is_whitespace() => {
                bump(&mut chars);
            }
            '(' => {
                bump(&mut chars);
                tokens.push(Spanned { token: Token::LParen, line: tl, col: tc });
            }
            ')' => {
                bump(&mut chars);
                tokens.push(Spanned { token: Token::RParen, line: tl, col: tc });
            }
            ',' => {
                bump(&mut chars);
                tokens.push(Spanned { token: Token::Comma, line: tl, col: tc });
            }
            '{' => {
                bump(&mut chars);
                tokens.push(Spanned { token: Token::LBrace, line: tl, col: tc });
            }
            '}' => {
                bump(&mut chars);
                tokens.push(Spanned { token: Token::RBrace, line: tl, col: tc });
            }
            '-' => {
                bump(&mut chars);
                if chars.peek() == Some(&'[') {
                    bump(&mut chars);
                    tokens.push(Spanned { token: Token::BridgeOpen, line: tl, col: tc });
                } else {
                    return Err(IoError::Syntax {
                        line: tl,
                        col: tc,
                        msg: "expected '[' after '-'".into(),
                    });
                }
            }
            ']' => {
                bump(&mut chars);
                if chars.peek() == Some(&'-') {
                    bump(&mut chars);
                    tokens.push(Spanned { token: Token::BridgeClose, line: tl, col: tc });
                } else {
                    return Err(IoError::Syntax {
                        line: tl,
                        col: tc,
                        msg: "expected '-' after ']'".into(),
                    });
                }
            }
            '"' => {
                bump(&mut chars);
                let mut text = String::new();
                loop {
                    match chars.peek() {
                        Some('"') => {
                            bump(&mut chars);
                            break;
                        }
                        Some(_) => text.push(bump(&mut chars)),
                        None => {
                            return Err(IoError::Syntax {
                                line: tl,
                                col: tc,
                                msg: "unterminated string".into(),
                            })
                        }
                    }
                }
                tokens.push(Spanned { token: Token::Quoted(text), line: tl, col: tc });
            }
            c if is_ident_char(c) => {
                let mut text = String::new();
                while matches!(chars.peek(), Some(&c) if is_ident_char(c)) {
                    text.push(bump(&mut chars));
                }
                tokens.push(Spanned { token: Token::Ident(text), line: tl, col: tc });
            }
            other => {
                return Err(IoError::Syntax {
                    line: tl,
                    col: tc,
                    msg: format!("unexpected character '{other}'"),
                })
            }
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> IoError {
        let (line, col) = self
            .tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|t| (t.line, t.col))
            .unwrap_or((1, 1));
        IoError::Syntax {
            line,
            col,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|t| &t.token)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|t| t.token.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), IoError> {
        match self.peek() {
            Some(t) if *t == want => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, IoError> {
        match self.peek() {
            Some(Token::Ident(name)) => {
                let name = name.clone();
                self.pos += 1;
                Ok(name)
            }
            _ => Err(self.err(format!("expected {what}"))),
        }
    }

    fn keyword(&mut self, word: &str) -> Result<(), IoError> {
        match self.peek() {
            Some(Token::Ident(name)) if name == word => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.err(format!("expected '{word}'"))),
        }
    }

    fn expr(&mut self) -> Result<ComposeExpr, IoError> {
        let head = self.ident("an expression")?;
        if self.peek() != Some(&Token::LParen) {
            return Ok(ComposeExpr::Name(head));
        }
        match head.as_str() {
            "product" => {
                self.expect(Token::LParen, "'('")?;
                let a = self.expr()?;
                self.expect(Token::Comma, "','")?;
                let b = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(ComposeExpr::Product(Box::new(a), Box::new(b)))
            }
            "fiber" | "glue" => {
                self.expect(Token::LParen, "'('")?;
                let a = self.expr()?;
                self.expect(Token::Comma, "','")?;
                let b = self.expr()?;
                self.keyword(if head == "fiber" { "over" } else { "along" })?;
                let c = self.expr()?;
                self.keyword("via")?;
                let f = self.ident("a morphism name")?;
                self.expect(Token::Comma, "','")?;
                let g = self.ident("a morphism name")?;
                self.expect(Token::RParen, "')'")?;
                if head == "fiber" {
                    Ok(ComposeExpr::Fiber {
                        left: Box::new(a),
                        right: Box::new(b),
                        over: Box::new(c),
                        via: (f, g),
                    })
                } else {
                    Ok(ComposeExpr::Glue {
                        left: Box::new(a),
                        right: Box::new(b),
                        along: Box::new(c),
                        via: (f, g),
                    })
                }
            }
            "puncture" => {
                self.expect(Token::LParen, "'('")?;
                let inner = self.expr()?;
                self.keyword("minus")?;
                self.expect(Token::LBrace, "'{'")?;
                let mut minus = Vec::new();
                loop {
                    match self.next() {
                        Some(Token::Ident(id)) => minus.push(id),
                        Some(Token::Quoted(id)) => minus.push(id),
                        Some(Token::RBrace) if minus.is_empty() => break,
                        _ => return Err(self.err("expected a state identifier")),
                    }
                    match self.next() {
                        Some(Token::Comma) => continue,
                        Some(Token::RBrace) => break,
                        _ => return Err(self.err("expected ',' or '}'")),
                    }
                }
                self.expect(Token::RParen, "')'")?;
                Ok(ComposeExpr::Puncture {
                    inner: Box::new(inner),
                    minus,
                })
            }
            "quotient" => {
                self.expect(Token::LParen, "'('")?;
                let inner = self.expr()?;
                self.keyword("by")?;
                let by = self.ident("a group name")?;
                self.expect(Token::RParen, "')'")?;
                Ok(ComposeExpr::Quotient {
                    inner: Box::new(inner),
                    by,
                })
            }
            "zigzag" => {
                self.expect(Token::LParen, "'('")?;
                let mut environments = vec![self.expr()?];
                let mut bridges = Vec::new();
                loop {
                    match self.peek() {
                        Some(Token::BridgeOpen) => {
                            self.pos += 1;
                            bridges.push(self.ident("a bridge name")?);
                            self.expect(Token::BridgeClose, "']-'")?;
                            environments.push(self.expr()?);
                        }
                        Some(Token::RParen) => {
                            self.pos += 1;
                            break;
                        }
                        _ => return Err(self.err("expected '-[' or ')'")),
                    }
                }
                if bridges.is_empty() {
                    return Err(self.err("a zigzag needs at least one bridge"));
                }
                Ok(ComposeExpr::ZigZag {
                    environments,
                    bridges,
                })
            }
            other => Err(self.err(format!("unknown operator '{other}'"))),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<ComposeExpr, IoError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser { tokens, pos: 0 };
    let expr = parser.expr()?;
    if parser.pos != parser.tokens.len() {
        return Err(parser.err("trailing input after expression"));
    }
    Ok(expr)
}

/// One named binding in an expression file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    Mdp(MdpDocument),
    Morphism(MorphismDocument),
    Group(GroupDocument),
    Bridge(BridgeDocument),
    /// Path (relative to the expression file) of an MDP document.
    File(String),
}

/// An expression together with its bindings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExprFile {
    #[serde(default)]
    pub bind: BTreeMap<String, Binding>,
    pub expr: String,
}

impl ExprFile {
    pub fn from_str(text: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|e| IoError::from_json(&e))
    }
}

/// A resolved binding.
#[derive(Debug, Clone)]
pub enum Bound {
    Mdp(FiniteMdp),
    Morphism(MdpMorphism),
    Group(GroupAction),
    Bridge(Bridge),
}

impl Bound {
    fn kind(&self) -> &'static str {
        match self {
            Bound::Mdp(_) => "mdp",
            Bound::Morphism(_) => "morphism",
            Bound::Group(_) => "group",
            Bound::Bridge(_) => "bridge",
        }
    }
}

pub type Environment = BTreeMap<String, Bound>;

fn lookup<'e>(env: &'e Environment, name: &str, expected: &'static str) -> Result<&'e Bound, IoError> {
    let bound = env
        .get(name)
        .ok_or_else(|| IoError::UnboundName(name.to_string()))?;
    if bound.kind() != expected {
        return Err(IoError::WrongKind {
            name: name.to_string(),
            actual: bound.kind(),
            expected,
        });
    }
    Ok(bound)
}

fn lookup_mdp<'e>(env: &'e Environment, name: &str) -> Result<&'e FiniteMdp, IoError> {
    match lookup(env, name, "mdp")? {
        Bound::Mdp(m) => Ok(m),
        _ => unreachable!(),
    }
}

fn lookup_morphism<'e>(env: &'e Environment, name: &str) -> Result<&'e MdpMorphism, IoError> {
    match lookup(env, name, "morphism")? {
        Bound::Morphism(m) => Ok(m),
        _ => unreachable!(),
    }
}

/// Resolves raw bindings into values: MDPs and files first, then groups
/// and morphisms (which reference MDPs by name), then bridges (which
/// reference morphisms).
pub fn resolve_bindings(
    bindings: &BTreeMap<String, Binding>,
    base_dir: &std::path::Path,
) -> Result<Environment, IoError> {
    let mut env = Environment::new();
    for (name, binding) in bindings {
        match binding {
            Binding::Mdp(doc) => {
                env.insert(name.clone(), Bound::Mdp(mdp_from_document(doc)?));
            }
            Binding::File(path) => {
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|source| IoError::File {
                    path: full.display().to_string(),
                    source,
                })?;
                env.insert(name.clone(), Bound::Mdp(super::parse_mdp_lenient(&text)?));
            }
            _ => {}
        }
    }
    for (name, binding) in bindings {
        match binding {
            Binding::Morphism(doc) => {
                let morphism = morphism_from_document(doc, &env)?;
                env.insert(name.clone(), Bound::Morphism(morphism));
            }
            Binding::Group(doc) => {
                let group = group_from_document(doc, &env)?;
                env.insert(name.clone(), Bound::Group(group));
            }
            _ => {}
        }
    }
    for (name, binding) in bindings {
        if let Binding::Bridge(doc) = binding {
            let left = lookup_morphism(&env, &doc.left)?.clone();
            let right = lookup_morphism(&env, &doc.right)?.clone();
            let bridge =
                Bridge::new(left, right).map_err(|e| IoError::Semantic(e.to_string()))?;
            env.insert(name.clone(), Bound::Bridge(bridge));
        }
    }
    Ok(env)
}

fn morphism_from_document(
    doc: &MorphismDocument,
    env: &Environment,
) -> Result<MdpMorphism, IoError> {
    let source = lookup_mdp(env, &doc.source)?.clone();
    let target = lookup_mdp(env, &doc.target)?.clone();
    let state_map = doc
        .states
        .iter()
        .map(|(k, v)| {
            Ok((
                StateId(parse_label(k, "state")?),
                StateId(parse_label(v, "state")?),
            ))
        })
        .collect::<Result<_, IoError>>()?;
    let action_map = doc
        .actions
        .iter()
        .map(|(k, v)| {
            Ok((
                crate::label::ActionId(parse_label(k, "action")?),
                crate::label::ActionId(parse_label(v, "action")?),
            ))
        })
        .collect::<Result<_, IoError>>()?;
    let mut m = MdpMorphism::new(source, target, state_map, action_map);
    if doc.preserve_reward {
        m = m.preserving_reward();
    }
    let report = m.check();
    if !report.is_empty() {
        return Err(IoError::Semantic(format!(
            "morphism {} → {} is invalid: {report}",
            doc.source, doc.target
        )));
    }
    Ok(m)
}

fn group_from_document(doc: &GroupDocument, env: &Environment) -> Result<GroupAction, IoError> {
    let m = lookup_mdp(env, &doc.mdp)?;
    group_on(doc, m)
}

/// Builds the group action described by a document directly on the given
/// MDP (the document's `mdp` name is not consulted).
pub fn group_on(doc: &GroupDocument, m: &FiniteMdp) -> Result<GroupAction, IoError> {
    let mut generators = Vec::new();
    for gen in &doc.generators {
        let mut element = GroupElement::identity(m);
        for cycle in &gen.states {
            apply_cycle(&mut element.state_perm, cycle, |text| {
                Ok(StateId(parse_label(text, "state")?))
            })?;
        }
        for cycle in &gen.actions {
            apply_cycle(&mut element.action_perm, cycle, |text| {
                Ok(crate::label::ActionId(parse_label(text, "action")?))
            })?;
        }
        generators.push(element);
    }
    Ok(close_group(m, generators, DEFAULT_GROUP_BUDGET)?)
}

fn apply_cycle<T: Ord + Clone>(
    perm: &mut BTreeMap<T, T>,
    cycle: &[String],
    parse: impl Fn(&str) -> Result<T, IoError>,
) -> Result<(), IoError> {
    let elems: Vec<T> = cycle.iter().map(|t| parse(t)).collect::<Result<_, _>>()?;
    for (i, e) in elems.iter().enumerate() {
        if !perm.contains_key(e) {
            return Err(IoError::Semantic(format!(
                "cycle element '{}' is not in the MDP",
                cycle[i]
            )));
        }
        perm.insert(e.clone(), elems[(i + 1) % elems.len()].clone());
    }
    Ok(())
}

/// What an expression evaluated to, beyond the resulting MDP.
#[derive(Debug, Clone)]
pub enum EvalDetail {
    Fiber(FiberProductResult, Cospan),
    Pushout(PushoutResult),
    ZigZag(ZigZagDiagram),
    Quotient(MdpMorphism),
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub mdp: FiniteMdp,
    pub detail: Option<EvalDetail>,
}

/// Evaluates an expression against resolved bindings. Referentially
/// transparent: the same expression over the same bindings produces
/// label-identical results.
pub fn evaluate(expr: &ComposeExpr, env: &Environment) -> Result<EvalOutcome, IoError> {
    match expr {
        ComposeExpr::Name(name) => Ok(EvalOutcome {
            mdp: lookup_mdp(env, name)?.clone(),
            detail: None,
        }),
        ComposeExpr::Product(a, b) => {
            let left = evaluate(a, env)?.mdp;
            let right = evaluate(b, env)?.mdp;
            let cospan = Cospan::new(
                MdpMorphism::to_point(left),
                MdpMorphism::to_point(right),
            )?;
            let result = fiber_product(&cospan);
            Ok(EvalOutcome {
                mdp: result.product.clone(),
                detail: Some(EvalDetail::Fiber(result, cospan)),
            })
        }
        ComposeExpr::Fiber {
            left,
            right,
            over,
            via,
        } => {
            let m1 = evaluate(left, env)?.mdp;
            let m2 = evaluate(right, env)?.mdp;
            let m3 = evaluate(over, env)?.mdp;
            let f = lookup_morphism(env, &via.0)?.clone();
            let g = lookup_morphism(env, &via.1)?.clone();
            check_endpoints(&via.0, &f, &m1, &m3)?;
            check_endpoints(&via.1, &g, &m2, &m3)?;
            let cospan = Cospan::new(f, g)?;
            let result = fiber_product(&cospan);
            Ok(EvalOutcome {
                mdp: result.product.clone(),
                detail: Some(EvalDetail::Fiber(result, cospan)),
            })
        }
        ComposeExpr::Glue {
            left,
            right,
            along,
            via,
        } => {
            let m1 = evaluate(left, env)?.mdp;
            let m2 = evaluate(right, env)?.mdp;
            let apex = evaluate(along, env)?.mdp;
            let f = lookup_morphism(env, &via.0)?.clone();
            let g = lookup_morphism(env, &via.1)?.clone();
            check_endpoints(&via.0, &f, &apex, &m1)?;
            check_endpoints(&via.1, &g, &apex, &m2)?;
            let span = Span::new(f, g)?;
            let result = pushout(&span)?;
            Ok(EvalOutcome {
                mdp: result.glued.clone(),
                detail: Some(EvalDetail::Pushout(result)),
            })
        }
        ComposeExpr::Puncture { inner, minus } => {
            let m = evaluate(inner, env)?.mdp;
            let mut obstacles = BTreeSet::new();
            for id in minus {
                let state = StateId(parse_label(id, "state")?);
                if !m.has_state(&state) {
                    return Err(IoError::Semantic(format!(
                        "puncture target '{id}' is not a state of the MDP"
                    )));
                }
                obstacles.insert(state);
            }
            Ok(EvalOutcome {
                mdp: puncture(&m, &obstacles).0,
                detail: None,
            })
        }
        ComposeExpr::Quotient { inner, by } => {
            let m = evaluate(inner, env)?.mdp;
            let group = match lookup(env, by, "group")? {
                Bound::Group(g) => g,
                _ => unreachable!(),
            };
            if group.mdp() != &m {
                return Err(IoError::Semantic(format!(
                    "group '{by}' acts on a different MDP than the quotient operand"
                )));
            }
            let (quot, q) = quotient(group)?;
            Ok(EvalOutcome {
                mdp: quot,
                detail: Some(EvalDetail::Quotient(q)),
            })
        }
        ComposeExpr::ZigZag {
            environments,
            bridges,
        } => {
            let envs: Vec<FiniteMdp> = environments
                .iter()
                .map(|e| Ok(evaluate(e, env)?.mdp))
                .collect::<Result<_, IoError>>()?;
            let bs: Vec<Bridge> = bridges
                .iter()
                .map(|name| match lookup(env, name, "bridge")? {
                    Bound::Bridge(b) => Ok(b.clone()),
                    _ => unreachable!(),
                })
                .collect::<Result<_, IoError>>()?;
            let diagram = ZigZagDiagram::new(envs, bs)?;
            let composite = build_composite(&diagram)?;
            Ok(EvalOutcome {
                mdp: composite.mdp,
                detail: Some(EvalDetail::ZigZag(diagram)),
            })
        }
    }
}

fn check_endpoints(
    name: &str,
    m: &MdpMorphism,
    source: &FiniteMdp,
    target: &FiniteMdp,
) -> Result<(), IoError> {
    if m.source() != source {
        return Err(IoError::Semantic(format!(
            "morphism '{name}' does not start at the stated operand"
        )));
    }
    if m.target() != target {
        return Err(IoError::Semantic(format!(
            "morphism '{name}' does not end at the stated operand"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn puncture_expression_parses() {
        let e = parse_expr("puncture(G minus {r1,r2})").unwrap();
        assert_eq!(
            e,
            ComposeExpr::Puncture {
                inner: Box::new(ComposeExpr::Name("G".into())),
                minus: vec!["r1".into(), "r2".into()],
            }
        );
    }

    #[test]
    fn glue_expression_parses() {
        let e = parse_expr("glue(A, B along N via f, g)").unwrap();
        assert_eq!(
            e,
            ComposeExpr::Glue {
                left: Box::new(ComposeExpr::Name("A".into())),
                right: Box::new(ComposeExpr::Name("B".into())),
                along: Box::new(ComposeExpr::Name("N".into())),
                via: ("f".into(), "g".into()),
            }
        );
    }

    #[test]
    fn zigzag_expression_parses() {
        let e = parse_expr("zigzag(M1 -[N1]- M2 -[N2]- M3)").unwrap();
        match e {
            ComposeExpr::ZigZag {
                environments,
                bridges,
            } => {
                assert_eq!(environments.len(), 3);
                assert_eq!(bridges, vec!["N1".to_string(), "N2".to_string()]);
            }
            other => panic!("unexpected parse: {other:?}"),
        }
    }

    #[test]
    fn nested_and_quoted_forms_parse() {
        let e = parse_expr("product(puncture(G minus {\"(a,b)\"}), quotient(H by Sym))");
        assert!(e.is_ok(), "{e:?}");
    }

    #[test]
    fn errors_carry_line_and_column() {
        let err = parse_expr("glue(A,\n  B among N via f, g)").unwrap_err();
        match err {
            IoError::Syntax { line, col, msg } => {
                assert_eq!(line, 2);
                assert!(col >= 5, "col {col}");
                assert!(msg.contains("along"), "{msg}");
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn whitespace_is_insignificant() {
        let a = parse_expr("product(A,B)").unwrap();
        let b = parse_expr("product(  A ,\n\tB )").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluation_requires_bound_names() {
        let e = parse_expr("product(A, B)").unwrap();
        let err = evaluate(&e, &Environment::new()).unwrap_err();
        assert!(matches!(err, IoError::UnboundName(n) if n == "A"));
    }

    #[test]
    fn product_evaluates_against_bindings() {
        let mut rng = crate::randgen::seeded(3);
        let m1 = crate::randgen::random_mdp(&mut rng, 2, 3, false);
        let m2 = crate::randgen::random_mdp(&mut rng, 2, 3, false);
        let mut env = Environment::new();
        env.insert("A".into(), Bound::Mdp(m1.clone()));
        env.insert("B".into(), Bound::Mdp(m2.clone()));
        let out = evaluate(&parse_expr("product(A, B)").unwrap(), &env).unwrap();
        assert_eq!(out.mdp.state_count(), m1.state_count() * m2.state_count());
        assert!(matches!(out.detail, Some(EvalDetail::Fiber(_, _))));
        // Referential transparency: same expression, same labels.
        let again = evaluate(&parse_expr("product(A, B)").unwrap(), &env).unwrap();
        assert_eq!(out.mdp, again.mdp);
    }
}
