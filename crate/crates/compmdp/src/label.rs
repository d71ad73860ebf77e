//! Structured identifiers for states and actions.
//!
//! Every construction in this crate names the things it builds: a pushout
//! tags states as coming from the left leg, the right leg, or the glued
//! overlap; a product pairs the factor names; a quotient records the whole
//! orbit. Keeping the provenance in the identifier makes repeated builds
//! bit-identical and lets equality checks compare labels before falling
//! back to search.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A structured tag. The derived ordering is total: variants compare by
/// kind in declaration order, then recursively by their contents, with
/// atoms comparing lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Atom(String),
    Left(Box<Label>),
    Right(Box<Label>),
    Glued(Box<Label>),
    Pair(Box<Label>, Box<Label>),
    /// Sorted, deduplicated member labels of an orbit.
    Orbit(Vec<Label>),
}

impl Label {
    pub fn atom(s: impl Into<String>) -> Self {
        Label::Atom(s.into())
    }

    pub fn left(inner: Label) -> Self {
        Label::Left(Box::new(inner))
    }

    pub fn right(inner: Label) -> Self {
        Label::Right(Box::new(inner))
    }

    pub fn glued(inner: Label) -> Self {
        Label::Glued(Box::new(inner))
    }

    pub fn pair(a: Label, b: Label) -> Self {
        Label::Pair(Box::new(a), Box::new(b))
    }

    /// Builds an orbit label; members are sorted and deduplicated.
    pub fn orbit(mut members: Vec<Label>) -> Self {
        members.sort();
        members.dedup();
        Label::Orbit(members)
    }

    /// Flattens left-associated pairs into their component list:
    /// `((a,b),c)` yields `[a, b, c]`. A non-pair label is its own
    /// single component.
    pub fn pair_components(&self) -> Vec<&Label> {
        match self {
            Label::Pair(a, b) => {
                let mut c = a.pair_components();
                c.push(b);
                c
            }
            other => vec![other],
        }
    }
}

const ATOM_CHARS: &str = "_.@+-#'";

fn is_atom_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || ATOM_CHARS.contains(c)
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Atom(s) => write!(f, "{s}"),
            Label::Left(x) => write!(f, "L({x})"),
            Label::Right(x) => write!(f, "R({x})"),
            Label::Glued(x) => write!(f, "G({x})"),
            Label::Pair(a, b) => write!(f, "({a},{b})"),
            Label::Orbit(ms) => {
                write!(f, "{{")?;
                for (i, m) in ms.iter().enumerate() {
                    if i > 0 {
                        write!(f, "|")?;
                    }
                    write!(f, "{m}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid label at byte {at}: {reason}")]
pub struct LabelParseError {
    pub at: usize,
    pub reason: String,
}

struct LabelParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> LabelParser<'a> {
    fn err(&self, reason: impl Into<String>) -> LabelParseError {
        LabelParseError {
            at: self.pos,
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn expect(&mut self, c: char) -> Result<(), LabelParseError> {
        if self.peek() == Some(c) {
            self.bump();
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn label(&mut self) -> Result<Label, LabelParseError> {
        match self.peek() {
            Some('(') => {
                self.bump();
                let a = self.label()?;
                self.expect(',')?;
                let b = self.label()?;
                self.expect(')')?;
                Ok(Label::pair(a, b))
            }
            Some('{') => {
                self.bump();
                let mut members = vec![self.label()?];
                while self.peek() == Some('|') {
                    self.bump();
                    members.push(self.label()?);
                }
                self.expect('}')?;
                Ok(Label::orbit(members))
            }
            Some(c @ ('L' | 'R' | 'G')) if self.src[self.pos..].chars().nth(1) == Some('(') => {
                self.bump();
                self.bump();
                let inner = self.label()?;
                self.expect(')')?;
                Ok(match c {
                    'L' => Label::left(inner),
                    'R' => Label::right(inner),
                    _ => Label::glued(inner),
                })
            }
            Some(c) if is_atom_char(c) => {
                let start = self.pos;
                while matches!(self.peek(), Some(c) if is_atom_char(c)) {
                    self.bump();
                }
                Ok(Label::Atom(self.src[start..self.pos].to_string()))
            }
            Some(c) => Err(self.err(format!("unexpected character '{c}'"))),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

impl FromStr for Label {
    type Err = LabelParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = LabelParser { src: s, pos: 0 };
        let label = p.label()?;
        if p.pos != s.len() {
            return Err(p.err("trailing input after label"));
        }
        Ok(label)
    }
}

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub Label);

        impl $name {
            pub fn atom(s: impl Into<String>) -> Self {
                Self(Label::atom(s))
            }

            pub fn label(&self) -> &Label {
                &self.0
            }

            pub fn left(&self) -> Self {
                Self(Label::left(self.0.clone()))
            }

            pub fn right(&self) -> Self {
                Self(Label::right(self.0.clone()))
            }

            pub fn glued(&self) -> Self {
                Self(Label::glued(self.0.clone()))
            }

            pub fn pair(&self, other: &Self) -> Self {
                Self(Label::pair(self.0.clone(), other.0.clone()))
            }

            pub fn orbit_of(members: impl IntoIterator<Item = Self>) -> Self {
                Self(Label::orbit(members.into_iter().map(|m| m.0).collect()))
            }
        }

        impl From<Label> for $name {
            fn from(l: Label) -> Self {
                Self(l)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl FromStr for $name {
            type Err = LabelParseError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Ok(Self(s.parse()?))
            }
        }
    };
}

id_newtype!(
    /// Identifier of a state.
    StateId
);
id_newtype!(
    /// Identifier of a state-action (an action together with the state it
    /// is available at).
    ActionId
);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_round_trips() {
        let labels = [
            Label::atom("x0y3"),
            Label::left(Label::atom("a")),
            Label::glued(Label::pair(Label::atom("u"), Label::atom("v"))),
            Label::orbit(vec![Label::atom("b"), Label::atom("a"), Label::atom("b")]),
            Label::pair(
                Label::pair(Label::atom("p"), Label::atom("q")),
                Label::right(Label::atom("r")),
            ),
        ];
        for l in labels {
            let text = l.to_string();
            let back: Label = text.parse().unwrap();
            assert_eq!(back, l, "round trip failed for {text}");
        }
    }

    #[test]
    fn atoms_starting_with_constructor_letters_parse() {
        assert_eq!("Left".parse::<Label>().unwrap(), Label::atom("Left"));
        assert_eq!(
            "L(x)".parse::<Label>().unwrap(),
            Label::left(Label::atom("x"))
        );
    }

    #[test]
    fn orbit_members_are_sorted_and_deduped() {
        let o = Label::orbit(vec![Label::atom("z"), Label::atom("a"), Label::atom("z")]);
        assert_eq!(o.to_string(), "{a|z}");
    }

    #[test]
    fn kind_order_precedes_recursive_order() {
        let atom = Label::atom("zzz");
        let left = Label::left(Label::atom("aaa"));
        let pair = Label::pair(Label::atom("a"), Label::atom("b"));
        assert!(atom < left);
        assert!(left < pair);
    }

    #[test]
    fn trailing_garbage_rejected() {
        assert!("a)".parse::<Label>().is_err());
        assert!("(a,b".parse::<Label>().is_err());
    }

    #[test]
    fn pair_components_flatten_left_nesting() {
        let l = Label::pair(
            Label::pair(Label::atom("a"), Label::atom("b")),
            Label::atom("c"),
        );
        let parts: Vec<String> = l.pair_components().iter().map(|p| p.to_string()).collect();
        assert_eq!(parts, ["a", "b", "c"]);
    }
}
