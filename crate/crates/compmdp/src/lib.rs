//! Compositional finite Markov decision processes.
//!
//! This crate models finite MDPs as objects of a category: morphisms relate
//! processes, subprocesses carve out safe or task-relevant regions, fiber
//! products intersect processes over a shared interface, pushouts glue them
//! along one, puncturing removes hazardous states together with every
//! action that can reach them, and finite symmetry groups collapse
//! equivalent states into quotients. Task sequences are expressed as
//! zig-zag diagrams whose iterated-pushout composite is a single
//! environment; an exact value-iteration solver acts as the oracle that
//! componentwise learning agrees with learning on the whole.
//!
//! See the `book/` directory at the repository root for a guided tour.

pub mod composition;
pub mod dist;
pub mod iso;
pub mod label;
pub mod mdp;
pub mod morphism;
pub mod puncture;
pub mod randgen;
pub mod solver;
pub mod symmetry;
pub mod worlds;
pub mod zigzag;

pub mod io;

pub use dist::{Dist, DistError, DEFAULT_EPS};
pub use label::{ActionId, Label, StateId};
pub use mdp::{FiniteMdp, ValidationReport};
pub use morphism::{canonical_subprocess, factor_through_canonical, MdpMorphism, MorphismError};
