//! Bounded weak Fraïssé theory for hereditary classes of finite relational
//! structures.
//!
//! The crate decides joint embedding and (weak) amalgamation within explicit
//! size bounds, builds finite approximations of weak Fraïssé limits as
//! ascending chains, checks universality and weak saturation/homogeneity at
//! finite depth, measures the ultrametric distance between structures on the
//! naturals, and approximates generic automorphisms through systems of
//! partial isomorphisms.

pub mod bundled;
pub mod canon;
pub mod class;
pub mod error;
pub mod generic;
pub mod glue;
pub mod io;
pub mod limit;
pub mod search;
pub mod space;
pub mod structure;

pub use class::{ClassSpec, Verdict, WapWitness};
pub use error::{Error, Result};
pub use structure::{Elem, Embedding, FinStructure, PartialIso, Signature};
