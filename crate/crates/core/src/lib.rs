//! Workbench for predimension calculus on finite structure classes.
//!
//! The crate turns a family of model-theoretic constructions into
//! executable, exactly-computed operations:
//!
//! * [`predim`] — class-agnostic predimension engine: `delta` arithmetic,
//!   strong-embedding checks, self-sufficient closures, the derived
//!   dimension and its pregeometry, and a submodularity audit harness;
//! * [`ab_initio`] — finite ternary-relation structures with
//!   `delta = |A| - |R(A)|`, free amalgamation and a generic-model
//!   approximator;
//! * [`toy_fields`] — finite surrogates of exponential-style field
//!   classes: axiom audits, counting bases, full extensions, free
//!   amalgams and generic-point witnesses;
//! * [`varieties`] — parametric varieties over exact rationals with
//!   dimension by generic Jacobian rank, rotundity / normality / freeness
//!   checkers, generic hyperplane sections and the Rabinovich transform;
//! * [`modular`] — q-expansions of the j-invariant and classical modular
//!   polynomials at small levels;
//! * [`diffalg`] — exact differential algebra: formal derivations, the
//!   Schwarzian, the third-order equation of j, and a battery of
//!   machine-checked identities;
//! * [`acceptance`] — the reproducibility harness that runs the whole
//!   acceptance suite.
//!
//! All arithmetic is exact (arbitrary-precision rationals); all randomised
//! operations are seeded and deterministic.

pub mod ab_initio;
pub mod acceptance;
pub mod diffalg;
pub mod error;
pub mod linalg;
pub mod modular;
pub mod predim;
pub mod rat;
pub mod seed;
pub mod toy_fields;
pub mod universe;
pub mod varieties;

pub use error::{Error, Result};
pub use rat::Rat;
pub use universe::{EPair, Point, StructureClass, Substructure, Universe, Witness};

/// Version stamp carried by every JSON artifact this crate reads or writes.
pub const SCHEMA_VERSION: u32 = 1;

pub(crate) fn universe_default_schema() -> u32 {
    SCHEMA_VERSION
}
