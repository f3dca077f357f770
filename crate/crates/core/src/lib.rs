//! Tensor type calculus with binding operators, the strictly balanced
//! fragment of first-order multiplicative linear logic, Lambek calculus,
//! and the grammars built on top of them.
//!
//! The crate is organised around the calculi themselves:
//!
//! * [`term`] — the tensor term algebra: word-labelled edges between
//!   index-named vertices, contraction to normal form, Kronecker deltas,
//!   cyclic-word loops.
//! * [`types`] — tensor types: indexed literals, `⊗`/`⅋`, the `∇`/`Δ`
//!   binders, definable duality, type symbols.
//! * [`sequent`] — the sequent calculus for tensor typing judgements,
//!   forward rule application, derivation checking, and bounded cut-free
//!   backward proof search.
//! * [`natded`] — the natural deduction presentation with tensor
//!   variables, its translation into the sequent calculus, and the
//!   deduction-theorem utilities used by grammars.
//! * [`fo`] — first-order MLL1/MILL1: balanced valencies, occurrence
//!   nets, the strictly balanced fragment with the derived existential
//!   rule, and the round-trip translations with the tensor calculus.
//! * [`lambek`] — Lambek calculus, its first-order translation, and the
//!   direct encoding of the implicational types as tensor types.
//! * [`grammar`] — MILL1 grammars and tensor grammars: lexicons,
//!   membership, bounded language generation.
//! * [`syntax`] — parsers and printers for all textual formats.
//! * [`render`] — DOT rendering of typing judgements.

pub mod fo;
pub mod grammar;
pub mod index;
pub mod lambek;
pub mod natded;
pub mod render;
pub mod sequent;
pub mod syntax;
pub mod term;
pub mod types;

pub use index::{Index, IndexSupply, Word};
pub use term::{TensorTerm, TermExpression};
pub use types::TensorType;
