//! Discrete laboratory for the Hodge-Dirac operator `D = d + d*` on
//! triangulated closed oriented manifolds.
//!
//! The crate is organised bottom-up:
//!
//! * [`fiber`]: exact multilinear algebra on a single exterior algebra fiber
//!   (wedge, interior product, Hodge star, Clifford maps, gradings).
//! * [`complex`]: oriented simplicial complexes, builders for the test
//!   manifolds, integer ranks, cup products and mesh I/O.
//! * [`calculus`]: Whitney mass matrices, `d`, `d*`, `D`, `Δ`, multiplication
//!   operators, commutators and `Lᵖ` norms of cochains and operators.
//! * [`spectral`]: generalized eigen-analysis, harmonic projection, heat
//!   semigroup and kernel diagnostics, approximation numbers.
//! * [`funcalc`]: resolvents and the holomorphic functional calculus by
//!   contour quadrature.
//! * [`index`]: gradings, Fredholm indices, the Euler index, projection
//!   pairings and the signature via the intersection form.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod complex;
mod error;
pub mod fiber;
pub mod funcalc;
pub mod index;
pub mod linalg;
pub mod spectral;

pub use error::{Error, Result};

pub use nalgebra::Complex;
/// Complex scalar used by resolvents and the functional calculus.
pub type C64 = Complex<f64>;
