//! Exact-arithmetic engine for a free-field (Wakimoto-type) realization of the
//! quantum affine superalgebra associated with `gl(M|N)` at arbitrary level.
//!
//! The engine builds deformed Heisenberg oscillators, normal-ordered vertex
//! operators, and the generating currents on degree-truncated Fock modules,
//! entirely over exact rational arithmetic on a lattice of powers of a rational
//! base.  On top of that sit verification suites: defining relations of the
//! algebra, screening-charge commutation in the Jackson-integral sense, the
//! xi-eta projector structure, the undeformed (classical) limit engine, and a
//! float-based limit comparison.
//!
//! Everything downstream of [`scalars`] is generic over the scalar context so
//! the same operator machinery runs both exactly and in `f64` for limit
//! studies.

pub mod scalars;
pub mod heisenberg;
pub mod vertex;
pub mod currents;
pub mod relations;
pub mod screening;
pub mod xi_eta;
pub mod classical;
pub mod limit;
pub mod suites;
