//! Jackson q-calculus on geometric lattices and first-order necessary
//! conditions for higher-order infinite-horizon q-variational problems.
//!
//! - [`qlattice`]: lattices, lattice functions, `D_q`, q-integrals
//! - [`qexpr`]: Lagrangian expressions with symbolic partials
//! - [`variational`]: functionals, first variation, Euler-Lagrange residual,
//!   transversality conditions, weak-maximality gaps
//! - [`solver`]: admissible prefixes, forward shooting, direct optimisation,
//!   diagnostics
//! - [`identities`]: randomized checks of the q-calculus identities

pub mod error;
pub mod identities;
pub mod qexpr;
pub mod qlattice;
pub mod solver;
pub mod variational;

pub use error::{Error, Result};
pub use qexpr::{differentiate, eval_expression, parse_expression, Expr, ExprAst};
pub use qlattice::{
    dq_k, improper_q_integral, q_integral, shift_sigma, ImproperIntegral, LatticeFn, QLattice,
    TailStatus,
};
pub use variational::{
    angle_args, el_residual, first_variation, functional_truncated, ibp_identity_sides,
    liminf_envelope, transversality_term, weak_maximality_gap, ArgVector, Lagrangian,
    TransversalitySequence,
};
