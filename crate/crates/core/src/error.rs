use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("lattice ratio q must exceed 1, got {0}")]
    InvalidRatio(f64),
    #[error("lattice base a must be positive, got {0}")]
    InvalidBase(f64),
    #[error("lattice needs at least one point")]
    EmptyLattice,
    #[error("last lattice point a*q^{0} is not representable")]
    Overflow(usize),
    #[error("domain too short: {0}")]
    DomainTooShort(String),
    #[error("non-finite value at lattice index {0}")]
    NonFinite(usize),
    #[error("functions live on different lattices")]
    MismatchedLattice,
    #[error("inverted integration bounds {lo} > {hi}")]
    InvertedBounds { lo: usize, hi: usize },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("variable u{index} exceeds the admissible range u1..u{max}")]
    Arity { index: usize, max: usize },
    #[error("argument index {index} out of range 1..={max}")]
    ArgIndex { index: usize, max: usize },
    #[error("evaluation domain error: {0}")]
    EvalDomain(String),
    #[error("expected {expected} arguments, got {got}")]
    ArgCount { expected: usize, got: usize },
    #[error("invalid order r = {0}; must be at least 1")]
    InvalidOrder(usize),
    #[error("Lagrangian is degenerate in the top derivative at step {step}")]
    DegenerateLagrangian { step: usize },
    #[error("failed to bracket the Euler-Lagrange root at step {step}")]
    NoBracket { step: usize },
    #[error("root refinement did not converge at step {step} (|residual| = {residual:e})")]
    RootNotConverged { step: usize, residual: f64 },
    #[error("line search stalled at iteration {iter}")]
    LineSearchStall { iter: usize },
    #[error("invalid problem: {0}")]
    Validation(String),
}

impl Error {
    pub(crate) fn too_short(msg: impl Into<String>) -> Self {
        Error::DomainTooShort(msg.into())
    }
}
