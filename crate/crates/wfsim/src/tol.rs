//! Numerical tolerances used across the crate.
//!
//! Exact algebra on f64 keeps ~15 significant digits; the looser bounds below
//! allow for accumulation across eigendecompositions and long propagations.

/// Hermiticity requirement for any Hamiltonian term.
pub const HERMITICITY: f64 = 1e-12;

/// Norm drift allowed over a full schedule propagation.
pub const NORM_DRIFT: f64 = 1e-10;

/// Unit-trace and Hermiticity bound for reduced density matrices.
pub const DENSITY: f64 = 1e-10;

/// Eigenvalue floor for positive semidefiniteness checks.
pub const PSD_FLOOR: f64 = -1e-10;

/// Branch weights below this are treated as empty branches; the associated
/// environment state is undefined.
pub const BRANCH_FLOOR: f64 = 1e-12;

/// Orthonormality residual allowed for interference-basis branch inputs.
pub const BRANCH_ORTHO: f64 = 1e-6;

/// Off-diagonal residue above which a reduced state is flagged as not yet
/// carrying definite records.
pub const DEFINITENESS: f64 = 0.02;
