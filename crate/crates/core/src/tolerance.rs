//! Numerical tolerances shared by every module.
//!
//! Kept in one table so that tests and runtime checks agree on the same
//! thresholds.

/// Construction-level checks: orthonormality, symmetry, idempotence.
pub const CONSTRUCTION: f64 = 1e-10;

/// Trace of a projector against its rank.
pub const TRACE: f64 = 1e-8;

/// A Gram matrix `φφᵀ` is rank deficient when its smallest eigenvalue falls
/// below this fraction of the largest.
pub const RANK_RATIO: f64 = 1e-12;

/// Covariances with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Gram–Schmidt drops a candidate whose residual norm is below this value.
pub const GRAM_SCHMIDT_RESIDUAL: f64 = 1e-10;

/// `φφᵀ` is compared against the identity at this tolerance before the
/// projector shortcut `φᵀφ` is taken.
pub const STIEFEL_SHORTCUT: f64 = 1e-15;

/// Tight-frame test applied to `FrameReport::is_tight`.
pub const TIGHTNESS: f64 = 1e-8;

/// Column norms below this are reported as zero columns.
pub const ZERO_COLUMN: f64 = 1e-12;

/// Agreement of closed-form designs with their target capture.
pub const DESIGN: f64 = 1e-9;

/// Combinatorial guard for the exhaustive sparse worst-case search.
pub const MAX_SUPPORTS: u128 = 1_000_000;
