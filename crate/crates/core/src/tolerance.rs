//! Numerical tolerances shared by the geometry code and its tests.

/// Orthonormality and determinant tolerance for rotation matrices.
pub const ROTATION: f64 = 1e-10;

/// Centroid norm after centering.
pub const CENTROID: f64 = 1e-12;

/// Second singular value of the cross-covariance, relative to the first,
/// below which the optimal rotation is not unique.
pub const DEGENERATE_RELATIVE: f64 = 1e-9;

/// Absolute floor on the leading singular value; below it the covariance is
/// treated as zero (coincident points).
pub const DEGENERATE_ABSOLUTE: f64 = 1e-14;

/// Endpoint band excluded from training times under a stochastic schedule.
pub const STOCHASTIC_T_BAND: f64 = 1e-3;
