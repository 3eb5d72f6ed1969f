//! Numerical tolerances shared by the solvers and the validation suite.

/// Primal feasibility of LP rows and transport marginals.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Reduced-cost threshold below which a simplex column may enter.
pub const OPTIMALITY_TOL: f64 = 1e-9;

/// Smallest pivot element accepted by the ratio test.
pub const PIVOT_TOL: f64 = 1e-12;

/// Allowed gap between the primal transport cost and the Lipschitz dual.
pub const DUALITY_GAP_TOL: f64 = 1e-7;

/// Probability masses must sum to one within this amount.
pub const MASS_TOL: f64 = 1e-12;

/// An edge violates the distance condition when its weight exceeds the
/// competing path length by more than this.
pub const DISTANCE_CONDITION_TOL: f64 = 1e-12;
