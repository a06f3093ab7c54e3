//! Cell-centered finite-difference discretization of the Helmholtz problem
//! with mixed Dirichlet / Neumann / Robin boundary conditions.
//!
//! Boundary conditions are imposed through ghost cells that are eliminated
//! into the diagonal. The Robin closure uses the edge-midpoint average of the
//! cell and ghost values, which keeps the matrix complex symmetric, so the
//! direct, adjoint and sensitivity problems all share one factorization.

mod assemble;
pub mod condensed;
mod field;
mod solver;

pub use assemble::{assemble, assemble_matrix, assemble_rhs, LinearSystem, ProblemData, SparseMatrix};
pub use condensed::{CondensedEval, CondensedOperator};
pub use field::ComplexField;
pub use solver::{
    linear_solve, solve_adjoint, solve_direct, solve_sensitivity, Factorization, HelmholtzSolver, RESIDUAL_TOL,
};

/// Switches the dense and sparse kernels to single-threaded execution.
/// Threaded factorizations may reorder floating-point reductions between
/// runs; call this once before optimizing when bitwise reproducibility
/// matters and parallelize across frequencies instead.
pub fn sequential_kernels() {
    faer::set_global_parallelism(faer::Par::Seq);
}

/// Wave number `2πf / c`.
pub fn wavenumber(f: f64, c: f64) -> f64 {
    2.0 * std::f64::consts::PI * f / c
}

/// Normalized Gaussian centered on the middle of the wall, standard
/// deviation 0.5, scaled by `amplitude`.
pub fn centered_gaussian(s: f64, amplitude: f64) -> f64 {
    const SIGMA: f64 = 0.5;
    let norm = 1.0 / (SIGMA * (2.0 * std::f64::consts::PI).sqrt());
    amplitude * norm * (-(s - 0.5).powi(2) / (2.0 * SIGMA * SIGMA)).exp()
}
