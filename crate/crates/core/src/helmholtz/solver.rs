use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatMut};
use num_complex::Complex64;

use super::assemble::{assemble_matrix, assemble_rhs, robin_trace, LinearSystem, ProblemData, SparseMatrix};
use super::field::ComplexField;
use crate::energy::{adjoint_source, EnergyWeights};
use crate::error::{Error, Result};
use crate::geometry::{sample_on_edges, MasterPartition, Mesh};

/// Relative residual every accepted solve must meet.
pub const RESIDUAL_TOL: f64 = 1e-10;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Sparse LU factors of a [`SparseMatrix`] (fill-reducing column ordering,
/// partial pivoting), reusable for any number of right-hand sides.
pub struct Factorization {
    matrix: SparseMatrix,
    lu: Lu<usize, Complex64>,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("dim", &self.matrix.dim())
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl Factorization {
    pub fn new(matrix: SparseMatrix) -> Result<Self> {
        let n = matrix.dim();
        let triplets: Vec<Triplet<usize, usize, Complex64>> =
            matrix.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        let csc = SparseColMat::<usize, Complex64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::solver(format!("sparse matrix construction: {e:?}")))?;
        let symbolic = SymbolicLu::try_new(csc.symbolic()).map_err(|e| Error::solver(format!("symbolic LU: {e:?}")))?;
        let lu = Lu::try_new_with_symbolic(symbolic, csc.as_ref())
            .map_err(|e| Error::solver(format!("numeric LU: {e:?}")))?;
        Ok(Factorization { matrix, lu })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Solves `A x = b`, rejecting solutions whose relative residual exceeds
    /// [`RESIDUAL_TOL`].
    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.matrix.dim();
        if rhs.len() != n {
            return Err(Error::invalid(format!(
                "rhs of length {} for a {n}x{n} system",
                rhs.len()
            )));
        }
        let bnorm = norm(rhs);
        if bnorm == 0.0 {
            return Ok(vec![Complex64::default(); n]);
        }
        let mut x = Mat::<Complex64>::from_fn(n, 1, |i, _| rhs[i]);
        self.lu.solve_in_place(x.as_mut());
        let sol: Vec<Complex64> = (0..n).map(|i| x[(i, 0)]).collect();
        let ax = self.matrix.matvec(&sol);
        let res: Vec<Complex64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let rel = norm(&res) / bnorm;
        if !(rel <= RESIDUAL_TOL) {
            return Err(Error::Solver {
                reason: format!("relative residual {rel:e} above {RESIDUAL_TOL:e}"),
                frequency: None,
                residual: Some(rel),
            });
        }
        Ok(sol)
    }

    /// Solves in place for every column of `rhs` without residual checks.
    pub fn solve_columns(&self, rhs: MatMut<'_, Complex64>) {
        self.lu.solve_in_place(rhs);
    }
}

/// Direct sparse solve of an assembled system.
pub fn linear_solve(sys: &LinearSystem) -> Result<Vec<Complex64>> {
    Factorization::new(sys.matrix.clone())?.solve(&sys.rhs)
}

/// One factorized operator serving the direct, adjoint and sensitivity
/// problems, which all share the matrix.
#[derive(Debug)]
pub struct HelmholtzSolver<'m> {
    mesh: &'m Mesh,
    data: ProblemData,
    robin_coeffs: Vec<Complex64>,
    factorization: Factorization,
}

impl<'m> HelmholtzSolver<'m> {
    pub fn new(mesh: &'m Mesh, data: ProblemData) -> Result<Self> {
        data.validate(mesh)?;
        let robin_coeffs = data.robin_coefficients();
        let matrix = assemble_matrix(mesh, data.k, &robin_coeffs);
        let factorization = Factorization::new(matrix)?;
        Ok(HelmholtzSolver {
            mesh,
            data,
            robin_coeffs,
            factorization,
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factorization
    }

    /// Solves with the operator of this solver and arbitrary sources.
    pub fn solve_with(
        &self,
        source: Option<Vec<Complex64>>,
        dirichlet: Vec<Complex64>,
        robin_data: Vec<Complex64>,
    ) -> Result<ComplexField> {
        let data = ProblemData {
            source,
            dirichlet,
            robin_data,
            ..self.data.clone()
        };
        data.validate(self.mesh)?;
        let rhs = assemble_rhs(self.mesh, &data);
        let values = self.factorization.solve(&rhs)?;
        let h = self.mesh.h;
        let trace = self
            .mesh
            .robin_edges()
            .enumerate()
            .map(|(k, e)| robin_trace(self.robin_coeffs[k], data.robin_data[k], values[e.cell], h))
            .collect();
        Ok(ComplexField {
            nx: self.mesh.nx,
            ny: self.mesh.ny,
            h,
            values,
            trace,
        })
    }

    pub fn direct(&self) -> Result<ComplexField> {
        self.solve_with(
            self.data.source.clone(),
            self.data.dirichlet.clone(),
            self.data.robin_data.clone(),
        )
    }

    /// Adjoint state for the energy with weights `w`: volume source
    /// `-2A ū - 2B ∇ᵀ∇ ū`, Robin data `2C ū`, homogeneous Dirichlet data.
    pub fn adjoint(&self, u: &ComplexField, w: &EnergyWeights) -> Result<ComplexField> {
        if !u.matches(self.mesh) {
            return Err(Error::invalid("direct field does not live on the solver mesh"));
        }
        let (source, eta) = adjoint_source(u, self.mesh, w);
        self.solve_with(
            Some(source),
            vec![Complex64::default(); self.mesh.dirichlet_count()],
            eta,
        )
    }

    /// Derivative of `u` in the direction of the per-edge control
    /// perturbation `h_edges`: Robin data `-α h u`, no other sources.
    pub fn sensitivity_edges(&self, u: &ComplexField, h_edges: &[f64]) -> Result<ComplexField> {
        if h_edges.len() != self.mesh.robin_count() {
            return Err(Error::invalid("direction does not match the Robin edges"));
        }
        let eta = u
            .trace
            .iter()
            .zip(h_edges)
            .map(|(ue, &he)| -self.data.alpha * he * ue)
            .collect();
        self.solve_with(None, vec![Complex64::default(); self.mesh.dirichlet_count()], eta)
    }
}

pub fn solve_direct(data: &ProblemData, mesh: &Mesh) -> Result<ComplexField> {
    HelmholtzSolver::new(mesh, data.clone())?.direct()
}

pub fn solve_adjoint(data: &ProblemData, mesh: &Mesh, u: &ComplexField, w: &EnergyWeights) -> Result<ComplexField> {
    HelmholtzSolver::new(mesh, data.clone())?.adjoint(u, w)
}

/// Sensitivity along a per-segment direction, which should have zero
/// measure-weighted mean to stay inside the admissible set.
pub fn solve_sensitivity(
    data: &ProblemData,
    mesh: &Mesh,
    u: &ComplexField,
    h_dir: &[f64],
    part: &MasterPartition,
) -> Result<ComplexField> {
    if h_dir.len() != part.len() {
        return Err(Error::invalid("direction does not match the partition"));
    }
    let h_edges = sample_on_edges(h_dir, part, mesh);
    HelmholtzSolver::new(mesh, data.clone())?.sensitivity_edges(u, &h_edges)
}
