//! Boundary-condensed evaluation of the energy and its control gradient.
//!
//! The control only enters the operator through the diagonal entries of the
//! cells adjacent to the Robin wall, so `A(χ) = A_ref + E Δ(χ) Eᵀ` where
//! `A_ref` is the operator for `χ ≡ 1` and `E` selects those cells. After one
//! sparse factorization of `A_ref` and one block solve `W = A_ref⁻¹ E`, every
//! later evaluation reduces to a dense solve whose size is the number of Robin
//! edges whose control differs from one. The results coincide with the full
//! sparse route up to round-off.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use super::assemble::{robin_diagonal, robin_rhs, robin_trace, ProblemData};
use super::solver::HelmholtzSolver;
use crate::energy::{apply_gradient, apply_gradient_transpose, EnergyWeights};
use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// Energy and per-edge gradient density at one control.
#[derive(Debug, Clone)]
pub struct CondensedEval {
    pub energy: f64,
    /// `-Re(α u_e p_e)` per Robin edge, present when requested.
    pub density: Option<Vec<f64>>,
    /// Edge-midpoint values of the direct field.
    pub trace: Vec<Complex64>,
}

/// Precomputed reduced operator for one frequency on one mesh.
#[derive(Debug, Clone)]
pub struct CondensedOperator {
    h: f64,
    alpha: Complex64,
    weights: EnergyWeights,
    robin_data: Vec<Complex64>,
    measures: Vec<f64>,
    /// `Eᵀ A_ref⁻¹ E`, complex symmetric.
    s: Mat<Complex64>,
    /// `Wᴴ M W` with `M` the volume energy form.
    gram: Mat<Complex64>,
    /// `Wᴴ M u_ref`.
    q: Vec<Complex64>,
    /// `u_refᴴ M u_ref`.
    e0: f64,
    /// Reference field at the Robin cells.
    v_ref: Vec<Complex64>,
}

/// Applies the volume energy form `M x = h² (A x + B ∇ᵀ∇ x)`.
fn apply_energy_form(x: &[Complex64], mesh: &Mesh, w: &EnergyWeights) -> Vec<Complex64> {
    let h2 = mesh.h * mesh.h;
    let mut out: Vec<Complex64> = x.iter().map(|v| v * (w.a * h2)).collect();
    if w.b != 0.0 {
        let (gx, gy) = apply_gradient(x, mesh);
        let gtg = apply_gradient_transpose(&gx, &gy, mesh);
        for (o, g) in out.iter_mut().zip(gtg) {
            *o += g * (w.b * h2);
        }
    }
    out
}

impl CondensedOperator {
    /// Builds the reduced operator; the control in `data` is ignored.
    pub fn build(mesh: &Mesh, data: &ProblemData, weights: EnergyWeights) -> Result<Self> {
        weights.validate()?;
        let reference = ProblemData {
            chi_edges: vec![1.0; mesh.robin_count()],
            ..data.clone()
        };
        let solver = HelmholtzSolver::new(mesh, reference)?;
        let u_ref = solver.direct()?.values;

        let n = mesh.cell_count();
        let r = mesh.robin_count();
        let cells: Vec<usize> = mesh.robin_edges().map(|e| e.cell).collect();
        let mut w = Mat::<Complex64>::zeros(n, r);
        for (e, &c) in cells.iter().enumerate() {
            w[(c, e)] = Complex64::new(1.0, 0.0);
        }
        solver.factorization().solve_columns(w.as_mut());
        if (0..r).any(|e| (0..n).any(|i| !w[(i, e)].re.is_finite() || !w[(i, e)].im.is_finite())) {
            return Err(Error::solver("non-finite boundary response"));
        }

        let s = Mat::<Complex64>::from_fn(r, r, |i, j| w[(cells[i], j)]);
        let mw = if weights.b == 0.0 {
            let scale = weights.a * mesh.h * mesh.h;
            Mat::<Complex64>::from_fn(n, r, |i, j| w[(i, j)] * scale)
        } else {
            let mut mw = Mat::<Complex64>::zeros(n, r);
            let mut col = vec![Complex64::default(); n];
            for j in 0..r {
                for (i, c) in col.iter_mut().enumerate() {
                    *c = w[(i, j)];
                }
                for (i, v) in apply_energy_form(&col, mesh, &weights).into_iter().enumerate() {
                    mw[(i, j)] = v;
                }
            }
            mw
        };
        let gram = w.adjoint() * &mw;
        let mu_ref = apply_energy_form(&u_ref, mesh, &weights);
        let q = (0..r)
            .map(|j| (0..n).map(|i| w[(i, j)].conj() * mu_ref[i]).sum())
            .collect();
        let e0 = u_ref.iter().zip(&mu_ref).map(|(u, m)| (u.conj() * m).re).sum();
        let v_ref = cells.iter().map(|&c| u_ref[c]).collect();

        Ok(CondensedOperator {
            h: mesh.h,
            alpha: data.alpha,
            weights,
            robin_data: data.robin_data.clone(),
            measures: mesh.robin_edges().map(|e| e.measure).collect(),
            s,
            gram,
            q,
            e0,
            v_ref,
        })
    }

    pub fn robin_count(&self) -> usize {
        self.v_ref.len()
    }

    pub fn evaluate(&self, chi_edges: &[f64], with_gradient: bool) -> Result<CondensedEval> {
        let r = self.robin_count();
        if chi_edges.len() != r {
            return Err(Error::invalid(format!(
                "{} control values for {r} Robin edges",
                chi_edges.len()
            )));
        }
        let h = self.h;
        let a_ref = self.alpha;
        let coeffs: Vec<Complex64> = chi_edges.iter().map(|&c| self.alpha * c).collect();
        let d_ref = robin_diagonal(a_ref, h);
        let delta: Vec<Complex64> = coeffs.iter().map(|&a| robin_diagonal(a, h) - d_ref).collect();
        let rho: Vec<Complex64> = coeffs
            .iter()
            .zip(&self.robin_data)
            .map(|(&a, &eta)| robin_rhs(a, eta, h) - robin_rhs(a_ref, eta, h))
            .collect();
        let zero = Complex64::default();
        let active: Vec<usize> = (0..r).filter(|&e| delta[e] != zero || rho[e] != zero).collect();
        let na = active.len();

        // (I + Δ S) restricted to the active edges
        let lu = if na > 0 {
            let m = Mat::<Complex64>::from_fn(na, na, |i, j| {
                let (ei, ej) = (active[i], active[j]);
                let id = if i == j { Complex64::new(1.0, 0.0) } else { zero };
                id + delta[ei] * self.s[(ei, ej)]
            });
            Some(m.partial_piv_lu())
        } else {
            None
        };
        let reduced_solve = |rhs: Vec<Complex64>| -> Vec<Complex64> {
            let mut full = vec![zero; r];
            if let Some(lu) = &lu {
                let mut b = Mat::<Complex64>::from_fn(na, 1, |i, _| rhs[i]);
                lu.solve_in_place(b.as_mut());
                for (i, &e) in active.iter().enumerate() {
                    full[e] = b[(i, 0)];
                }
            }
            full
        };
        let s_times = |z: &[Complex64]| -> Vec<Complex64> {
            (0..r)
                .map(|i| active.iter().map(|&e| self.s[(i, e)] * z[e]).sum())
                .collect()
        };

        let z = reduced_solve(active.iter().map(|&e| rho[e] - delta[e] * self.v_ref[e]).collect());
        let sz = s_times(&z);
        let trace: Vec<Complex64> = (0..r)
            .map(|e| robin_trace(coeffs[e], self.robin_data[e], self.v_ref[e] + sz[e], h))
            .collect();

        let gz: Vec<Complex64> = (0..r)
            .map(|i| active.iter().map(|&e| self.gram[(i, e)] * z[e]).sum())
            .collect();
        let qz: Complex64 = self.q.iter().zip(&z).map(|(q, z)| q.conj() * z).sum();
        let zgz: Complex64 = z.iter().zip(&gz).map(|(z, g)| z.conj() * g).sum();
        let mut energy = self.e0 + 2.0 * qz.re + zgz.re;
        if self.weights.c != 0.0 {
            energy += self.weights.c
                * trace
                    .iter()
                    .zip(&self.measures)
                    .map(|(u, m)| u.norm_sqr() * m)
                    .sum::<f64>();
        }
        if !energy.is_finite() {
            return Err(Error::solver("non-finite condensed energy"));
        }

        let density = if with_gradient {
            let eta_p: Vec<Complex64> = trace.iter().map(|u| u.conj() * (2.0 * self.weights.c)).collect();
            let r_robin: Vec<Complex64> = (0..r).map(|e| robin_rhs(coeffs[e], eta_p[e], h)).collect();
            let s_r: Vec<Complex64> = (0..r)
                .map(|i| (0..r).map(|e| self.s[(i, e)] * r_robin[e]).sum())
                .collect();
            let scale = -2.0 / (h * h);
            let p0: Vec<Complex64> = (0..r).map(|e| (self.q[e] + gz[e]).conj() * scale + s_r[e]).collect();
            let zp = reduced_solve(active.iter().map(|&e| -delta[e] * p0[e]).collect());
            let szp = s_times(&zp);
            Some(
                (0..r)
                    .map(|e| {
                        let p_e = robin_trace(coeffs[e], eta_p[e], p0[e] + szp[e], h);
                        -(self.alpha * trace[e] * p_e).re
                    })
                    .collect(),
            )
        } else {
            None
        };

        Ok(CondensedEval { energy, density, trace })
    }
}
