//! Self-checks of the discretization and of the adjoint gradient: a
//! manufactured solution, central finite differences and a Taylor test.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use crate::energy::{energy_single, gradient_single, EnergyWeights};
use crate::error::{Error, Result};
use crate::geometry::{build_mesh, sample_on_edges, DomainSpec, MasterPartition, Mesh};
use crate::helmholtz::{HelmholtzSolver, ProblemData};

/// `cos(πx) cos(πy)`.
pub fn manufactured_exact(x: f64, y: f64) -> f64 {
    (PI * x).cos() * (PI * y).cos()
}

/// Data whose exact solution is [`manufactured_exact`]: the normal
/// derivative vanishes on the horizontal walls and on the Robin wall, so
/// `η = α χ u` there.
pub fn manufactured_problem(mesh: &Mesh, k: f64, alpha: Complex64, chi_edges: Vec<f64>) -> ProblemData {
    let eta = mesh
        .robin_edges()
        .zip(&chi_edges)
        .map(|(e, &c)| alpha * c * manufactured_exact(e.midpoint.0, e.midpoint.1))
        .collect();
    ProblemData::new(mesh, k, alpha, chi_edges)
        .with_source(mesh, |x, y| {
            Complex64::new((k * k - 2.0 * PI * PI) * manufactured_exact(x, y), 0.0)
        })
        .with_dirichlet(mesh, |s| Complex64::new(manufactured_exact(0.0, s), 0.0))
        .with_robin_data(eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Relative discrete L² error against the exact cell-center values.
    pub error: f64,
}

/// Manufactured-solution errors on the meshes `1/n` for each `n`.
pub fn convergence_study(cells: &[usize], k: f64, alpha: Complex64) -> Result<Vec<ConvergenceRow>> {
    cells
        .iter()
        .map(|&n| {
            let mesh = build_mesh(DomainSpec::default(), 1.0 / n as f64)?;
            let chi = mesh
                .robin_edges()
                .map(|e| 0.5 + 0.5 * (2.0 * PI * e.param).sin())
                .collect();
            let data = manufactured_problem(&mesh, k, alpha, chi);
            let u = HelmholtzSolver::new(&mesh, data)?.direct()?;
            let (mut num, mut den) = (0.0, 0.0);
            for (c, v) in u.values.iter().enumerate() {
                let (x, y) = mesh.cell_center(c);
                let ex = manufactured_exact(x, y);
                num += (v - ex).norm_sqr();
                den += ex * ex;
            }
            Ok(ConvergenceRow {
                h: mesh.h,
                error: (num / den).sqrt(),
            })
        })
        .collect()
}

/// Least-squares slope of `log error` against `log h`.
pub fn fitted_order(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.h.ln(), r.error.ln())).collect();
    loglog_slope(&pts)
}

pub(crate) fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Random per-segment direction with zero measure-weighted mean and unit
/// max-norm.
pub fn random_zero_mean_direction(part: &MasterPartition, rng: &mut impl Rng) -> Vec<f64> {
    let lengths = part.lengths();
    let mut d: Vec<f64> = (0..part.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean = d.iter().zip(&lengths).map(|(v, l)| v * l).sum::<f64>() / part.total_length();
    d.iter_mut().for_each(|v| *v -= mean);
    let inf = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    d.iter_mut().for_each(|v| *v /= inf);
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckRow {
    pub direction: usize,
    pub finite_difference: f64,
    pub adjoint: f64,
    pub relative_error: f64,
}

/// Energy at a per-segment control on a fixed mesh, solved from scratch.
fn energy_at(base: &ProblemData, mesh: &Mesh, part: &MasterPartition, chi: &[f64], w: &EnergyWeights) -> Result<f64> {
    let data = ProblemData {
        chi_edges: sample_on_edges(chi, part, mesh),
        ..base.clone()
    };
    let u = HelmholtzSolver::new(mesh, data)?.direct()?;
    Ok(energy_single(&u, mesh, w))
}

/// Compares central differences of the energy with the adjoint directional
/// derivative along `directions` random zero-mean directions.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    base: &ProblemData,
    mesh: &Mesh,
    part: &MasterPartition,
    chi: &[f64],
    w: &EnergyWeights,
    directions: usize,
    t: f64,
    seed: u64,
) -> Result<Vec<GradCheckRow>> {
    if chi.iter().any(|&c| c - t < 0.0 || c + t > 1.0) {
        return Err(Error::invalid(
            "control too close to the bounds for the difference step",
        ));
    }
    let data = ProblemData {
        chi_edges: sample_on_edges(chi, part, mesh),
        ..base.clone()
    };
    let solver = HelmholtzSolver::new(mesh, data)?;
    let u = solver.direct()?;
    let p = solver.adjoint(&u, w)?;
    let grad = gradient_single(&u, &p, base.alpha, mesh, part)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..directions)
        .map(|d| {
            let dir = random_zero_mean_direction(part, &mut rng);
            let plus: Vec<f64> = chi.iter().zip(&dir).map(|(c, h)| c + t * h).collect();
            let minus: Vec<f64> = chi.iter().zip(&dir).map(|(c, h)| c - t * h).collect();
            let fd = (energy_at(base, mesh, part, &plus, w)? - energy_at(base, mesh, part, &minus, w)?) / (2.0 * t);
            let adj = grad.dot(&dir);
            Ok(GradCheckRow {
                direction: d,
                finite_difference: fd,
                adjoint: adj,
                relative_error: (fd - adj).abs() / adj.abs().max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorRow {
    pub t: f64,
    /// `‖u(χ + t h) − u(χ) − t ψ‖`.
    pub remainder: f64,
}

/// Remainders of the first-order expansion of the field along `dir`.
pub fn taylor_test(
    base: &ProblemData,
    mesh: &Mesh,
    part: &MasterPartition,
    chi: &[f64],
    dir: &[f64],
    ts: &[f64],
) -> Result<Vec<TaylorRow>> {
    let field = |c: &[f64]| {
        let data = ProblemData {
            chi_edges: sample_on_edges(c, part, mesh),
            ..base.clone()
        };
        HelmholtzSolver::new(mesh, data)
    };
    let solver = field(chi)?;
    let u = solver.direct()?;
    let psi = solver.sensitivity_edges(&u, &sample_on_edges(dir, part, mesh))?;
    ts.iter()
        .map(|&t| {
            let moved: Vec<f64> = chi.iter().zip(dir).map(|(c, h)| c + t * h).collect();
            let ut = field(&moved)?.direct()?;
            let r: f64 = ut
                .values
                .iter()
                .zip(&u.values)
                .zip(&psi.values)
                .map(|((a, b), p)| (a - b - p * t).norm_sqr())
                .sum::<f64>()
                .sqrt()
                * mesh.h;
            Ok(TaylorRow { t, remainder: r })
        })
        .collect()
}

/// Least-squares log-log slope of the Taylor remainders.
pub fn taylor_order(rows: &[TaylorRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.t.ln(), r.remainder.ln())).collect();
    loglog_slope(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let rows: Vec<ConvergenceRow> = [0.1, 0.05, 0.025]
            .iter()
            .map(|&h| ConvergenceRow { h, error: 3.0 * h * h })
            .collect();
        assert!((fitted_order(&rows) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn directions_are_zero_mean() {
        let part = MasterPartition::uniform(37, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let d = random_zero_mean_direction(&part, &mut rng);
            let mean: f64 = d.iter().sum::<f64>() / 37.0;
            assert!(mean.abs() < 1e-14);
            assert!((d.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 1.0).abs() < 1e-15);
        }
    }
}
