//! Shared fixtures for the benchmarks in `benches/`.

use helm_absorb_core::helmholtz::{centered_gaussian, wavenumber};
use helm_absorb_core::{build_mesh, mesh_step, DomainSpec, Mesh, ProblemData};
use num_complex::Complex64;

/// Desk-scale mesh and data at `f` Hz with the full absorber.
pub fn desk_problem(f: f64) -> (Mesh, ProblemData) {
    let h = mesh_step(f, 340.0, 0.1, 20).expect("valid mesh step");
    let mesh = build_mesh(DomainSpec::default(), h).expect("valid mesh");
    let data = ProblemData::new(
        &mesh,
        wavenumber(f, 340.0),
        Complex64::new(1.0, -1.0),
        vec![1.0; mesh.robin_count()],
    )
    .with_dirichlet(&mesh, |s| Complex64::new(centered_gaussian(s, 1.0), 0.0));
    (mesh, data)
}

/// Alternating pattern with ten bands on `m` segments.
pub fn banded(m: usize) -> Vec<f64> {
    (0..m)
        .map(|k| if (k * 10 / m).is_multiple_of(2) { 1.0 } else { 0.0 })
        .collect()
}
