//! Sparse assembly and solve against an independently written dense
//! assembly with a hand-rolled dense LU.

use helm_absorb_core::geometry::{build_mesh, DomainSpec, Mesh};
use helm_absorb_core::helmholtz::{assemble, linear_solve, solve_direct, ProblemData};
use num_complex::Complex64;

#[path = "support/dense.rs"]
mod dense;

use dense::{dense_assemble, dense_lu_solve};

type C = Complex64;

fn setup(n: usize) -> (Mesh, ProblemData) {
    let mesh = build_mesh(DomainSpec::default(), 1.0 / n as f64).unwrap();
    let chi: Vec<f64> = (0..n).map(|j| [1.0, 0.3, 0.0, 0.75, 0.5][j % 5]).collect();
    let eta: Vec<C> = (0..n).map(|j| C::new(0.1 * j as f64, -0.2)).collect();
    let data = ProblemData::new(&mesh, 2.7, C::new(1.0, -1.0), chi)
        .with_source(&mesh, |x, y| C::new(x - y, x * y))
        .with_dirichlet(&mesh, |s| C::new((3.0 * s).cos(), s))
        .with_robin_data(eta);
    (mesh, data)
}

fn dense_of(data: &ProblemData, n: usize) -> (Vec<Vec<C>>, Vec<C>) {
    dense_assemble(
        n,
        data.k,
        data.alpha,
        &data.chi_edges,
        data.source.as_ref().unwrap(),
        &data.dirichlet,
        &data.robin_data,
    )
}

#[test]
fn assembly_matches_dense_oracle_entrywise() {
    for n in [3usize, 4, 6] {
        let (mesh, data) = setup(n);
        let sys = assemble(&data, &mesh).unwrap();
        let (a, b) = dense_of(&data, n);
        let dense = sys.matrix.to_dense();
        for r in 0..n * n {
            for c in 0..n * n {
                assert!(
                    (dense[r][c] - a[r][c]).norm() <= 1e-12 * a[r][c].norm().max(1.0),
                    "({r},{c})"
                );
            }
            assert!((sys.rhs[r] - b[r]).norm() <= 1e-12 * b[r].norm().max(1.0));
        }
    }
}

#[test]
fn solution_matches_dense_lu_on_4x4() {
    let (mesh, data) = setup(4);
    let u = solve_direct(&data, &mesh).unwrap();
    let (a, b) = dense_of(&data, 4);
    let x = dense_lu_solve(a, b);
    let diff: f64 = u
        .values
        .iter()
        .zip(&x)
        .map(|(p, q)| (p - q).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let norm: f64 = x.iter().map(|q| q.norm_sqr()).sum::<f64>().sqrt();
    assert!(diff <= 1e-12 * norm, "diff {diff:e}");
}

#[test]
fn constant_is_in_kernel_with_reflecting_walls() {
    let c0 = C::new(0.7, -0.4);
    let mesh = build_mesh(DomainSpec::default(), 1.0 / 3.0).unwrap();
    let data = ProblemData::new(&mesh, 1.0, C::new(1.0, -1.0), vec![0.0; 3])
        .with_source(&mesh, |_, _| c0)
        .with_dirichlet(&mesh, |_| c0);
    let sys = assemble(&data, &mesh).unwrap();
    let r = sys.matrix.matvec(&[c0; 9]);
    for (ri, bi) in r.iter().zip(&sys.rhs) {
        assert!((ri - bi).norm() < 1e-12);
    }
}

#[test]
fn identity_system_returns_rhs() {
    use helm_absorb_core::helmholtz::{Factorization, SparseMatrix};
    let n = 5;
    let rows = (0..n).map(|i| vec![(i, C::new(1.0, 0.0))]).collect();
    let m = SparseMatrix::from_rows(n, rows);
    let b: Vec<C> = (0..n).map(|i| C::new(i as f64, 1.0)).collect();
    assert_eq!(Factorization::new(m).unwrap().solve(&b).unwrap(), b);
}

#[test]
fn zero_data_gives_zero_field() {
    let mesh = build_mesh(DomainSpec::default(), 0.1).unwrap();
    let data = ProblemData::new(&mesh, 5.0, C::new(1.0, -1.0), vec![1.0; 10]);
    let u = solve_direct(&data, &mesh).unwrap();
    assert!(u.values.iter().all(|v| *v == C::new(0.0, 0.0)));
}

#[test]
fn matrix_is_complex_symmetric() {
    for n in [4usize, 9, 20] {
        let (mesh, data) = setup(n);
        let sys = assemble(&data, &mesh).unwrap();
        assert!(sys.matrix.symmetry_defect() <= 1e-14);
    }
}

#[test]
fn linear_solve_residual_at_200_hz() {
    use helm_absorb_core::helmholtz::{centered_gaussian, wavenumber};
    let mesh = build_mesh(DomainSpec::default(), 0.01).unwrap();
    let chi = (0..100).map(|j| if j < 50 { 1.0 } else { 0.0 }).collect();
    let data = ProblemData::new(&mesh, wavenumber(200.0, 340.0), C::new(1.0, -1.0), chi)
        .with_dirichlet(&mesh, |s| C::new(centered_gaussian(s, 1.0), 0.0));
    let sys = assemble(&data, &mesh).unwrap();
    let x = linear_solve(&sys).unwrap();
    let r = sys.matrix.matvec(&x);
    let res: f64 = r
        .iter()
        .zip(&sys.rhs)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let bn: f64 = sys.rhs.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    assert!(res / bn <= 1e-10);
}

#[test]
fn full_absorber_stays_finite_across_band() {
    use helm_absorb_core::helmholtz::{centered_gaussian, wavenumber};
    let mesh = build_mesh(DomainSpec::default(), 0.02).unwrap();
    for f in [20.0, 137.0, 340.0, 481.0, 777.0, 1000.0] {
        let data = ProblemData::new(&mesh, wavenumber(f, 340.0), C::new(1.0, -1.0), vec![1.0; 50])
            .with_dirichlet(&mesh, |s| C::new(centered_gaussian(s, 1.0), 0.0));
        let u = solve_direct(&data, &mesh).unwrap();
        assert!(u.is_finite() && u.l2_norm() < 1e6, "f={f}");
    }
}
