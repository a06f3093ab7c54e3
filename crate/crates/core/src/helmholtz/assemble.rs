use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{EdgeClass, Mesh};

/// Inputs of one boundary-value problem `(Δ + k²) u = F` with Dirichlet data
/// `g` on the left wall, homogeneous Neumann on the horizontal walls and
/// `∂u/∂n + α χ u = η` on the Robin wall.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub k: f64,
    pub alpha: Complex64,
    /// Control value on each Robin edge.
    pub chi_edges: Vec<f64>,
    /// Volume source per cell; `None` means zero.
    pub source: Option<Vec<Complex64>>,
    /// Dirichlet value at each Dirichlet edge midpoint.
    pub dirichlet: Vec<Complex64>,
    /// Robin data `η` per Robin edge.
    pub robin_data: Vec<Complex64>,
}

impl ProblemData {
    /// Homogeneous data (`F = g = η = 0`) for the given coefficients.
    pub fn new(mesh: &Mesh, k: f64, alpha: Complex64, chi_edges: Vec<f64>) -> Self {
        ProblemData {
            k,
            alpha,
            chi_edges,
            source: None,
            dirichlet: vec![Complex64::new(0.0, 0.0); mesh.dirichlet_count()],
            robin_data: vec![Complex64::new(0.0, 0.0); mesh.robin_count()],
        }
    }

    pub fn with_source(mut self, mesh: &Mesh, f: impl Fn(f64, f64) -> Complex64) -> Self {
        self.source = Some(
            (0..mesh.cell_count())
                .map(|c| {
                    let (x, y) = mesh.cell_center(c);
                    f(x, y)
                })
                .collect(),
        );
        self
    }

    /// Dirichlet data as a function of the arc parameter of the left wall.
    pub fn with_dirichlet(mut self, mesh: &Mesh, g: impl Fn(f64) -> Complex64) -> Self {
        self.dirichlet = mesh.dirichlet_edges().map(|e| g(e.param)).collect();
        self
    }

    pub fn with_robin_data(mut self, eta: Vec<Complex64>) -> Self {
        self.robin_data = eta;
        self
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if !(self.k > 0.0) || !self.k.is_finite() {
            return Err(Error::invalid(format!("wavenumber must be positive, got {}", self.k)));
        }
        if !(self.alpha.re > 0.0 && self.alpha.im < 0.0) {
            return Err(Error::Validation(format!(
                "absorption coefficient must have Re > 0 and Im < 0, got {}",
                self.alpha
            )));
        }
        if self.chi_edges.len() != mesh.robin_count() || self.robin_data.len() != mesh.robin_count() {
            return Err(Error::invalid("Robin edge data does not match the mesh"));
        }
        if self.dirichlet.len() != mesh.dirichlet_count() {
            return Err(Error::invalid("Dirichlet data does not match the mesh"));
        }
        if let Some(f) = &self.source {
            if f.len() != mesh.cell_count() {
                return Err(Error::invalid("volume source does not match the mesh"));
            }
        }
        if let Some(x) = self.chi_edges.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::invalid(format!("control values must lie in [0,1], got {x}")));
        }
        Ok(())
    }

    /// `α χ_e` for each Robin edge.
    pub fn robin_coefficients(&self) -> Vec<Complex64> {
        self.chi_edges.iter().map(|&c| self.alpha * c).collect()
    }
}

/// `1 / (1 + a h / 2)`, the weight that eliminates the ghost value of a Robin
/// edge with coefficient `a`.
#[inline]
pub(crate) fn robin_weight(a: Complex64, h: f64) -> Complex64 {
    (Complex64::new(1.0, 0.0) + a * (0.5 * h)).inv()
}

/// Diagonal contribution of a Robin edge: `-a / (h (1 + a h / 2))`.
#[inline]
pub(crate) fn robin_diagonal(a: Complex64, h: f64) -> Complex64 {
    -a * robin_weight(a, h) / h
}

/// Right-hand-side contribution of Robin data `η`: `-η / (h (1 + a h / 2))`.
#[inline]
pub(crate) fn robin_rhs(a: Complex64, eta: Complex64, h: f64) -> Complex64 {
    -eta * robin_weight(a, h) / h
}

/// Edge-midpoint value `(u_cell + η h / 2) / (1 + a h / 2)`, i.e. the average
/// of the cell value and its eliminated ghost.
#[inline]
pub(crate) fn robin_trace(a: Complex64, eta: Complex64, u_cell: Complex64, h: f64) -> Complex64 {
    (u_cell + eta * (0.5 * h)) * robin_weight(a, h)
}

/// Square sparse complex matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl SparseMatrix {
    /// Builds from unsorted per-row `(column, value)` lists.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = vec![];
        let mut vals = vec![];
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseMatrix { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i).find(|&(c, _)| c == j).map(|(_, v)| v).unwrap_or_default()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub(crate) fn add_to_diagonal(&mut self, i: usize, v: Complex64) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        let pos = self.cols[r.clone()]
            .iter()
            .position(|&c| c == i)
            .expect("diagonal entry present");
        self.vals[r.start + pos] += v;
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let mut d = vec![vec![Complex64::default(); self.n]; self.n];
        for (i, j, v) in self.triplets() {
            d[i][j] += v;
        }
        d
    }

    /// Largest `|A_ij - A_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).norm())
            .fold(0.0, f64::max)
    }
}

/// Assembled discrete problem.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<Complex64>,
}

/// Five-point operator `Δ_h + k²` with the three boundary closures folded
/// into the diagonal.
pub fn assemble_matrix(mesh: &Mesh, k: f64, robin_coeffs: &[Complex64]) -> SparseMatrix {
    let (nx, ny, h) = (mesh.nx, mesh.ny, mesh.h);
    let inv_h2 = 1.0 / (h * h);
    let off = Complex64::new(inv_h2, 0.0);
    let mut rows: Vec<Vec<(usize, Complex64)>> = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let c = mesh.index(i, j);
            let mut row = Vec::with_capacity(5);
            let mut diag = Complex64::new(k * k, 0.0);
            let mut link = |ii: usize, jj: usize| {
                row.push((mesh.index(ii, jj), off));
                diag -= off;
            };
            if i > 0 {
                link(i - 1, j);
            }
            if i + 1 < nx {
                link(i + 1, j);
            }
            if j > 0 {
                link(i, j - 1);
            }
            if j + 1 < ny {
                link(i, j + 1);
            }
            row.push((c, diag));
            rows.push(row);
        }
    }
    let mut m = SparseMatrix::from_rows(nx * ny, rows);

    let mut robin = 0;
    for e in mesh.boundary_edges() {
        match e.class {
            EdgeClass::Neumann => {}
            // ghost = 2 g - u_cell
            EdgeClass::Dirichlet => m.add_to_diagonal(e.cell, Complex64::new(-2.0 * inv_h2, 0.0)),
            EdgeClass::Robin => {
                m.add_to_diagonal(e.cell, robin_diagonal(robin_coeffs[robin], h));
                robin += 1;
            }
        }
    }
    m
}

/// Right-hand side for the given sources under the closures of
/// [`assemble_matrix`].
pub fn assemble_rhs(mesh: &Mesh, data: &ProblemData) -> Vec<Complex64> {
    let h = mesh.h;
    let inv_h2 = 1.0 / (h * h);
    let mut b = match &data.source {
        Some(f) => f.clone(),
        None => vec![Complex64::default(); mesh.cell_count()],
    };
    for (e, g) in mesh.dirichlet_edges().zip(&data.dirichlet) {
        b[e.cell] -= g * (2.0 * inv_h2);
    }
    for (k, e) in mesh.robin_edges().enumerate() {
        let a = data.alpha * data.chi_edges[k];
        b[e.cell] += robin_rhs(a, data.robin_data[k], h);
    }
    b
}

pub fn assemble(data: &ProblemData, mesh: &Mesh) -> Result<LinearSystem> {
    data.validate(mesh)?;
    Ok(LinearSystem {
        matrix: assemble_matrix(mesh, data.k, &data.robin_coefficients()),
        rhs: assemble_rhs(mesh, data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rows_have_at_most_four_neighbours() {
        let mesh = build_mesh(DomainSpec::default(), 0.125).unwrap();
        let m = assemble_matrix(&mesh, 3.0, &[c(1.0, -1.0); 8]);
        for i in 0..m.dim() {
            assert!(m.row(i).count() <= 5);
        }
        assert!(m.symmetry_defect() <= 1e-14);
    }

    #[test]
    fn zero_control_edge_is_neumann() {
        let mesh = build_mesh(DomainSpec::default(), 1.0 / 3.0).unwrap();
        let alpha = c(2.0, -0.5);
        let mut data = ProblemData::new(&mesh, 1.0, alpha, vec![1.0, 0.0, 1.0]);
        data.robin_data = vec![c(0.3, 0.1); 3];
        let sys = assemble(&data, &mesh).unwrap();
        let cell = mesh.robin_edge(1).cell;
        // interior-like diagonal: k² minus three links, no Robin term
        let h2 = mesh.h * mesh.h;
        assert!((sys.matrix.get(cell, cell) - c(1.0 - 3.0 / h2, 0.0)).norm() < 1e-12);
        // η still enters through the pure flux -η/h
        assert!((sys.rhs[cell] - c(-0.3, -0.1) / mesh.h).norm() < 1e-12);
    }

    #[test]
    fn validation_catches_mismatches() {
        let mesh = build_mesh(DomainSpec::default(), 0.25).unwrap();
        let data = ProblemData::new(&mesh, 1.0, c(1.0, -1.0), vec![0.5; 3]);
        assert!(assemble(&data, &mesh).is_err());
        let data = ProblemData::new(&mesh, 1.0, c(1.0, 1.0), vec![0.5; 4]);
        assert!(assemble(&data, &mesh).is_err());
        let data = ProblemData::new(&mesh, 1.0, c(1.0, -1.0), vec![1.5; 4]);
        assert!(assemble(&data, &mesh).is_err());
    }
}
