//! Cell-centered grid over a rectangle with the boundary layout used
//! throughout: Dirichlet on the left wall, Neumann on the bottom and top
//! walls, Robin (the controllable absorber) on the right wall.
//!
//! The control lives on a [`MasterPartition`] of the Robin wall that does not
//! depend on the grid, so distributions and gradients computed on grids of
//! different resolution can be combined.

use crate::error::{Error, Result};

/// Tolerance used when snapping reciprocals of steps to integers.
const SNAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub width: f64,
    pub height: f64,
}

impl Default for DomainSpec {
    fn default() -> Self {
        DomainSpec {
            width: 1.0,
            height: 1.0,
        }
    }
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) || !self.width.is_finite() || !self.height.is_finite() {
            return Err(Error::invalid(format!(
                "domain dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Measure of the Robin wall.
    pub fn robin_length(&self) -> f64 {
        self.height
    }
}

/// Which wall a boundary edge sits on, named by outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    West,
    East,
    South,
    North,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    Dirichlet,
    Neumann,
    Robin,
}

impl Side {
    fn class(self) -> EdgeClass {
        match self {
            Side::West => EdgeClass::Dirichlet,
            Side::East => EdgeClass::Robin,
            Side::South | Side::North => EdgeClass::Neumann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub cell: usize,
    pub side: Side,
    pub class: EdgeClass,
    pub midpoint: (f64, f64),
    /// Arc parameter along the wall: `y` on the vertical walls, `x` on the
    /// horizontal ones.
    pub param: f64,
    pub measure: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub spec: DomainSpec,
    edges: Vec<BoundaryEdge>,
    robin: Vec<usize>,
    dirichlet: Vec<usize>,
}

impl Mesh {
    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, cell: usize) -> (f64, f64) {
        let i = cell % self.nx;
        let j = cell / self.nx;
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.edges
    }

    /// Robin edges ordered by increasing arc parameter.
    pub fn robin_edges(&self) -> impl ExactSizeIterator<Item = &BoundaryEdge> + '_ {
        self.robin.iter().map(move |&e| &self.edges[e])
    }

    pub fn robin_count(&self) -> usize {
        self.robin.len()
    }

    pub fn robin_edge(&self, k: usize) -> &BoundaryEdge {
        &self.edges[self.robin[k]]
    }

    /// Dirichlet edges ordered by increasing arc parameter.
    pub fn dirichlet_edges(&self) -> impl ExactSizeIterator<Item = &BoundaryEdge> + '_ {
        self.dirichlet.iter().map(move |&e| &self.edges[e])
    }

    pub fn dirichlet_count(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn robin_measure(&self) -> f64 {
        self.robin_edges().map(|e| e.measure).sum()
    }
}

/// Grid step for a frequency: `min(c/f, minlen) / divisor`, snapped down so
/// that `1/h` is an integer.
pub fn mesh_step(f: f64, c: f64, minlen: f64, divisor: u32) -> Result<f64> {
    if !(f > 0.0) || !(c > 0.0) || !(minlen > 0.0) || divisor == 0 {
        return Err(Error::invalid(format!(
            "mesh_step needs f, c, minlen > 0 and divisor >= 1 (got f={f}, c={c}, minlen={minlen}, divisor={divisor})"
        )));
    }
    let wavelength = c / f;
    let raw = wavelength.min(minlen) / f64::from(divisor);
    let n = (1.0 / raw - SNAP_TOL).ceil();
    Ok(1.0 / n)
}

fn cells_along(len: f64, h: f64) -> Result<usize> {
    let q = len / h;
    let n = q.round();
    if (q - n).abs() > SNAP_TOL * q.max(1.0) || n < 1.0 {
        return Err(Error::invalid(format!(
            "step {h} does not tile length {len} (ratio {q})"
        )));
    }
    Ok(n as usize)
}

pub fn build_mesh(spec: DomainSpec, h: f64) -> Result<Mesh> {
    spec.validate()?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("mesh step must be positive, got {h}")));
    }
    let nx = cells_along(spec.width, h)?;
    let ny = cells_along(spec.height, h)?;
    if nx < 3 || ny < 3 {
        return Err(Error::invalid(format!(
            "mesh needs at least 3 cells per direction, got {nx}x{ny}"
        )));
    }

    let mut edges = Vec::with_capacity(2 * (nx + ny));
    let mut push = |cell: usize, side: Side, midpoint: (f64, f64), param: f64| {
        edges.push(BoundaryEdge {
            cell,
            side,
            class: side.class(),
            midpoint,
            param,
            measure: h,
        });
    };
    for j in 0..ny {
        let y = (j as f64 + 0.5) * h;
        push(j * nx, Side::West, (0.0, y), y);
    }
    for j in 0..ny {
        let y = (j as f64 + 0.5) * h;
        push(j * nx + nx - 1, Side::East, (spec.width, y), y);
    }
    for i in 0..nx {
        let x = (i as f64 + 0.5) * h;
        push(i, Side::South, (x, 0.0), x);
    }
    for i in 0..nx {
        let x = (i as f64 + 0.5) * h;
        push((ny - 1) * nx + i, Side::North, (x, spec.height), x);
    }

    let robin = (0..edges.len())
        .filter(|&e| edges[e].class == EdgeClass::Robin)
        .collect();
    let dirichlet = (0..edges.len())
        .filter(|&e| edges[e].class == EdgeClass::Dirichlet)
        .collect();
    Ok(Mesh {
        nx,
        ny,
        h,
        spec,
        edges,
        robin,
        dirichlet,
    })
}

/// Frequency-independent segmentation of the Robin wall on which the control
/// is piecewise constant.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterPartition {
    bounds: Vec<f64>,
}

impl MasterPartition {
    /// `m` equal segments covering `[0, length]`.
    pub fn uniform(m: usize, length: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("partition needs at least one segment"));
        }
        if !(length > 0.0) {
            return Err(Error::invalid(format!(
                "partition length must be positive, got {length}"
            )));
        }
        let bounds = (0..=m).map(|k| length * k as f64 / m as f64).collect();
        Ok(MasterPartition { bounds })
    }

    pub fn from_bounds(bounds: Vec<f64>) -> Result<Self> {
        if bounds.len() < 2 {
            return Err(Error::invalid("partition needs at least two bounds"));
        }
        if bounds[0] != 0.0 {
            return Err(Error::invalid(format!("partition must start at 0, got {}", bounds[0])));
        }
        if bounds.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("partition bounds must be strictly increasing"));
        }
        Ok(MasterPartition { bounds })
    }

    pub fn len(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn total_length(&self) -> f64 {
        self.bounds[self.bounds.len() - 1]
    }

    pub fn segment_length(&self, k: usize) -> f64 {
        self.bounds[k + 1] - self.bounds[k]
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.bounds.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Segment containing arc parameter `t`. A parameter sitting exactly on an
    /// interior bound belongs to the segment below it.
    pub fn segment_of(&self, t: f64) -> usize {
        let m = self.len();
        let tol = 1e-12 * self.total_length();
        // first k with t <= upper bound of segment k
        let k = self.bounds[1..].partition_point(|&b| b + tol < t);
        k.min(m - 1)
    }

    /// Segment index of every Robin edge of `mesh`.
    pub fn edge_segments(&self, mesh: &Mesh) -> Vec<usize> {
        mesh.robin_edges().map(|e| self.segment_of(e.param)).collect()
    }
}

/// Transfers per-segment values to the Robin edges of `mesh` by midpoint
/// lookup.
pub fn sample_on_edges(values: &[f64], part: &MasterPartition, mesh: &Mesh) -> Vec<f64> {
    debug_assert_eq!(values.len(), part.len());
    mesh.robin_edges().map(|e| values[part.segment_of(e.param)]).collect()
}

/// Adjoint of [`sample_on_edges`] under the measure-weighted pairings:
/// `s_k = sum over edges e in segment k of v_e * mu_e`.
pub fn accumulate_to_master(edge_values: &[f64], mesh: &Mesh, part: &MasterPartition) -> Result<Vec<f64>> {
    if edge_values.len() != mesh.robin_count() {
        return Err(Error::invalid(format!(
            "expected {} Robin edge values, got {}",
            mesh.robin_count(),
            edge_values.len()
        )));
    }
    let mut out = vec![0.0; part.len()];
    for (e, v) in mesh.robin_edges().zip(edge_values) {
        out[part.segment_of(e.param)] += v * e.measure;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mesh_step_examples() {
        assert_eq!(mesh_step(1000.0, 340.0, 0.1, 80).unwrap(), 1.0 / 800.0);
        assert_eq!(mesh_step(20.0, 340.0, 0.1, 80).unwrap(), 1.0 / 800.0);
        assert_eq!(mesh_step(3400.0, 340.0, 1.0, 10).unwrap(), 1.0 / 100.0);
    }

    #[test]
    fn mesh_step_rejects_bad_input() {
        assert!(mesh_step(0.0, 340.0, 0.1, 80).is_err());
        assert!(mesh_step(100.0, -1.0, 0.1, 80).is_err());
        assert!(mesh_step(100.0, 340.0, 0.0, 80).is_err());
        assert!(mesh_step(100.0, 340.0, 0.1, 0).is_err());
    }

    #[test]
    fn mesh_step_monotone() {
        let mut prev = f64::INFINITY;
        for f in (1..200).map(|i| i as f64 * 50.0) {
            let h = mesh_step(f, 340.0, 0.1, 20).unwrap();
            assert!(h <= prev);
            prev = h;
        }
        let mut prev = f64::INFINITY;
        for l in (1..50).rev().map(|i| i as f64 * 0.02) {
            let h = mesh_step(200.0, 340.0, l, 20).unwrap();
            assert!(h <= prev);
            prev = h;
        }
    }

    #[test]
    fn quarter_mesh() {
        let mesh = build_mesh(DomainSpec::default(), 0.25).unwrap();
        assert_eq!(mesh.cell_count(), 16);
        assert_eq!(mesh.robin_count(), 4);
        assert!(mesh.robin_edges().all(|e| e.measure == 0.25));
        assert_eq!(mesh.robin_measure(), 1.0);
        assert_eq!(mesh.boundary_edges().len(), 16);
    }

    #[test]
    fn third_mesh_midpoints() {
        let mesh = build_mesh(DomainSpec::default(), 1.0 / 3.0).unwrap();
        assert_eq!(mesh.cell_count(), 9);
        let ys: Vec<f64> = mesh.robin_edges().map(|e| e.midpoint.1).collect();
        for (y, want) in ys.iter().zip([1.0 / 6.0, 0.5, 5.0 / 6.0]) {
            assert!((y - want).abs() < 1e-15);
        }
        assert!(mesh.robin_edges().all(|e| e.midpoint.0 == 1.0));
    }

    #[test]
    fn non_dividing_step_rejected() {
        assert!(build_mesh(DomainSpec::default(), 0.3).is_err());
        assert!(build_mesh(DomainSpec::default(), 0.5).is_err());
    }

    #[test]
    fn edge_classes() {
        let mesh = build_mesh(DomainSpec::default(), 0.125).unwrap();
        for e in mesh.boundary_edges() {
            let (x, y) = e.midpoint;
            let want = if x == 0.0 {
                EdgeClass::Dirichlet
            } else if x == 1.0 {
                EdgeClass::Robin
            } else {
                assert!(y == 0.0 || y == 1.0);
                EdgeClass::Neumann
            };
            assert_eq!(e.class, want);
        }
        assert_eq!(mesh.dirichlet_count(), 8);
    }

    #[test]
    fn sampling_examples() {
        let mesh = build_mesh(DomainSpec::default(), 0.25).unwrap();
        let p2 = MasterPartition::uniform(2, 1.0).unwrap();
        assert_eq!(sample_on_edges(&[1.0, 0.0], &p2, &mesh), vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(sample_on_edges(&[0.5, 0.5], &p2, &mesh), vec![0.5; 4]);

        let p10 = MasterPartition::uniform(10, 1.0).unwrap();
        assert_eq!(p10.segment_of(0.35), 3);
        // exactly on a bound: lower segment
        assert_eq!(p10.segment_of(0.3), 2);
        assert_eq!(p10.segment_of(0.0), 0);
        assert_eq!(p10.segment_of(1.0), 9);
    }

    #[test]
    fn accumulate_examples() {
        let mesh = build_mesh(DomainSpec::default(), 0.25).unwrap();
        let p1 = MasterPartition::uniform(1, 1.0).unwrap();
        assert_eq!(accumulate_to_master(&[1.0; 4], &mesh, &p1).unwrap(), vec![1.0]);
        let p2 = MasterPartition::uniform(2, 1.0).unwrap();
        let s = accumulate_to_master(&[1.0, 1.0, 0.0, 0.0], &mesh, &p2).unwrap();
        assert_eq!(s, vec![0.5, 0.0]);
        assert!(accumulate_to_master(&[1.0; 3], &mesh, &p2).is_err());
    }

    #[test]
    fn constant_round_trip_gives_lengths() {
        let mesh = build_mesh(DomainSpec::default(), 0.01).unwrap();
        let part = MasterPartition::uniform(20, 1.0).unwrap();
        let ones = sample_on_edges(&[1.0; 20], &part, &mesh);
        let s = accumulate_to_master(&ones, &mesh, &part).unwrap();
        for (a, b) in s.iter().zip(part.lengths()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn robin_measure_is_wall_length(n in 3usize..400) {
            let mesh = build_mesh(DomainSpec::default(), 1.0 / n as f64).unwrap();
            prop_assert!((mesh.robin_measure() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn transfer_duality(
            n in 3usize..120,
            m in 1usize..30,
            seed_v in proptest::collection::vec(-1.0f64..1.0, 120),
            seed_c in proptest::collection::vec(0.0f64..1.0, 30),
        ) {
            let mesh = build_mesh(DomainSpec::default(), 1.0 / n as f64).unwrap();
            let part = MasterPartition::uniform(m, 1.0).unwrap();
            let v = &seed_v[..n];
            let chi = &seed_c[..m];
            let s = accumulate_to_master(v, &mesh, &part).unwrap();
            let lhs: f64 = s.iter().zip(chi).map(|(a, b)| a * b).sum();
            let sampled = sample_on_edges(chi, &part, &mesh);
            let rhs: f64 = mesh.robin_edges().zip(v).zip(&sampled)
                .map(|((e, v), c)| v * e.measure * c).sum();
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }
    }
}
