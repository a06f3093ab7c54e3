//! Acoustic energy functionals and their control gradients.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{accumulate_to_master, MasterPartition, Mesh};
use crate::helmholtz::ComplexField;

/// Weights of `J = A ∫|u|² + B ∫|∇u|² + C ∫_Γ |u|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights { a: 1.0, b: 0.0, c: 0.0 }
    }
}

impl EnergyWeights {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let w = EnergyWeights { a, b, c };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.a, self.b, self.c].iter().all(|x| *x >= 0.0 && x.is_finite());
        if !ok || self.a * self.a + self.b * self.b == 0.0 {
            return Err(Error::invalid(format!(
                "energy weights need A, B, C >= 0 and A² + B² > 0, got ({}, {}, {})",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }
}

/// Discrete gradient: centered differences inside, one-sided differences on
/// the first and last cell of each line. Uses cell values only.
pub fn apply_gradient(x: &[Complex64], mesh: &Mesh) -> (Vec<Complex64>, Vec<Complex64>) {
    let (nx, ny, h) = (mesh.nx, mesh.ny, mesh.h);
    let mut gx = vec![Complex64::default(); nx * ny];
    let mut gy = vec![Complex64::default(); nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            gx[c] = if i == 0 {
                (x[c + 1] - x[c]) / h
            } else if i == nx - 1 {
                (x[c] - x[c - 1]) / h
            } else {
                (x[c + 1] - x[c - 1]) / (2.0 * h)
            };
            gy[c] = if j == 0 {
                (x[c + nx] - x[c]) / h
            } else if j == ny - 1 {
                (x[c] - x[c - nx]) / h
            } else {
                (x[c + nx] - x[c - nx]) / (2.0 * h)
            };
        }
    }
    (gx, gy)
}

/// Transpose of [`apply_gradient`].
pub fn apply_gradient_transpose(gx: &[Complex64], gy: &[Complex64], mesh: &Mesh) -> Vec<Complex64> {
    let (nx, ny, h) = (mesh.nx, mesh.ny, mesh.h);
    let mut out = vec![Complex64::default(); nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            let (vx, vy) = (gx[c], gy[c]);
            if i == 0 {
                out[c + 1] += vx / h;
                out[c] -= vx / h;
            } else if i == nx - 1 {
                out[c] += vx / h;
                out[c - 1] -= vx / h;
            } else {
                out[c + 1] += vx / (2.0 * h);
                out[c - 1] -= vx / (2.0 * h);
            }
            if j == 0 {
                out[c + nx] += vy / h;
                out[c] -= vy / h;
            } else if j == ny - 1 {
                out[c] += vy / h;
                out[c - nx] -= vy / h;
            } else {
                out[c + nx] += vy / (2.0 * h);
                out[c - nx] -= vy / (2.0 * h);
            }
        }
    }
    out
}

pub fn energy_single(u: &ComplexField, mesh: &Mesh, w: &EnergyWeights) -> f64 {
    let h2 = mesh.h * mesh.h;
    let mut j = 0.0;
    if w.a != 0.0 {
        j += w.a * h2 * u.values.iter().map(|v| v.norm_sqr()).sum::<f64>();
    }
    if w.b != 0.0 {
        let (gx, gy) = apply_gradient(&u.values, mesh);
        j += w.b * h2 * gx.iter().chain(&gy).map(|v| v.norm_sqr()).sum::<f64>();
    }
    if w.c != 0.0 {
        j += w.c
            * mesh
                .robin_edges()
                .zip(&u.trace)
                .map(|(e, v)| v.norm_sqr() * e.measure)
                .sum::<f64>();
    }
    j
}

/// Sources of the adjoint problem for the discrete energy: the volume term
/// `-2A ū - 2B ∇ᵀ∇ ū` and the Robin data `2C ū_e`.
pub fn adjoint_source(u: &ComplexField, mesh: &Mesh, w: &EnergyWeights) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut vol: Vec<Complex64> = u.values.iter().map(|v| v.conj() * (-2.0 * w.a)).collect();
    if w.b != 0.0 {
        let (gx, gy) = apply_gradient(&u.values, mesh);
        let gtg = apply_gradient_transpose(&gx, &gy, mesh);
        for (s, g) in vol.iter_mut().zip(gtg) {
            *s -= g.conj() * (2.0 * w.b);
        }
    }
    let eta = u.trace.iter().map(|v| v.conj() * (2.0 * w.c)).collect();
    (vol, eta)
}

/// Derivative of an energy with respect to the per-segment control values.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(m: usize) -> Self {
        GradientVector(vec![0.0; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Directional derivative along a per-segment perturbation.
    pub fn dot(&self, h: &[f64]) -> f64 {
        self.0.iter().zip(h).map(|(g, h)| g * h).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Export with columns `segment,grad`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["segment", "grad"])?;
        for (k, g) in self.0.iter().enumerate() {
            w.write_record([k.to_string(), g.to_string()])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

/// Per-edge gradient density `-Re(α u_e p_e)`.
pub fn gradient_density(u: &ComplexField, p: &ComplexField, alpha: Complex64) -> Vec<f64> {
    u.trace
        .iter()
        .zip(&p.trace)
        .map(|(ue, pe)| -(alpha * ue * pe).re)
        .collect()
}

pub fn gradient_single(
    u: &ComplexField,
    p: &ComplexField,
    alpha: Complex64,
    mesh: &Mesh,
    part: &MasterPartition,
) -> Result<GradientVector> {
    if !u.matches(mesh) || !p.matches(mesh) {
        return Err(Error::invalid("fields do not live on the given mesh"));
    }
    accumulate_to_master(&gradient_density(u, p, alpha), mesh, part).map(GradientVector)
}

/// Composite trapezoid over increasing abscissae, summed left to right.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    }
    acc
}

/// Energies sampled over a frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub gradients: Option<Vec<GradientVector>>,
}

impl Spectrum {
    pub fn new(frequencies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if frequencies.len() != values.len() {
            return Err(Error::invalid("spectrum frequencies and values differ in length"));
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("spectrum frequencies must be strictly increasing"));
        }
        Ok(Spectrum {
            frequencies,
            values,
            gradients: None,
        })
    }

    pub fn with_gradients(mut self, gradients: Vec<GradientVector>) -> Result<Self> {
        if gradients.len() != self.frequencies.len() {
            return Err(Error::invalid("one gradient per frequency expected"));
        }
        self.gradients = Some(gradients);
        Ok(self)
    }

    /// Export with columns `f_hz,energy`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["f_hz", "energy"])?;
        for (f, v) in self.frequencies.iter().zip(&self.values) {
            w.write_record([f.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

/// Integral of the energy over the frequency range.
pub fn energy_total(spec: &Spectrum) -> Result<f64> {
    if spec.frequencies.len() < 2 {
        return Err(Error::invalid("the frequency integral needs at least two samples"));
    }
    Ok(trapezoid(&spec.frequencies, &spec.values))
}

/// Componentwise frequency integral of per-frequency gradients.
pub fn gradient_total(per_freq: &[GradientVector], frequencies: &[f64]) -> Result<GradientVector> {
    if per_freq.len() != frequencies.len() {
        return Err(Error::invalid(format!(
            "{} gradients for {} frequencies",
            per_freq.len(),
            frequencies.len()
        )));
    }
    if frequencies.len() < 2 {
        return Err(Error::invalid("the frequency integral needs at least two samples"));
    }
    let m = per_freq[0].len();
    if per_freq.iter().any(|g| g.len() != m) {
        return Err(Error::invalid("gradients differ in dimension"));
    }
    let mut out = vec![0.0; m];
    for i in 1..frequencies.len() {
        let w = 0.5 * (frequencies[i] - frequencies[i - 1]);
        for (k, o) in out.iter_mut().enumerate() {
            *o += w * (per_freq[i].0[k] + per_freq[i - 1].0[k]);
        }
    }
    Ok(GradientVector(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mesh, DomainSpec};
    use proptest::prelude::*;

    fn field(mesh: &Mesh, f: impl Fn(f64, f64) -> Complex64) -> ComplexField {
        let mut u = ComplexField::zeros(mesh);
        for c in 0..mesh.cell_count() {
            let (x, y) = mesh.cell_center(c);
            u.values[c] = f(x, y);
        }
        u
    }

    #[test]
    fn weights_contract() {
        assert!(EnergyWeights::new(0.0, 0.0, 1.0).is_err());
        assert!(EnergyWeights::new(-1.0, 1.0, 0.0).is_err());
        assert!(EnergyWeights::new(0.0, 1.0, 2.0).is_ok());
    }

    #[test]
    fn energy_of_simple_fields() {
        let mesh = build_mesh(DomainSpec::default(), 0.1).unwrap();
        let w = EnergyWeights::default();
        assert_eq!(energy_single(&ComplexField::zeros(&mesh), &mesh, &w), 0.0);
        let one = field(&mesh, |_, _| Complex64::new(1.0, 0.0));
        assert!((energy_single(&one, &mesh, &w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn energy_of_cosine_field_converges() {
        // ∫∫ cos²(πx) cos²(πy) = 1/4
        let errs: Vec<f64> = [20usize, 40, 80]
            .iter()
            .map(|&n| {
                let mesh = build_mesh(DomainSpec::default(), 1.0 / n as f64).unwrap();
                let u = field(&mesh, |x, y| {
                    Complex64::new((std::f64::consts::PI * x).cos() * (std::f64::consts::PI * y).cos(), 0.0)
                });
                (energy_single(&u, &mesh, &EnergyWeights::default()) - 0.25).abs()
            })
            .collect();
        assert!(errs[0] < 1e-2);
        assert!(errs[2] <= errs[0] / 10.0);
    }

    #[test]
    fn gradient_transpose_is_adjoint() {
        let mesh = build_mesh(DomainSpec::default(), 0.2).unwrap();
        let n = mesh.cell_count();
        let x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64 * 0.3, (i as f64).sin()))
            .collect();
        let gx: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new((i as f64).cos(), 0.1 * i as f64))
            .collect();
        let gy: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 / (1.0 + i as f64), -0.2)).collect();
        let (ax, ay) = apply_gradient(&x, &mesh);
        let lhs: Complex64 = ax.iter().zip(&gx).chain(ay.iter().zip(&gy)).map(|(a, b)| a * b).sum();
        let at = apply_gradient_transpose(&gx, &gy, &mesh);
        let rhs: Complex64 = x.iter().zip(&at).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn gradient_is_bilinear() {
        let mesh = build_mesh(DomainSpec::default(), 0.25).unwrap();
        let part = MasterPartition::uniform(2, 1.0).unwrap();
        let mut u = ComplexField::zeros(&mesh);
        let mut p = ComplexField::zeros(&mesh);
        u.trace = vec![
            Complex64::new(1.0, 0.5),
            Complex64::new(-0.2, 0.1),
            Complex64::new(0.3, 0.3),
            Complex64::new(0.0, 1.0),
        ];
        p.trace = vec![
            Complex64::new(0.5, 0.5),
            Complex64::new(1.0, 0.0),
            Complex64::new(-1.0, 0.2),
            Complex64::new(0.4, -0.4),
        ];
        let alpha = Complex64::new(1.0, -1.0);
        let g = gradient_single(&u, &p, alpha, &mesh, &part).unwrap();
        let g4 = gradient_single(&u.scaled(2.0), &p.scaled(2.0), alpha, &mesh, &part).unwrap();
        for (a, b) in g.0.iter().zip(&g4.0) {
            assert!((4.0 * a - b).abs() < 1e-14);
        }
        let zero = gradient_single(&ComplexField::zeros(&mesh), &p, alpha, &mesh, &part).unwrap();
        assert!(zero.0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn totals() {
        let f: Vec<f64> = (0..50).map(|i| 20.0 + 980.0 * i as f64 / 49.0).collect();
        let spec = Spectrum::new(f.clone(), vec![1.0; 50]).unwrap();
        assert!((energy_total(&spec).unwrap() - 980.0).abs() < 1e-10);

        let spec = Spectrum::new(vec![20.0, 510.0, 1000.0], vec![20.0, 510.0, 1000.0]).unwrap();
        assert_eq!(energy_total(&spec).unwrap(), 499800.0);

        assert!(energy_total(&Spectrum::new(vec![20.0], vec![1.0]).unwrap()).is_err());
        assert!(Spectrum::new(vec![20.0, 10.0], vec![1.0, 1.0]).is_err());

        let g = GradientVector(vec![1.0, -2.0]);
        let tot = gradient_total(&vec![g.clone(); 50], &f).unwrap();
        assert!((tot.0[0] - 980.0).abs() < 1e-10 && (tot.0[1] + 1960.0).abs() < 1e-10);

        let g1 = GradientVector(vec![1.0, 2.0]);
        let g2 = GradientVector(vec![3.0, -4.0]);
        let tot = gradient_total(&[g1, g2], &[100.0, 300.0]).unwrap();
        assert_eq!(tot.0, vec![400.0, -200.0]);
        assert!(gradient_total(std::slice::from_ref(&g), &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn total_is_monotone(base in proptest::collection::vec(0.0f64..10.0, 2..30), bump in proptest::collection::vec(0.0f64..1.0, 30)) {
            let n = base.len();
            let f: Vec<f64> = (0..n).map(|i| 20.0 + 10.0 * i as f64).collect();
            let hi: Vec<f64> = base.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let lo = energy_total(&Spectrum::new(f.clone(), base).unwrap()).unwrap();
            let up = energy_total(&Spectrum::new(f, hi).unwrap()).unwrap();
            prop_assert!(lo <= up);
        }
    }
}
