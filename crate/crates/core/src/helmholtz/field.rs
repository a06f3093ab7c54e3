use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::Mesh;

/// Cell-centered complex grid function plus its reconstructed values at the
/// Robin edge midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub values: Vec<Complex64>,
    /// Edge-midpoint values on the Robin wall, ordered like
    /// [`Mesh::robin_edges`].
    pub trace: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(mesh: &Mesh) -> Self {
        ComplexField {
            nx: mesh.nx,
            ny: mesh.ny,
            h: mesh.h,
            values: vec![Complex64::default(); mesh.cell_count()],
            trace: vec![Complex64::default(); mesh.robin_count()],
        }
    }

    pub fn matches(&self, mesh: &Mesh) -> bool {
        self.nx == mesh.nx && self.ny == mesh.ny && self.h == mesh.h
    }

    /// Discrete L² norm `sqrt(h² Σ |u|²)`.
    pub fn l2_norm(&self) -> f64 {
        (self.h * self.h * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        ComplexField {
            values: self.values.iter().map(|v| v * s).collect(),
            trace: self.trace.iter().map(|v| v * s).collect(),
            ..*self
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .chain(&self.trace)
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Grid export with columns `i,j,x,y,re_u,im_u,abs_u`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "x", "y", "re_u", "im_u", "abs_u"])?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let u = self.values[j * self.nx + i];
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    ((i as f64 + 0.5) * self.h).to_string(),
                    ((j as f64 + 0.5) * self.h).to_string(),
                    u.re.to_string(),
                    u.im.to_string(),
                    u.norm().to_string(),
                ])?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}
