//! Optimal placement of absorbing material on the wall of a 2D acoustic
//! cavity, driven by the Helmholtz equation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descent;
pub mod energy;
pub mod error;
pub mod evolution;
pub mod geometry;
pub mod helmholtz;
pub mod material;
pub mod objective;
pub mod verify;

pub use descent::{descend, DescentConfig, DescentOutcome, DescentReport, StopReason};
pub use energy::{
    energy_single, energy_total, gradient_single, gradient_total, EnergyWeights, GradientVector, Spectrum,
};
pub use error::{Error, Result};
pub use evolution::{cma_optimize, CmaConfig, CmaOutcome, CmaReport};
pub use geometry::{build_mesh, mesh_step, DomainSpec, MasterPartition, Mesh};
pub use helmholtz::{ComplexField, ProblemData};
pub use material::{AbsorptionModel, MaterialDistribution};
pub use objective::{FrequencyGrid, Objective, ProblemSpec, Route};
