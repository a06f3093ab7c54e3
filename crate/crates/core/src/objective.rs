//! Energy objectives over one frequency or a frequency band, with their
//! gradients with respect to the per-segment control.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{
    energy_single, energy_total, gradient_single, gradient_total, EnergyWeights, GradientVector, Spectrum,
};
use crate::error::{Error, Result};
use crate::geometry::{
    accumulate_to_master, build_mesh, mesh_step, sample_on_edges, DomainSpec, MasterPartition, Mesh,
};
use crate::helmholtz::{centered_gaussian, wavenumber, ComplexField, CondensedOperator, HelmholtzSolver, ProblemData};
use crate::material::AbsorptionModel;

pub const SPEED_OF_SOUND: f64 = 340.0;

/// Physical and discretization parameters shared by every frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    /// Wave speed in m/s.
    pub c: f64,
    pub absorption: AbsorptionModel,
    /// Amplitude of the Gaussian Dirichlet source.
    pub amplitude: f64,
    pub weights: EnergyWeights,
    pub divisor: u32,
    /// Lower bound on reflective runs; also the length scale of the mesh.
    pub lmin: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            domain: DomainSpec::default(),
            c: SPEED_OF_SOUND,
            absorption: AbsorptionModel::default(),
            amplitude: 1.0,
            weights: EnergyWeights::default(),
            divisor: 20,
            lmin: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrequencyGrid {
    Single(f64),
    /// `count` uniformly spaced frequencies including both ends.
    Range {
        f_min: f64,
        f_max: f64,
        count: usize,
    },
}

impl FrequencyGrid {
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        match *self {
            FrequencyGrid::Single(f) if f > 0.0 && f.is_finite() => Ok(vec![f]),
            FrequencyGrid::Single(f) => Err(Error::invalid(format!("frequency must be positive, got {f}"))),
            FrequencyGrid::Range { f_min, f_max, count } => {
                if count < 2 || !(f_min > 0.0) || !(f_max > f_min) {
                    return Err(Error::invalid(format!(
                        "frequency range needs 0 < f_min < f_max and count >= 2, got [{f_min}, {f_max}] x {count}"
                    )));
                }
                let step = (f_max - f_min) / (count - 1) as f64;
                Ok((0..count)
                    .map(|i| if i + 1 == count { f_max } else { f_min + step * i as f64 })
                    .collect())
            }
        }
    }
}

/// How each evaluation reaches the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    /// Assemble and factorize at every evaluation.
    Full,
    /// Precompute a boundary-condensed operator per frequency.
    Condensed,
}

struct FrequencyProblem {
    f: f64,
    mesh: Arc<Mesh>,
    data: ProblemData,
    condensed: Option<CondensedOperator>,
}

/// Objective value, its gradient and the per-frequency energies behind them.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Option<GradientVector>,
    pub spectrum: Spectrum,
}

/// `J(f₀, χ)` for a single frequency, or the trapezoidal integral of
/// `J(f, χ)` over a band.
pub struct Objective {
    spec: ProblemSpec,
    partition: MasterPartition,
    route: Route,
    problems: Vec<FrequencyProblem>,
    pool: Option<rayon::ThreadPool>,
}

impl std::fmt::Debug for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Objective")
            .field("frequencies", &self.frequencies())
            .field("segments", &self.partition.len())
            .field("route", &self.route)
            .finish()
    }
}

impl Objective {
    /// Builds meshes and, for the condensed route, the reduced operators.
    /// `jobs = 0` uses rayon's default thread count.
    pub fn new(
        spec: ProblemSpec,
        grid: FrequencyGrid,
        partition: MasterPartition,
        route: Route,
        jobs: usize,
    ) -> Result<Self> {
        spec.weights.validate()?;
        let freqs = grid.frequencies()?;
        if (partition.total_length() - spec.domain.robin_length()).abs() > 1e-9 * spec.domain.robin_length() {
            return Err(Error::invalid("partition does not cover the Robin wall"));
        }
        let pool = if jobs == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(jobs)
                    .build()
                    .map_err(|e| Error::Internal(format!("thread pool: {e}")))?,
            )
        };

        let mut meshes: Vec<Arc<Mesh>> = Vec::new();
        let mut setups = Vec::with_capacity(freqs.len());
        for &f in &freqs {
            let alpha = spec.absorption.alpha_at(f)?;
            let h = mesh_step(f, spec.c, spec.lmin, spec.divisor)?;
            let mesh = match meshes.iter().find(|m| m.h == h) {
                Some(m) => m.clone(),
                None => {
                    let m = Arc::new(build_mesh(spec.domain, h)?);
                    meshes.push(m.clone());
                    m
                }
            };
            let amplitude = spec.amplitude;
            let data = ProblemData::new(&mesh, wavenumber(f, spec.c), alpha, vec![1.0; mesh.robin_count()])
                .with_dirichlet(&mesh, |s| Complex64::new(centered_gaussian(s, amplitude), 0.0));
            setups.push((f, mesh, data));
        }

        let weights = spec.weights;
        let build = |(f, mesh, data): (f64, Arc<Mesh>, ProblemData)| -> Result<FrequencyProblem> {
            let condensed = match route {
                Route::Condensed => {
                    Some(CondensedOperator::build(&mesh, &data, weights).map_err(|e| e.at_frequency(f))?)
                }
                Route::Full => None,
            };
            Ok(FrequencyProblem {
                f,
                mesh,
                data,
                condensed,
            })
        };
        let problems = run_ordered(pool.as_ref(), setups, build)?;
        log::debug!("objective ready: {} frequencies, route {route:?}", problems.len());
        Ok(Objective {
            spec,
            partition,
            route,
            problems,
            pool,
        })
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn partition(&self) -> &MasterPartition {
        &self.partition
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.problems.iter().map(|p| p.f).collect()
    }

    pub fn dimension(&self) -> usize {
        self.partition.len()
    }

    pub fn evaluate(&self, chi: &[f64], with_gradient: bool) -> Result<Evaluation> {
        if chi.len() != self.partition.len() {
            return Err(Error::invalid(format!(
                "{} control values for {} segments",
                chi.len(),
                self.partition.len()
            )));
        }
        if let Some(x) = chi.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::invalid(format!("control values must lie in [0,1], got {x}")));
        }
        let part = &self.partition;
        let weights = self.spec.weights;
        let per_freq = run_ordered(
            self.pool.as_ref(),
            self.problems.iter().collect(),
            |p: &FrequencyProblem| {
                {
                    let chi_edges = sample_on_edges(chi, part, &p.mesh);
                    let out = match &p.condensed {
                        Some(op) => {
                            let ev = op.evaluate(&chi_edges, with_gradient)?;
                            let g = match ev.density {
                                Some(d) => Some(GradientVector(accumulate_to_master(&d, &p.mesh, part)?)),
                                None => None,
                            };
                            (ev.energy, g)
                        }
                        None => {
                            let data = ProblemData {
                                chi_edges,
                                ..p.data.clone()
                            };
                            let solver = HelmholtzSolver::new(&p.mesh, data)?;
                            let u = solver.direct()?;
                            let j = energy_single(&u, &p.mesh, &weights);
                            let g = if with_gradient {
                                let adj = solver.adjoint(&u, &weights)?;
                                Some(gradient_single(&u, &adj, p.data.alpha, &p.mesh, part)?)
                            } else {
                                None
                            };
                            (j, g)
                        }
                    };
                    Ok::<_, Error>(out)
                }
                .map_err(|e| e.at_frequency(p.f))
            },
        )?;

        let freqs = self.frequencies();
        let (values, grads): (Vec<f64>, Vec<Option<GradientVector>>) = per_freq.into_iter().unzip();
        let mut spectrum = Spectrum::new(freqs.clone(), values)?;
        let single = freqs.len() == 1;
        let objective = if single {
            spectrum.values[0]
        } else {
            energy_total(&spectrum)?
        };
        let gradient = if with_gradient {
            let grads: Vec<GradientVector> = grads.into_iter().map(|g| g.expect("gradient requested")).collect();
            let total = if single {
                grads[0].clone()
            } else {
                gradient_total(&grads, &freqs)?
            };
            spectrum = spectrum.with_gradients(grads)?;
            Some(total)
        } else {
            None
        };
        Ok(Evaluation {
            objective,
            gradient,
            spectrum,
        })
    }

    /// Direct field at the `index`-th frequency, solved on the full system.
    pub fn field(&self, index: usize, chi: &[f64]) -> Result<(f64, ComplexField)> {
        let p = self
            .problems
            .get(index)
            .ok_or_else(|| Error::invalid(format!("no frequency with index {index}")))?;
        let data = ProblemData {
            chi_edges: sample_on_edges(chi, &self.partition, &p.mesh),
            ..p.data.clone()
        };
        let u = HelmholtzSolver::new(&p.mesh, data)?
            .direct()
            .map_err(|e| e.at_frequency(p.f))?;
        Ok((p.f, u))
    }
}

/// Maps `f` over `items` on the pool, keeping input order; the first error
/// in input order wins.
fn run_ordered<T, U, F>(pool: Option<&rayon::ThreadPool>, items: Vec<T>, f: F) -> Result<Vec<U>>
where
    T: Send,
    U: Send,
    F: Fn(T) -> Result<U> + Sync + Send,
{
    match pool {
        None => items.into_iter().map(f).collect(),
        Some(pool) => pool.install(|| {
            let out: Vec<Result<U>> = items.into_par_iter().map(f).collect();
            out.into_iter().collect()
        }),
    }
}
