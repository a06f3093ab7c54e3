//! Covariance matrix adaptation evolution strategy, used as a gradient-free
//! baseline over hard distributions.

use std::collections::HashMap;
use std::path::Path;

use faer::{Mat, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MasterPartition;
use crate::material::{finalize_hard, project_sigmoid, MaterialDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    pub dimension: usize,
    pub population: usize,
    pub sigma0: f64,
    pub max_generations: usize,
    pub seed: u64,
    pub beta: f64,
    /// Minimum reflective run length applied to every candidate.
    pub lmin: Option<f64>,
}

impl CmaConfig {
    /// Standard population `4 + ⌊3 ln m⌋`, `σ₀ = 0.3`.
    pub fn new(dimension: usize, beta: f64) -> Self {
        CmaConfig {
            dimension,
            population: default_population(dimension),
            sigma0: 0.3,
            max_generations: 300,
            seed: 0,
            beta,
            lmin: Some(0.1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::invalid("CMA-ES dimension must be positive"));
        }
        if self.population < 4 {
            return Err(Error::invalid(format!(
                "population must be at least 4, got {}",
                self.population
            )));
        }
        if !(self.sigma0 > 0.0) || !self.sigma0.is_finite() {
            return Err(Error::invalid(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        if self.max_generations == 0 {
            return Err(Error::invalid("max_generations must be at least 1"));
        }
        Ok(())
    }
}

pub fn default_population(dimension: usize) -> usize {
    4 + (3.0 * (dimension.max(1) as f64).ln()).floor() as usize
}

/// Strategy constants derived from the dimension and population.
#[derive(Debug, Clone)]
struct Params {
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Params {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Params {
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c1,
            c_mu,
            chi_n,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: Vec<f64>,
    pub sigma: f64,
    /// Covariance matrix `C`.
    pub cov: Mat<f64>,
    /// Eigenvectors of `C` (columns).
    basis: Mat<f64>,
    /// Square roots of the eigenvalues of `C`.
    scales: Vec<f64>,
    pub p_sigma: Vec<f64>,
    pub p_c: Vec<f64>,
    pub generation: usize,
    population: usize,
    params: Params,
    rng: ChaCha8Rng,
}

impl CmaState {
    pub fn new(cfg: &CmaConfig, mean: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.dimension;
        if mean.len() != n {
            return Err(Error::invalid(format!(
                "initial mean has {} entries, expected {n}",
                mean.len()
            )));
        }
        Ok(CmaState {
            mean,
            sigma: cfg.sigma0,
            cov: Mat::identity(n, n),
            basis: Mat::identity(n, n),
            scales: vec![1.0; n],
            p_sigma: vec![0.0; n],
            p_c: vec![0.0; n],
            generation: 0,
            population: cfg.population,
            params: Params::new(n, cfg.population),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    /// Replaces the covariance, re-conditioning it if needed.
    pub fn set_covariance(&mut self, cov: Mat<f64>) -> Result<()> {
        let n = self.dimension();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::invalid("covariance has the wrong shape"));
        }
        self.cov = cov;
        self.decompose()
    }

    fn decompose(&mut self) -> Result<()> {
        let n = self.dimension();
        // enforce exact symmetry before the eigensolver
        for i in 0..n {
            for j in 0..i {
                let v = 0.5 * (self.cov[(i, j)] + self.cov[(j, i)]);
                self.cov[(i, j)] = v;
                self.cov[(j, i)] = v;
            }
        }
        for attempt in 0..2 {
            let evd = self
                .cov
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Internal(format!("covariance eigendecomposition: {e:?}")));
            let evd = match evd {
                Ok(e) => e,
                Err(e) if attempt == 0 => {
                    log::warn!("{e}; re-conditioning");
                    self.recondition(1e-14);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let eig: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i]).collect();
            let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(max > 0.0) || !max.is_finite() {
                return Err(Error::Internal("covariance matrix lost positive definiteness".into()));
            }
            if min < 1e-14 * max {
                if attempt == 0 {
                    self.recondition(1e-14);
                    continue;
                }
                return Err(Error::Internal("covariance matrix could not be re-conditioned".into()));
            }
            self.basis = evd.U().to_owned();
            self.scales = eig.iter().map(|e| e.sqrt()).collect();
            return Ok(());
        }
        Err(Error::Internal("covariance matrix could not be re-conditioned".into()))
    }

    /// Lifts the spectrum so the smallest eigenvalue is at least
    /// `ratio` times the largest.
    fn recondition(&mut self, ratio: f64) {
        let n = self.dimension();
        let eig = self
            .cov
            .self_adjoint_eigenvalues(Side::Lower)
            .unwrap_or_else(|_| vec![0.0; n]);
        let max = eig.iter().cloned().fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let shift = (ratio * max - min).max(0.0) * 10.0 + f64::MIN_POSITIVE;
        for i in 0..n {
            self.cov[(i, i)] += shift;
        }
    }

    /// `C^{-1/2} v`.
    fn inv_sqrt_times(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dimension();
        let b = &self.basis;
        let coeffs: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|i| b[(i, k)] * v[i]).sum::<f64>() / self.scales[k])
            .collect();
        (0..n).map(|i| (0..n).map(|k| b[(i, k)] * coeffs[k]).sum()).collect()
    }
}

/// Samples one generation `mean + σ B D z`.
pub fn cma_ask(state: &mut CmaState) -> Vec<Vec<f64>> {
    let n = state.dimension();
    (0..state.population)
        .map(|_| {
            let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut state.rng)).collect();
            let dz: Vec<f64> = z.iter().zip(&state.scales).map(|(z, d)| z * d).collect();
            (0..n)
                .map(|i| {
                    let y: f64 = (0..n).map(|k| state.basis[(i, k)] * dz[k]).sum();
                    state.mean[i] + state.sigma * y
                })
                .collect()
        })
        .collect()
}

/// Rank-based update of mean, paths, step size and covariance; lower
/// fitness is better, ties keep candidate order, non-finite fitnesses are
/// excluded from selection.
pub fn cma_tell(state: &mut CmaState, candidates: &[Vec<f64>], fitnesses: &[f64]) -> Result<()> {
    let n = state.dimension();
    if candidates.len() != fitnesses.len() || candidates.is_empty() {
        return Err(Error::invalid("fitnesses must align with a non-empty candidate list"));
    }
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| fitnesses[i].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::invalid("every candidate has a non-finite fitness"));
    }
    order.sort_by(|&a, &b| fitnesses[a].total_cmp(&fitnesses[b]));
    let p = state.params.clone();
    let selected = &order[..p.mu.min(order.len())];
    let wsum: f64 = p.weights[..selected.len()].iter().sum();
    let weights: Vec<f64> = p.weights[..selected.len()].iter().map(|w| w / wsum).collect();

    let old_mean = state.mean.clone();
    let sigma = state.sigma;
    let ys: Vec<Vec<f64>> = selected
        .iter()
        .map(|&i| {
            candidates[i]
                .iter()
                .zip(&old_mean)
                .map(|(x, m)| (x - m) / sigma)
                .collect()
        })
        .collect();
    let y_w: Vec<f64> = (0..n)
        .map(|d| ys.iter().zip(&weights).map(|(y, w)| w * y[d]).sum())
        .collect();
    state.mean = old_mean.iter().zip(&y_w).map(|(m, y)| m + sigma * y).collect();

    let cs = (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();
    let white = state.inv_sqrt_times(&y_w);
    for (ps, w) in state.p_sigma.iter_mut().zip(&white) {
        *ps = (1.0 - p.c_sigma) * *ps + cs * w;
    }
    let ps_norm = state.p_sigma.iter().map(|v| v * v).sum::<f64>().sqrt();
    let g = (state.generation + 1) as f64;
    let h_sigma = ps_norm / (1.0 - (1.0 - p.c_sigma).powf(2.0 * g)).sqrt() < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
    let hs = if h_sigma { 1.0 } else { 0.0 };
    let cc = (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt();
    for (pc, y) in state.p_c.iter_mut().zip(&y_w) {
        *pc = (1.0 - p.c_c) * *pc + hs * cc * y;
    }

    let keep = 1.0 - p.c1 - p.c_mu + (1.0 - hs) * p.c1 * p.c_c * (2.0 - p.c_c);
    for i in 0..n {
        for j in 0..=i {
            let rank_mu: f64 = ys.iter().zip(&weights).map(|(y, w)| w * y[i] * y[j]).sum();
            let v = keep * state.cov[(i, j)] + p.c1 * state.p_c[i] * state.p_c[j] + p.c_mu * rank_mu;
            state.cov[(i, j)] = v;
            state.cov[(j, i)] = v;
        }
    }
    state.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
    if !state.sigma.is_finite() || state.sigma <= 0.0 {
        return Err(Error::Internal(format!("step size degenerated to {}", state.sigma)));
    }
    state.generation += 1;
    state.decompose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub gen: usize,
    pub best_fitness: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CmaReport {
    pub generations: Vec<GenerationRecord>,
    pub evaluations: usize,
    /// Distinct hard distributions evaluated.
    pub distinct: usize,
}

impl CmaReport {
    /// Generation log with columns `gen,best_fitness,sigma`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.generations {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CmaOutcome {
    pub chi_opt: MaterialDistribution,
    pub best_fitness: f64,
    pub report: CmaReport,
}

#[derive(Debug)]
pub struct CmaAbort {
    pub error: Error,
    pub report: CmaReport,
}

impl std::fmt::Display for CmaAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CMA-ES aborted after {} generations: {}",
            self.report.generations.len(),
            self.error
        )
    }
}

impl std::error::Error for CmaAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<CmaAbort> for Error {
    fn from(a: CmaAbort) -> Self {
        a.error
    }
}

/// The hard distribution a pre-projection vector stands for; the same
/// projection stack as the final rounding of the descent.
pub fn decode(x: &[f64], partition: &MasterPartition, beta: f64, lmin: Option<f64>) -> Result<MaterialDistribution> {
    let relaxed = project_sigmoid(x, partition, beta)?;
    finalize_hard(&relaxed, beta, lmin)
}

/// Minimizes `objective` over hard distributions encoded by unconstrained
/// vectors, starting from `mean0`.
#[allow(clippy::result_large_err)]
pub fn cma_optimize(
    cfg: &CmaConfig,
    partition: &MasterPartition,
    mean0: Vec<f64>,
    mut objective: impl FnMut(&MaterialDistribution) -> Result<f64>,
) -> std::result::Result<CmaOutcome, CmaAbort> {
    let mut report = CmaReport::default();
    let abort = |error: Error, report: &CmaReport| CmaAbort {
        error,
        report: report.clone(),
    };
    if partition.len() != cfg.dimension {
        return Err(abort(
            Error::invalid("partition size differs from the CMA-ES dimension"),
            &report,
        ));
    }
    let mut state = CmaState::new(cfg, mean0).map_err(|e| abort(e, &report))?;
    let mut cache: HashMap<Vec<bool>, f64> = HashMap::new();
    let mut best: Option<(f64, MaterialDistribution)> = None;

    for gen in 0..cfg.max_generations {
        let candidates = cma_ask(&mut state);
        let mut fit = Vec::with_capacity(candidates.len());
        for x in &candidates {
            let chi = decode(x, partition, cfg.beta, cfg.lmin).map_err(|e| abort(e, &report))?;
            let key: Vec<bool> = chi.values().iter().map(|&v| v == 1.0).collect();
            report.evaluations += 1;
            let j = match cache.get(&key) {
                Some(&j) => j,
                None => {
                    let j = objective(&chi).map_err(|e| abort(e, &report))?;
                    cache.insert(key, j);
                    j
                }
            };
            if j.is_finite() && best.as_ref().is_none_or(|(b, _)| j < *b) {
                best = Some((j, chi));
            }
            fit.push(j);
        }
        cma_tell(&mut state, &candidates, &fit).map_err(|e| abort(e, &report))?;
        report.distinct = cache.len();
        let best_fitness = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        report.generations.push(GenerationRecord {
            gen,
            best_fitness,
            sigma: state.sigma,
        });
        log::debug!("gen {gen} best {best_fitness:.6e} sigma {:.3e}", state.sigma);
        if state.sigma < 1e-12 {
            break;
        }
    }
    let (best_fitness, chi_opt) = best.ok_or_else(|| abort(Error::Internal("no finite fitness".into()), &report))?;
    Ok(CmaOutcome {
        chi_opt,
        best_fitness,
        report,
    })
}
