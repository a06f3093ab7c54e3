//! Projected gradient descent with Barzilai–Borwein steps over the relaxed
//! admissible set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::energy::GradientVector;
use crate::error::{Error, Result};
use crate::material::{finalize_hard, project_sigmoid, MaterialDistribution};
use crate::objective::Objective;

pub const GAMMA_MIN: f64 = 1e-8;
pub const GAMMA_MAX: f64 = 1e4;

/// Something that can be minimized over per-segment controls in `[0,1]`.
pub trait GradientOracle {
    fn value_and_gradient(&self, chi: &[f64]) -> Result<(f64, GradientVector)>;
    fn value(&self, chi: &[f64]) -> Result<f64>;
}

impl GradientOracle for Objective {
    fn value_and_gradient(&self, chi: &[f64]) -> Result<(f64, GradientVector)> {
        let ev = self.evaluate(chi, true)?;
        Ok((ev.objective, ev.gradient.expect("gradient requested")))
    }

    fn value(&self, chi: &[f64]) -> Result<f64> {
        Ok(self.evaluate(chi, false)?.objective)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentConfig {
    pub beta: f64,
    pub gamma0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub m_window: usize,
    pub max_iters: usize,
    /// Minimum reflective run length enforced on the final hard projection.
    pub lmin: Option<f64>,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            beta: 0.5,
            gamma0: 1e-2,
            delta1: 1e-6,
            delta2: 1e-5,
            m_window: 5,
            max_iters: 300,
            lmin: Some(0.1),
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::invalid(format!("beta must lie in ]0,1[, got {}", self.beta)));
        }
        if !(self.gamma0 > 0.0 && self.delta1 > 0.0 && self.delta2 > 0.0) {
            return Err(Error::invalid("gamma0, delta1 and delta2 must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// `‖γ g‖ ≤ δ₁`.
    Gradient,
    /// Window-averaged relative objective change below `δ₂`.
    Stagnation,
    MaxIterations,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::Gradient => "gradient",
            StopReason::Stagnation => "stagnation",
            StopReason::MaxIterations => "max-iterations",
        })
    }
}

#[derive(Debug, Clone)]
pub struct DescentState {
    pub chi: MaterialDistribution,
    pub prev_chi: Option<Vec<f64>>,
    pub gradient: GradientVector,
    pub prev_gradient: Option<GradientVector>,
    pub gamma: f64,
    pub history: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub step: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DescentReport {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: Option<StopReason>,
    pub best_iteration: usize,
    pub best_objective: f64,
    /// Objective of the hard projection of the best iterate.
    pub projected_objective: Option<f64>,
    pub projected_fraction: Option<f64>,
}

impl DescentReport {
    /// Iteration log with columns `iter,objective,step,grad_norm`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.iterations {
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
pub struct DescentOutcome {
    pub chi_opt: MaterialDistribution,
    pub chi_projected: MaterialDistribution,
    pub report: DescentReport,
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug)]
pub struct DescentAbort {
    pub error: Error,
    pub report: DescentReport,
}

impl std::fmt::Display for DescentAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "descent aborted after {} iterations: {}",
            self.report.iterations.len(),
            self.error
        )
    }
}

impl std::error::Error for DescentAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<DescentAbort> for Error {
    fn from(a: DescentAbort) -> Self {
        a.error
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BB1 step `⟨s,s⟩/⟨s,y⟩`, falling back to `prev_gamma` without positive
/// curvature, clamped to `[GAMMA_MIN, GAMMA_MAX]`.
pub fn bb_step(s: &[f64], y: &[f64], prev_gamma: f64) -> f64 {
    let sy = dot(s, y);
    let gamma = if sy > 0.0 { dot(s, s) / sy } else { prev_gamma };
    if gamma.is_finite() {
        gamma.clamp(GAMMA_MIN, GAMMA_MAX)
    } else {
        prev_gamma.clamp(GAMMA_MIN, GAMMA_MAX)
    }
}

pub fn stop_test(state: &DescentState, cfg: &DescentConfig) -> Option<StopReason> {
    if state.gamma * state.gradient.norm() <= cfg.delta1 {
        return Some(StopReason::Gradient);
    }
    let j = state.history.len().checked_sub(1)?;
    let m = cfg.m_window;
    if j > m {
        let h = &state.history;
        let avg = (j - m..=j).map(|i| ((h[i] - h[i - 1]) / h[i - 1]).abs()).sum::<f64>() / (m + 1) as f64;
        if avg <= cfg.delta2 {
            return Some(StopReason::Stagnation);
        }
    }
    if state.iteration + 1 >= cfg.max_iters {
        return Some(StopReason::MaxIterations);
    }
    None
}

#[allow(clippy::result_large_err)] // the abort carries the partial report
pub fn descend(
    cfg: &DescentConfig,
    chi0: &MaterialDistribution,
    oracle: &impl GradientOracle,
) -> std::result::Result<DescentOutcome, DescentAbort> {
    let mut report = DescentReport::default();
    let abort = |error: Error, report: &DescentReport| DescentAbort {
        error,
        report: report.clone(),
    };
    cfg.validate().map_err(|e| abort(e, &report))?;
    if !chi0.is_relaxed_feasible(1e-10) {
        return Err(abort(
            Error::invalid("initial distribution is not in the relaxed admissible set"),
            &report,
        ));
    }
    let part = chi0.partition().clone();

    let mut chi =
        MaterialDistribution::new(chi0.values().to_vec(), part.clone(), cfg.beta).map_err(|e| abort(e, &report))?;
    let mut state: Option<DescentState> = None;
    let mut best = (f64::INFINITY, chi.clone(), 0usize);

    let reason = loop {
        let (j, g) = oracle.value_and_gradient(chi.values()).map_err(|e| abort(e, &report))?;
        if !j.is_finite() {
            return Err(abort(Error::solver("non-finite objective"), &report));
        }
        let st = match state.take() {
            None => DescentState {
                chi: chi.clone(),
                prev_chi: None,
                gradient: g,
                prev_gradient: None,
                gamma: cfg.gamma0,
                history: vec![j],
                iteration: 0,
            },
            Some(prev) => {
                let s: Vec<f64> = chi.values().iter().zip(prev.chi.values()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g.0.iter().zip(&prev.gradient.0).map(|(a, b)| a - b).collect();
                let mut history = prev.history;
                history.push(j);
                DescentState {
                    chi: chi.clone(),
                    prev_chi: Some(prev.chi.into_values()),
                    gamma: bb_step(&s, &y, prev.gamma),
                    gradient: g,
                    prev_gradient: Some(prev.gradient),
                    history,
                    iteration: prev.iteration + 1,
                }
            }
        };
        if j < best.0 {
            best = (j, chi.clone(), st.iteration);
        }
        report.iterations.push(IterationRecord {
            iter: st.iteration,
            objective: j,
            step: st.gamma,
            grad_norm: st.gradient.norm(),
        });
        log::debug!(
            "iter {} J={j:.6e} step={:.3e} |g|={:.3e}",
            st.iteration,
            st.gamma,
            st.gradient.norm()
        );
        if let Some(r) = stop_test(&st, cfg) {
            break r;
        }
        let raw: Vec<f64> = st
            .chi
            .values()
            .iter()
            .zip(&st.gradient.0)
            .map(|(c, g)| c - st.gamma * g)
            .collect();
        chi = project_sigmoid(&raw, &part, cfg.beta).map_err(|e| abort(e, &report))?;
        state = Some(st);
    };

    report.stop_reason = Some(reason);
    report.best_iteration = best.2;
    report.best_objective = best.0;
    let chi_opt = best.1;
    let chi_projected = finalize_hard(&chi_opt, cfg.beta, cfg.lmin).map_err(|e| abort(e, &report))?;
    let pj = oracle.value(chi_projected.values()).map_err(|e| abort(e, &report))?;
    report.projected_objective = Some(pj);
    report.projected_fraction = Some(chi_projected.volume_fraction());
    Ok(DescentOutcome {
        chi_opt,
        chi_projected,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MasterPartition;
    use crate::material::sigmoid;
    use proptest::prelude::*;

    #[test]
    fn bb_examples() {
        assert_eq!(bb_step(&[1.0, 0.0], &[2.0, 0.0], 0.3), 0.5);
        assert_eq!(bb_step(&[1.0, 0.0], &[0.0, 1.0], 0.1), 0.1);
        assert_eq!(bb_step(&[0.3, -0.2], &[0.3, -0.2], 0.1), 1.0);
        assert_eq!(bb_step(&[1.0], &[1e-12], 0.1), GAMMA_MAX);
        assert_eq!(bb_step(&[1.0], &[-1.0], 1e-12), GAMMA_MIN);
    }

    fn state(gamma: f64, grad: Vec<f64>, history: Vec<f64>) -> DescentState {
        let part = MasterPartition::uniform(grad.len(), 1.0).unwrap();
        DescentState {
            chi: MaterialDistribution::constant(0.5, part, 0.5).unwrap(),
            prev_chi: None,
            gradient: GradientVector(grad),
            prev_gradient: None,
            gamma,
            iteration: history.len() - 1,
            history,
        }
    }

    #[test]
    fn stop_examples() {
        let cfg = DescentConfig::default();
        assert_eq!(
            stop_test(&state(0.1, vec![0.0; 3], vec![1.0]), &cfg),
            Some(StopReason::Gradient)
        );
        assert_eq!(stop_test(&state(0.1, vec![5.0; 3], vec![1.0]), &cfg), None);
        assert_eq!(
            stop_test(&state(0.1, vec![5.0; 3], vec![2.0; 7]), &cfg),
            Some(StopReason::Stagnation)
        );
        // a window not yet full never signals stagnation
        assert_eq!(stop_test(&state(0.1, vec![5.0; 3], vec![2.0; 6]), &cfg), None);
        let short = DescentConfig { max_iters: 3, ..cfg };
        assert_eq!(
            stop_test(&state(0.1, vec![5.0; 3], vec![3.0, 2.0, 1.0]), &short),
            Some(StopReason::MaxIterations)
        );
    }

    struct Quadratic(Vec<f64>);

    impl GradientOracle for Quadratic {
        fn value_and_gradient(&self, chi: &[f64]) -> Result<(f64, GradientVector)> {
            let d: Vec<f64> = chi.iter().zip(&self.0).map(|(a, b)| a - b).collect();
            Ok((0.5 * dot(&d, &d), GradientVector(d)))
        }
        fn value(&self, chi: &[f64]) -> Result<f64> {
            Ok(self.value_and_gradient(chi)?.0)
        }
    }

    /// Lower non-trivial fixed point of the sigmoid.
    fn low_fixed_point() -> f64 {
        let mut x = 0.1;
        for _ in 0..200 {
            x = sigmoid(x);
        }
        x
    }

    #[test]
    fn reaches_minimizer_of_toy_quadratic() {
        let lo = low_fixed_point();
        assert!((sigmoid(lo) - lo).abs() < 1e-15);
        let target: Vec<f64> = (0..12).map(|k| [lo, 1.0 - lo, 0.5][k % 3]).collect();
        let part = MasterPartition::uniform(12, 1.0).unwrap();
        let raw: Vec<f64> = (0..12).map(|k| (k as f64 * 0.7).cos()).collect();
        let chi0 = project_sigmoid(&raw, &part, 0.5).unwrap();
        let cfg = DescentConfig {
            lmin: None,
            ..DescentConfig::default()
        };
        let out = descend(&cfg, &chi0, &Quadratic(target.clone())).unwrap();
        let err = out
            .chi_opt
            .values()
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-6, "err {err}");
        assert!(out.report.iterations.len() <= 200);
        assert_eq!(out.report.stop_reason, Some(StopReason::Gradient));
        assert!(out.chi_projected.is_hard());
    }

    struct Flat;

    impl GradientOracle for Flat {
        fn value_and_gradient(&self, chi: &[f64]) -> Result<(f64, GradientVector)> {
            Ok((1.0, GradientVector::zeros(chi.len())))
        }
        fn value(&self, _: &[f64]) -> Result<f64> {
            Ok(1.0)
        }
    }

    #[test]
    fn flat_objective_stops_at_start() {
        let part = MasterPartition::uniform(10, 1.0).unwrap();
        let chi0 =
            MaterialDistribution::new(vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0], part, 0.5).unwrap();
        let out = descend(&DescentConfig::default(), &chi0, &Flat).unwrap();
        assert_eq!(out.report.iterations.len(), 1);
        assert_eq!(out.report.stop_reason, Some(StopReason::Gradient));
        assert_eq!(out.chi_opt, chi0);
    }

    struct Failing;

    impl GradientOracle for Failing {
        fn value_and_gradient(&self, chi: &[f64]) -> Result<(f64, GradientVector)> {
            if chi[0] > 0.5 {
                Err(Error::solver("boom").at_frequency(100.0))
            } else {
                Ok((
                    chi[0],
                    GradientVector((0..chi.len()).map(|k| if k == 0 { -1.0 } else { 0.0 }).collect()),
                ))
            }
        }
        fn value(&self, chi: &[f64]) -> Result<f64> {
            Ok(chi[0])
        }
    }

    #[test]
    fn failure_keeps_partial_report() {
        let part = MasterPartition::uniform(4, 1.0).unwrap();
        let chi0 = MaterialDistribution::constant(0.5, part, 0.5).unwrap();
        let cfg = DescentConfig {
            gamma0: 1.0,
            lmin: None,
            ..DescentConfig::default()
        };
        let err = descend(&cfg, &chi0, &Failing).unwrap_err();
        assert_eq!(err.report.iterations.len(), 1);
        assert!(matches!(err.error, Error::Solver { frequency: Some(f), .. } if f == 100.0));
    }

    /// Smooth nonconvex test function.
    struct Wavy;

    impl GradientOracle for Wavy {
        fn value_and_gradient(&self, chi: &[f64]) -> Result<(f64, GradientVector)> {
            let v = chi
                .iter()
                .enumerate()
                .map(|(k, c)| (c * (k + 1) as f64).sin() + c * c)
                .sum::<f64>()
                + 10.0;
            let g = chi
                .iter()
                .enumerate()
                .map(|(k, c)| (k + 1) as f64 * (c * (k + 1) as f64).cos() + 2.0 * c)
                .collect();
            Ok((v, GradientVector(g)))
        }
        fn value(&self, chi: &[f64]) -> Result<f64> {
            Ok(self.value_and_gradient(chi)?.0)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn iterates_stay_feasible_and_best_is_monotone(raw in proptest::collection::vec(-1.0f64..1.0, 8), beta in 0.2f64..0.8) {
            let part = MasterPartition::uniform(8, 1.0).unwrap();
            let chi0 = project_sigmoid(&raw, &part, beta).unwrap();
            let cfg = DescentConfig { beta, max_iters: 40, lmin: None, ..DescentConfig::default() };
            let out = descend(&cfg, &chi0, &Wavy).unwrap();
            prop_assert!(out.chi_opt.is_relaxed_feasible(1e-10));
            let mut best = f64::INFINITY;
            for r in &out.report.iterations {
                best = best.min(r.objective);
            }
            prop_assert_eq!(best, out.report.best_objective);
            prop_assert!(out.report.best_objective <= out.report.iterations[0].objective);
            let again = descend(&cfg, &chi0, &Wavy).unwrap();
            prop_assert_eq!(again.report, out.report);
        }
    }
}
