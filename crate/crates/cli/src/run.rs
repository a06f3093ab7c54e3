//! The run modes. Each writes its CSVs and a `report.json` into the output
//! directory and returns the report.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use helm_absorb_core::descent::DescentAbort;
use helm_absorb_core::evolution::CmaAbort;
use helm_absorb_core::helmholtz::{centered_gaussian, sequential_kernels, wavenumber};
use helm_absorb_core::verify::{convergence_study, fitted_order, gradient_check};
use helm_absorb_core::{
    build_mesh, cma_optimize, descend, mesh_step, CmaConfig, FrequencyGrid, MasterPartition, MaterialDistribution,
    Objective, ProblemData, ProblemSpec, Route,
};

use crate::config::{ChiConfig, Mode, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub version: &'static str,
    pub config: RunConfig,
    pub wall_time_s: f64,
    /// Volume fraction of the returned distribution, when there is one.
    pub achieved_beta: Option<f64>,
    pub stop_reason: Option<String>,
    pub result: serde_json::Value,
}

/// Initial distribution with `2 × bands` alternating bands along the wall,
/// absorbing first from the bottom, each pair covering the fraction `beta`
/// with absorber. Values are exact overlaps, so segments that straddle a
/// band edge get fractional values and the mean is `beta` exactly.
pub fn builtin_chi0(bands: usize, partition: &MasterPartition, beta: f64) -> Vec<f64> {
    let l = partition.total_length();
    let period = l / bands as f64;
    let b = partition.bounds();
    (0..partition.len())
        .map(|k| {
            let (s, e) = (b[k], b[k + 1]);
            let mut covered = 0.0;
            for p in 0..bands {
                let lo = p as f64 * period;
                let hi = lo + beta * period;
                covered += (e.min(hi) - s.max(lo)).max(0.0);
            }
            // Band edges that coincide with segment bounds leave round-off.
            match covered / (e - s) {
                v if v < 1e-9 => 0.0,
                v if v > 1.0 - 1e-9 => 1.0,
                v => v,
            }
        })
        .collect()
}

fn initial(cfg: &RunConfig, spec: &ProblemSpec) -> Result<(MasterPartition, Vec<f64>), CliError> {
    if let ChiConfig::File { file } = &cfg.chi {
        let chi = MaterialDistribution::read_csv(file, cfg.beta)?;
        return Ok((chi.partition().clone(), chi.into_values()));
    }
    let part = MasterPartition::uniform(cfg.segments, spec.domain.robin_length())?;
    let values = match cfg.chi {
        ChiConfig::Builtin { bands } => builtin_chi0(bands, &part, cfg.beta),
        ChiConfig::Constant { constant } => vec![constant; part.len()],
        ChiConfig::File { .. } => unreachable!(),
    };
    Ok((part, values))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn field_name(f: f64) -> String {
    format!("field_f{f}.csv")
}

/// Direct fields at each requested frequency, solved from scratch.
fn write_fields(cfg: &RunConfig, spec: &ProblemSpec, part: &MasterPartition, chi: &[f64]) -> Result<(), CliError> {
    for &f in &cfg.field_frequencies {
        let obj = Objective::new(spec.clone(), FrequencyGrid::Single(f), part.clone(), Route::Full, 1)?;
        let (_, u) = obj.field(0, chi)?;
        u.write_csv(&cfg.out.join(field_name(f)))?;
    }
    Ok(())
}

/// Runs `mode` with a fully resolved configuration.
pub fn run(mode: Mode, cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    // Frequencies run in parallel; keeping each factorization on one thread
    // makes repeated runs bitwise identical.
    sequential_kernels();
    let start = Instant::now();
    create_dir(&cfg.out)?;
    let mut report = RunReport {
        mode,
        version: env!("CARGO_PKG_VERSION"),
        config: RunConfig {
            mode: Some(mode),
            ..cfg.clone()
        },
        wall_time_s: 0.0,
        achieved_beta: None,
        stop_reason: None,
        result: serde_json::Value::Null,
    };
    match mode {
        Mode::Solve => solve(cfg, &mut report)?,
        Mode::Sweep => sweep(cfg, &mut report)?,
        Mode::OptimizeSingle => {
            let f = cfg.single_frequency()?;
            optimize(cfg, FrequencyGrid::Single(f), &mut report)?
        }
        Mode::OptimizeRange => optimize(cfg, cfg.range(), &mut report)?,
        Mode::Cmaes => cmaes(cfg, &mut report)?,
        Mode::GradCheck => grad_check(cfg, &mut report)?,
        Mode::Convergence => convergence(cfg, &mut report)?,
    }
    report.wall_time_s = start.elapsed().as_secs_f64();
    write_report(&cfg.out, &report)?;
    Ok(report)
}

fn write_report(dir: &Path, report: &RunReport) -> Result<(), CliError> {
    let path = dir.join("report.json");
    let text = serde_json::to_string_pretty(report)?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(path, e))
}

fn solve(cfg: &RunConfig, report: &mut RunReport) -> Result<(), CliError> {
    let f = cfg.single_frequency()?;
    let spec = cfg.problem_spec()?;
    let (part, chi) = initial(cfg, &spec)?;
    let obj = Objective::new(spec, FrequencyGrid::Single(f), part, Route::Full, 1)?;
    let ev = obj.evaluate(&chi, false)?;
    let (_, u) = obj.field(0, &chi)?;
    u.write_csv(&cfg.out.join(field_name(f)))?;
    ev.spectrum.write_csv(&cfg.out.join("spectrum.csv"))?;
    report.result = json!({ "frequency": f, "energy": ev.objective, "h": u.h, "field_l2": u.l2_norm() });
    Ok(())
}

fn sweep(cfg: &RunConfig, report: &mut RunReport) -> Result<(), CliError> {
    let spec = cfg.problem_spec()?;
    let (part, chi) = initial(cfg, &spec)?;
    // One evaluation per frequency: a fresh factorization is cheaper than
    // building the condensed operators.
    let obj = Objective::new(spec.clone(), cfg.range(), part.clone(), Route::Full, cfg.jobs)?;
    let ev = obj.evaluate(&chi, false)?;
    ev.spectrum.write_csv(&cfg.out.join("spectrum.csv"))?;
    write_fields(cfg, &spec, &part, &chi)?;
    report.result = json!({ "integrated_energy": ev.objective, "frequencies": obj.frequencies().len() });
    Ok(())
}

fn optimize(cfg: &RunConfig, grid: FrequencyGrid, report: &mut RunReport) -> Result<(), CliError> {
    let spec = cfg.problem_spec()?;
    let (part, values) = initial(cfg, &spec)?;
    let chi0 = MaterialDistribution::new(values, part.clone(), cfg.beta)?;
    if !chi0.is_relaxed_feasible(1e-9) {
        return Err(CliError::Config(format!(
            "initial distribution has volume fraction {}, expected beta = {}",
            chi0.volume_fraction(),
            cfg.beta
        )));
    }
    let obj = Objective::new(spec.clone(), grid, part.clone(), cfg.route, cfg.jobs)?;
    let iterations = cfg.out.join("iterations.csv");
    let outcome = match descend(&cfg.descent_config(), &chi0, &obj) {
        Ok(o) => o,
        Err(DescentAbort { error, report: partial }) => {
            partial.write_csv(&iterations)?;
            return Err(error.into());
        }
    };
    outcome.report.write_csv(&iterations)?;
    outcome.chi_opt.write_csv(&cfg.out.join("chi_opt.csv"))?;
    outcome.chi_projected.write_csv(&cfg.out.join("chi_projected.csv"))?;

    let initial = obj.evaluate(chi0.values(), false)?;
    let relaxed = obj.evaluate(outcome.chi_opt.values(), false)?;
    let projected = obj.evaluate(outcome.chi_projected.values(), false)?;
    let full = obj.evaluate(&vec![1.0; part.len()], false)?;
    projected.spectrum.write_csv(&cfg.out.join("spectrum.csv"))?;
    relaxed.spectrum.write_csv(&cfg.out.join("spectrum_relaxed.csv"))?;
    initial.spectrum.write_csv(&cfg.out.join("spectrum_initial.csv"))?;
    write_fields(cfg, &spec, &part, outcome.chi_projected.values())?;

    report.achieved_beta = Some(outcome.chi_projected.volume_fraction());
    report.stop_reason = outcome.report.stop_reason.map(|r| r.to_string());
    report.result = json!({
        "initial_objective": initial.objective,
        "relaxed_objective": relaxed.objective,
        "projected_objective": projected.objective,
        "full_absorber_objective": full.objective,
        "best_iteration": outcome.report.best_iteration,
        "iterations": outcome.report.iterations.len(),
    });
    Ok(())
}

fn cmaes(cfg: &RunConfig, report: &mut RunReport) -> Result<(), CliError> {
    let spec = cfg.problem_spec()?;
    let (part, mean0) = initial(cfg, &spec)?;
    let grid = match cfg.frequency {
        Some(f) => FrequencyGrid::Single(f),
        None => cfg.range(),
    };
    let obj = Objective::new(spec.clone(), grid, part.clone(), cfg.route, cfg.jobs)?;
    let mut cma = CmaConfig::new(part.len(), cfg.beta);
    cma.sigma0 = cfg.cmaes.sigma0;
    cma.max_generations = cfg.cmaes.max_generations;
    cma.population = cfg.cmaes.population.unwrap_or(cma.population);
    cma.seed = cfg.seed;
    cma.lmin = cfg.enforce_minlen.then_some(cfg.lmin);

    let iterations = cfg.out.join("iterations.csv");
    let outcome = match cma_optimize(&cma, &part, mean0, |chi| {
        Ok(obj.evaluate(chi.values(), false)?.objective)
    }) {
        Ok(o) => o,
        Err(CmaAbort { error, report: partial }) => {
            partial.write_csv(&iterations)?;
            return Err(error.into());
        }
    };
    outcome.report.write_csv(&iterations)?;
    outcome.chi_opt.write_csv(&cfg.out.join("chi_opt.csv"))?;
    outcome.chi_opt.write_csv(&cfg.out.join("chi_projected.csv"))?;
    let best = obj.evaluate(outcome.chi_opt.values(), false)?;
    best.spectrum.write_csv(&cfg.out.join("spectrum.csv"))?;
    write_fields(cfg, &spec, &part, outcome.chi_opt.values())?;

    report.achieved_beta = Some(outcome.chi_opt.volume_fraction());
    report.stop_reason = Some("max-generations".into());
    report.result = json!({
        "best_objective": outcome.best_fitness,
        "generations": outcome.report.generations.len(),
        "evaluations": outcome.report.evaluations,
        "distinct_evaluations": outcome.report.distinct,
        "population": cma.population,
    });
    Ok(())
}

fn grad_check(cfg: &RunConfig, report: &mut RunReport) -> Result<(), CliError> {
    let f = cfg.frequency.unwrap_or(200.0);
    let spec = cfg.problem_spec()?;
    let (part, values) = initial(cfg, &spec)?;
    // Pulled into [1/4, 3/4] so that the difference steps stay admissible.
    let chi: Vec<f64> = values.iter().map(|v| 0.25 + 0.5 * v).collect();
    let h = mesh_step(f, spec.c, spec.lmin, cfg.grad_check.divisor)?;
    let mesh = build_mesh(spec.domain, h)?;
    let amplitude = spec.amplitude;
    let base = ProblemData::new(
        &mesh,
        wavenumber(f, spec.c),
        spec.absorption.alpha_at(f)?,
        vec![1.0; mesh.robin_count()],
    )
    .with_dirichlet(&mesh, |s| Complex64::new(centered_gaussian(s, amplitude), 0.0));
    let rows = gradient_check(
        &base,
        &mesh,
        &part,
        &chi,
        &spec.weights,
        cfg.grad_check.directions,
        cfg.grad_check.step,
        cfg.seed,
    )?;
    write_rows(&cfg.out.join("grad_check.csv"), &rows)?;
    let worst = rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
    report.result = json!({ "frequency": f, "h": h, "max_relative_error": worst });
    Ok(())
}

fn convergence(cfg: &RunConfig, report: &mut RunReport) -> Result<(), CliError> {
    let spec = cfg.problem_spec()?;
    let k = cfg.convergence.k;
    let f = k * spec.c / (2.0 * std::f64::consts::PI);
    let rows = convergence_study(&cfg.convergence.cells, k, spec.absorption.alpha_at(f)?)?;
    write_rows(&cfg.out.join("convergence.csv"), &rows)?;
    report.result = json!({ "k": k, "fitted_order": fitted_order(&rows) });
    Ok(())
}
