//! Run configuration, read from TOML. Every field has a desk-scale default,
//! so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use helm_absorb_core::descent::DescentConfig;
use helm_absorb_core::{AbsorptionModel, EnergyWeights, FrequencyGrid, ProblemSpec, Route};

use crate::CliError;

/// Frequencies and mesh divisor of the reduced desk setup.
pub const DESK_DIVISOR: u32 = 20;
pub const DESK_COUNT: usize = 40;
/// The published setup: four times finer meshes and ten times as many
/// frequencies. Expect hours rather than minutes.
pub const PAPER_DIVISOR: u32 = 80;
pub const PAPER_COUNT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One direct solve at `frequency`.
    Solve,
    /// Energies over the frequency range for a fixed distribution.
    Sweep,
    /// Projected gradient descent at `frequency`.
    OptimizeSingle,
    /// Projected gradient descent on the integrated energy.
    OptimizeRange,
    /// CMA-ES on hard distributions, integrated energy (or `frequency` if set).
    Cmaes,
    /// Finite differences against the adjoint gradient.
    GradCheck,
    /// Manufactured-solution convergence study.
    Convergence,
}

/// Robin coefficient: `{ re, im }` or `{ table = "alpha.csv" }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaConfig {
    Constant { re: f64, im: f64 },
    Table { table: PathBuf },
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig::Constant { re: 1.0, im: -1.0 }
    }
}

/// Initial or fixed distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChiConfig {
    /// `2 × bands` alternating bands, absorbing first from the bottom.
    Builtin {
        bands: usize,
    },
    Constant {
        constant: f64,
    },
    /// `segment_start,segment_end,value` CSV, as written by the optimizers.
    File {
        file: PathBuf,
    },
}

impl Default for ChiConfig {
    fn default() -> Self {
        ChiConfig::Builtin { bands: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescentSection {
    pub gamma0: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub window: usize,
    pub max_iters: usize,
}

impl Default for DescentSection {
    fn default() -> Self {
        let d = DescentConfig::default();
        DescentSection {
            gamma0: d.gamma0,
            delta1: d.delta1,
            delta2: d.delta2,
            window: d.m_window,
            max_iters: d.max_iters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CmaSection {
    pub sigma0: f64,
    pub max_generations: usize,
    /// Defaults to `4 + ⌊3 ln m⌋`.
    pub population: Option<usize>,
}

impl Default for CmaSection {
    fn default() -> Self {
        CmaSection {
            sigma0: 0.3,
            max_generations: 300,
            population: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckSection {
    pub directions: usize,
    pub step: f64,
    /// Mesh divisor for the check; coarser than the optimization mesh
    /// because every direction costs two fresh factorizations.
    pub divisor: u32,
}

impl Default for GradCheckSection {
    fn default() -> Self {
        GradCheckSection {
            directions: 5,
            step: 1e-4,
            divisor: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSection {
    /// Cells per side of each mesh.
    pub cells: Vec<usize>,
    pub k: f64,
}

impl Default for ConvergenceSection {
    fn default() -> Self {
        ConvergenceSection {
            cells: vec![40, 80, 160, 320],
            k: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional in the file; the command line picks the mode.
    pub mode: Option<Mode>,
    /// Single frequency in Hz for `solve`, `optimize-single` and
    /// `grad-check`.
    pub frequency: Option<f64>,
    pub f_min: f64,
    pub f_max: f64,
    /// Number of frequencies in the range, ends included.
    pub count: Option<usize>,
    pub beta: f64,
    pub divisor: Option<u32>,
    pub segments: usize,
    pub lmin: f64,
    pub weights: [f64; 3],
    pub amplitude: f64,
    pub c: f64,
    pub alpha: AlphaConfig,
    pub chi: ChiConfig,
    /// Enforce the minimum reflective length when rounding.
    pub enforce_minlen: bool,
    pub route: Route,
    pub seed: u64,
    /// Worker threads across frequencies; 0 uses every core.
    pub jobs: usize,
    pub out: PathBuf,
    /// Also write the field at each of these frequencies (`sweep` and the
    /// optimizers; `solve` always writes its own).
    pub field_frequencies: Vec<f64>,
    pub descent: DescentSection,
    pub cmaes: CmaSection,
    pub grad_check: GradCheckSection,
    pub convergence: ConvergenceSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: None,
            frequency: None,
            f_min: 20.0,
            f_max: 1000.0,
            count: None,
            beta: 0.5,
            divisor: None,
            segments: 100,
            lmin: 0.1,
            weights: [1.0, 0.0, 0.0],
            amplitude: 1.0,
            c: helm_absorb_core::objective::SPEED_OF_SOUND,
            alpha: AlphaConfig::default(),
            chi: ChiConfig::default(),
            enforce_minlen: true,
            route: Route::Condensed,
            seed: 0,
            jobs: 0,
            out: PathBuf::from("out"),
            field_frequencies: Vec::new(),
            descent: DescentSection::default(),
            cmaes: CmaSection::default(),
            grad_check: GradCheckSection::default(),
            convergence: ConvergenceSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    /// Fills the scale-dependent defaults. Explicit values always win.
    pub fn resolve_scale(&mut self, paper_scale: bool) {
        let (divisor, count) = if paper_scale {
            (PAPER_DIVISOR, PAPER_COUNT)
        } else {
            (DESK_DIVISOR, DESK_COUNT)
        };
        self.divisor.get_or_insert(divisor);
        self.count.get_or_insert(count);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in ]0,1[, got {}", self.beta));
        }
        if self.segments == 0 {
            return bad("segments must be positive".into());
        }
        if !(self.lmin > 0.0) {
            return bad(format!("lmin must be positive, got {}", self.lmin));
        }
        if !(self.c > 0.0) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        if self.divisor == Some(0) {
            return bad("divisor must be positive".into());
        }
        if let ChiConfig::Builtin { bands: 0 } = self.chi {
            return bad("builtin distribution needs at least one band".into());
        }
        Ok(())
    }

    pub fn absorption(&self) -> Result<AbsorptionModel, CliError> {
        Ok(match &self.alpha {
            AlphaConfig::Constant { re, im } => AbsorptionModel::constant(Complex64::new(*re, *im))?,
            AlphaConfig::Table { table } => AbsorptionModel::from_csv(table)?,
        })
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let [a, b, c] = self.weights;
        Ok(ProblemSpec {
            c: self.c,
            absorption: self.absorption()?,
            amplitude: self.amplitude,
            weights: EnergyWeights::new(a, b, c)?,
            divisor: self.divisor.unwrap_or(DESK_DIVISOR),
            lmin: self.lmin,
            ..ProblemSpec::default()
        })
    }

    pub fn single_frequency(&self) -> Result<f64, CliError> {
        self.frequency
            .ok_or_else(|| CliError::Config("this mode needs `frequency`".into()))
    }

    pub fn range(&self) -> FrequencyGrid {
        FrequencyGrid::Range {
            f_min: self.f_min,
            f_max: self.f_max,
            count: self.count.unwrap_or(DESK_COUNT),
        }
    }

    pub fn descent_config(&self) -> DescentConfig {
        DescentConfig {
            beta: self.beta,
            gamma0: self.descent.gamma0,
            delta1: self.descent.delta1,
            delta2: self.descent.delta2,
            m_window: self.descent.window,
            max_iters: self.descent.max_iters,
            lmin: self.enforce_minlen.then_some(self.lmin),
        }
    }
}
