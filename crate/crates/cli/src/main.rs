use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use helm_absorb::{run, CliError, Mode, RunConfig};

/// Optimize the placement of absorbing material on the wall of a 2D
/// acoustic cavity.
#[derive(Debug, Parser)]
#[command(name = "helm-absorb", version)]
struct Args {
    /// Run mode; falls back to `mode` in the config file.
    #[arg(value_enum)]
    mode: Option<Mode>,

    /// TOML run configuration. Missing keys take desk-scale defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Use the published mesh divisor and frequency count unless the
    /// config sets them. Runs take hours.
    #[arg(long)]
    paper_scale: bool,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Seed for CMA-ES and the gradient check.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads across frequencies; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,

    /// Single frequency in Hz.
    #[arg(long)]
    frequency: Option<f64>,
}

fn resolve(args: &Args) -> Result<(Mode, RunConfig), CliError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mode = match (args.mode, cfg.mode) {
        (Some(m), Some(c)) if m != c => {
            log::warn!("command line mode {m:?} overrides {c:?} from the config file");
            m
        }
        (Some(m), _) | (None, Some(m)) => m,
        (None, None) => {
            return Err(CliError::Config(
                "no mode given on the command line or in the config".into(),
            ))
        }
    };
    if args.paper_scale {
        log::warn!(
            "paper scale: meshes 4x finer and 10x more frequencies than the desk setup; expect hours of run time"
        );
    }
    cfg.resolve_scale(args.paper_scale);
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(f) = args.frequency {
        cfg.frequency = Some(f);
    }
    Ok((mode, cfg))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = resolve(&args).and_then(|(mode, cfg)| run(mode, &cfg));
    match result {
        Ok(report) => {
            println!("{}", serde_json::to_string(&report.result).unwrap_or_default());
            if let Some(beta) = report.achieved_beta {
                println!("achieved beta: {beta}");
            }
            if let Some(reason) = &report.stop_reason {
                println!("stopped: {reason}");
            }
            println!(
                "wrote {} in {:.1} s",
                report.config.out.join("report.json").display(),
                report.wall_time_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
