//! `fockstab`: sweeps, trajectories, tomography and truncation checks for the
//! two-cavity Fock-state stabilization model.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use fockstab::model::Preset;
use fockstab::rate_model::{self, DriveModel};
use fockstab::sweep::{self, RunConfig};
use log::{info, warn};

#[derive(Parser, Debug)]
#[command(name = "fockstab", version, about = "Fock-state stabilization in cross-Kerr coupled cavities")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; every field is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter preset (stabilization | spectroscopy).
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Override one config field by dotted path, e.g. `--set truncation.cooling=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady-state polarization over the (cooling drive × Δ/χ) grid.
    SteadySweep,
    /// Time evolution from a Fock state at the operating point.
    TimeEvolve {
        /// Duration in units of 1/κ_c.
        #[arg(long, allow_negative_numbers = true)]
        duration: Option<f64>,
        /// Number of output times, including t = 0.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Husimi Q_N maps and Wigner function of the steady storage state.
    Wigner,
    /// Four-level rate model of the stabilization cycle.
    RateModel {
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long, allow_negative_numbers = true)]
        kappa_down: f64,
        /// A→B drive rate; optimized when omitted.
        #[arg(long, allow_negative_numbers = true)]
        omega_ab: Option<f64>,
        /// Drive A↔B in both directions.
        #[arg(long)]
        bidirectional: bool,
    },
    /// Compare the configured truncation against an enlarged one.
    CheckConvergence,
    /// Photon-number-resolved cooling-cavity spectrum.
    Spectrum,
    /// Print the effective configuration as JSON.
    ShowConfig,
}

/// Failure classes, mapped to the process exit code.
enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
    Convergence(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Convergence(_) => 3,
        }
    }
}

impl From<fockstab::Error> for Failure {
    fn from(e: fockstab::Error) -> Self {
        match e {
            fockstab::Error::Config(_) | fockstab::Error::InvalidParameter(_) => Failure::Config(e.into()),
            other => Failure::Solver(other.into()),
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(p) = common.preset {
        cfg.preset = p;
    }
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Config(anyhow::anyhow!("--set expects KEY=VALUE, got `{item}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &std::path::Path, value: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Solver(e.into()))?;
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Solver)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli.common)?;
    let dir = cfg.output.dir.clone();
    match cli.command {
        Command::SteadySweep => {
            let jobs = cfg.jobs();
            info!("sweeping {} points on {jobs} worker(s)", cfg.sweep.amplitude.values().len() * cfg.sweep.delta_over_chi.len());
            let result = sweep::run_sweep(&cfg, jobs, false)?;
            if result.failures() > 0 {
                warn!("{} grid point(s) failed; see converged_flag", result.failures());
            }
            let (csv, _) = sweep::write_sweep(&cfg, &result, &dir)?;
            if let Some(m) = result.min_p() {
                println!("min p = {:.4} at omega_c_amp = {:.4} rad/us, delta/chi = {:.4}", m.p, m.omega_c_amp, m.delta_over_chi);
            }
            println!("wrote {}", csv.display());
        }
        Command::TimeEvolve { duration, samples } => {
            if let Some(d) = duration {
                cfg.evolve.duration_kappa_c = d;
            }
            if let Some(n) = samples {
                cfg.evolve.samples = n;
            }
            cfg.validate()?;
            let traj = sweep::run_trajectory(&cfg)?;
            let (csv, _) = sweep::write_trajectory(&cfg, &traj, &dir)?;
            if let Some(last) = traj.rows.last() {
                println!("final p = {:.4} at t = {:.1}/kappa_c", last.p, last.time_kappa_c);
            }
            println!("wrote {}", csv.display());
        }
        Command::Wigner => {
            let run = sweep::run_tomography(&cfg)?;
            let path = sweep::write_tomography(&cfg, &run, &dir)?;
            println!("W(0) = {:.4}, population above n_max = {:.3e}", run.wigner_origin, run.tail_population);
            println!("wrote {}", path.display());
        }
        Command::RateModel {
            kappa,
            kappa_down,
            omega_ab,
            bidirectional,
        } => {
            let drive = if bidirectional { DriveModel::Bidirectional } else { DriveModel::Unidirectional };
            let report = rate_model::report(kappa, kappa_down, omega_ab, drive)?;
            let value = serde_json::to_value(&report).map_err(|e| Failure::Solver(e.into()))?;
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Solver(e.into()))?;
            write_json(&dir.join("rate_model.json"), &value)?;
            println!("{}", serde_json::to_string_pretty(&value).map_err(|e| Failure::Solver(e.into()))?);
        }
        Command::CheckConvergence => {
            let report = sweep::check_convergence(&cfg)?;
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Solver(e.into()))?;
            let value = serde_json::json!({
                "library": "fockstab",
                "version": sweep::VERSION,
                "config": cfg.to_json(),
                "report": report,
            });
            write_json(&dir.join("convergence.json"), &value)?;
            for r in &report.rounds {
                println!(
                    "dims ({},{}) vs ({},{}): p {:?} -> {:?}, storage tail {:.2e}, {}",
                    r.dims.storage,
                    r.dims.cooling,
                    r.enlarged.storage,
                    r.enlarged.cooling,
                    r.p,
                    r.p_enlarged,
                    r.storage_tail,
                    if r.passed { "pass" } else { "fail" }
                );
            }
            if !report.passed {
                let rec = match report.recommended {
                    Some(t) => format!("recommended dims ({},{})", t.storage, t.cooling),
                    None => "no passing truncation found".to_string(),
                };
                return Err(Failure::Convergence(format!(
                    "truncation ({},{}) not converged; {rec}",
                    cfg.truncation.storage, cfg.truncation.cooling
                )));
            }
        }
        Command::Spectrum => {
            let run = sweep::run_spectrum(&cfg)?;
            for w in &run.spectrum.warnings {
                warn!("{w}");
            }
            let (csv, _) = sweep::write_spectrum(&cfg, &run, &dir)?;
            for p in &run.peaks {
                println!("peak at {:.4} MHz, height {:.4e}", p.detuning / 1e6, p.height);
            }
            println!("wrote {}", csv.display());
        }
        Command::ShowConfig => {
            println!("{}", serde_json::to_string_pretty(&cfg.to_json()).map_err(|e| Failure::Solver(e.into()))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are config errors; exit code 2 is reserved for solver failures
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let code = f.code();
            match f {
                Failure::Config(e) => eprintln!("{e:#}"),
                Failure::Solver(e) => eprintln!("solver failure: {e:#}"),
                Failure::Convergence(msg) => eprintln!("convergence check failed: {msg}"),
            }
            ExitCode::from(code)
        }
    }
}
