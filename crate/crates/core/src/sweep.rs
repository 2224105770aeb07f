//! Run configuration and the batch drivers behind the `fockstab` tool:
//! steady-state sweeps, trajectories, tomography export and truncation
//! checks.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, HilbertSpace, StateTolerance};
use crate::lindblad::{evolve_liouvillian, liouvillian, steady_state_with_tolerance, EvolveOptions, STEADY_STATE_RESIDUAL};
use crate::model::{self, Preset, SystemParams, STABILIZATION_STORAGE_DRIVE};
use crate::observables::{self, polarization, Peak, Populations, Spectrum, SpectrumOptions};
use crate::rate_model;
use crate::tomography::{self, PhaseSpaceGrid, TomographySet, DEFAULT_Q_NMAX};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exact CSV header of a sweep.
pub const SWEEP_HEADER: &str = "omega_c_amp,delta_over_chi,p,p0,p1,p2,p3,mean_n_cooling,converged_flag,runtime";
/// CSV header of a trajectory.
pub const TRAJECTORY_HEADER: &str = "time,time_kappa_c,p,p0,p1,p2,p3,mean_n_storage,mean_n_cooling";

pub const SPECTRUM_HEADER: &str = "detuning,response";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truncation {
    pub storage: usize,
    pub cooling: usize,
}

impl Default for Truncation {
    fn default() -> Self {
        Self { storage: 5, cooling: 15 }
    }
}

impl Truncation {
    pub fn space(&self) -> Result<HilbertSpace> {
        HilbertSpace::two_cavity(self.storage, self.cooling)
    }
}

/// Cooling drive axis: either mean photons at conditional resonance
/// (n̄_c = |Ω_C/(κ_c/2)|²) or raw amplitudes in rad/µs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AmplitudeAxis {
    Nbar { values: Vec<f64> },
    Raw { values: Vec<f64> },
}

impl AmplitudeAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            AmplitudeAxis::Nbar { values } | AmplitudeAxis::Raw { values } => values,
        }
    }

    /// Cooling amplitude (rad/µs) of entry `i`.
    pub fn amplitude(&self, i: usize, kappa_c: f64) -> f64 {
        match self {
            AmplitudeAxis::Nbar { values } => values[i].max(0.0).sqrt() * 0.5 * kappa_c,
            AmplitudeAxis::Raw { values } => values[i],
        }
    }
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..n).map(|k| start + (stop - start) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    pub amplitude: AmplitudeAxis,
    pub delta_over_chi: Vec<f64>,
}

impl Default for SweepAxes {
    fn default() -> Self {
        Self {
            amplitude: AmplitudeAxis::Nbar {
                values: linspace(0.0, 1.4, 15),
            },
            delta_over_chi: linspace(0.5, 1.5, 15),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative residual bound for steady states.
    pub steady_residual: f64,
    pub evolve_rtol: f64,
    pub evolve_atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            steady_residual: STEADY_STATE_RESIDUAL,
            evolve_rtol: 1e-8,
            evolve_atol: 1e-10,
        }
    }
}

impl Tolerances {
    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            rtol: self.evolve_rtol,
            atol: self.evolve_atol,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    /// Duration in units of 1/κ_c.
    pub duration_kappa_c: f64,
    /// Number of output times including t = 0.
    pub samples: usize,
    /// Initial Fock occupations `[storage, cooling]`.
    pub initial: [usize; 2],
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            duration_kappa_c: 200.0,
            samples: 401,
            initial: [0, 0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    pub grid: PhaseSpaceGrid,
    pub n_max: usize,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self {
            grid: PhaseSpaceGrid::default(),
            n_max: DEFAULT_Q_NMAX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    pub storage_step: usize,
    pub cooling_step: usize,
    pub p_tol: f64,
    pub mean_n_cooling_tol: f64,
    /// Largest population allowed on levels dropped by the truncation.
    pub tail_tol: f64,
    /// Enlargements tried while searching for recommended dims.
    pub max_rounds: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            storage_step: 2,
            cooling_step: 5,
            p_tol: 1e-3,
            mean_n_cooling_tol: 1e-2,
            tail_tol: 1e-3,
            max_rounds: 3,
        }
    }
}

/// Probe sweep for the photon-number-resolved cooling spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub storage_nbar: f64,
    /// Probe amplitude in units of κ_c; `None` means 0.1.
    pub probe_over_kappa_c: Option<f64>,
    /// Probe detuning axis f_C⁰ − f_probe (Hz).
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub storage_dim: usize,
    pub cooling_dim: usize,
    /// Peaks below this fraction of the tallest one are not reported.
    pub peak_threshold: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let o = SpectrumOptions::default();
        Self {
            storage_nbar: o.storage_nbar,
            probe_over_kappa_c: None,
            start: -3e6,
            stop: 15e6,
            points: 3001,
            storage_dim: o.storage_dim,
            cooling_dim: o.cooling_dim,
            peak_threshold: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Everything a run needs. All fields have defaults, so `{}` is a valid
/// config (the stabilization preset at its operating point).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Preset,
    /// Partial [`SystemParams`] overriding the preset field by field.
    pub params: Map<String, Value>,
    /// Ω_S / κ_c, applied after `params` so it tracks an overridden κ_c.
    pub storage_drive_over_kappa_c: Option<f64>,
    /// Operating-point cooling drive as n̄_c.
    pub cooling_nbar: Option<f64>,
    /// Operating-point Δ/χ_sc.
    pub delta_over_chi: Option<f64>,
    pub truncation: Truncation,
    pub sweep: SweepAxes,
    pub tolerances: Tolerances,
    pub evolve: EvolveConfig,
    pub tomography: TomographyConfig,
    pub convergence: ConvergenceConfig,
    pub spectrum: SpectrumConfig,
    pub output: OutputConfig,
    /// Worker threads; `None` means available parallelism.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Stabilization,
            params: Map::new(),
            storage_drive_over_kappa_c: None,
            cooling_nbar: None,
            delta_over_chi: None,
            truncation: Truncation::default(),
            sweep: SweepAxes::default(),
            tolerances: Tolerances::default(),
            evolve: EvolveConfig::default(),
            tomography: TomographyConfig::default(),
            convergence: ConvergenceConfig::default(),
            spectrum: SpectrumConfig::default(),
            output: OutputConfig::default(),
            jobs: None,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config is always serializable")
    }

    /// Set a field by dotted path (`truncation.cooling`, `params.kappa_s`, ...).
    /// The value is parsed as JSON when possible and kept as a string otherwise.
    pub fn set(&mut self, path: &str, raw: &str) -> Result<()> {
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = self.to_json();
        let keys: Vec<&str> = path.split('.').collect();
        if keys.iter().any(|k| k.is_empty()) {
            return Err(config_err(format!("bad field path `{path}`")));
        }
        let mut node = &mut root;
        for key in &keys[..keys.len() - 1] {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| config_err(format!("`{path}`: `{key}` is not inside an object")))?;
            let child = obj.entry(key.to_string()).or_insert(Value::Null);
            if child.is_null() {
                *child = Value::Object(Map::new());
            }
            node = child;
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_err(format!("`{path}` does not name an object field")))?;
        obj.insert(keys[keys.len() - 1].to_string(), value);
        let updated: RunConfig =
            serde_json::from_value(root).map_err(|e| config_err(format!("setting `{path}`: {e}")))?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.truncation.storage < 2 || self.truncation.cooling < 2 {
            return Err(config_err("truncations must be at least 2"));
        }
        if self.sweep.amplitude.values().is_empty() || self.sweep.delta_over_chi.is_empty() {
            return Err(config_err("sweep axes must be nonempty"));
        }
        if let AmplitudeAxis::Nbar { values } = &self.sweep.amplitude {
            if values.iter().any(|v| !(*v >= 0.0)) {
                return Err(config_err("n̄_c values must be ≥ 0"));
            }
        }
        if !(self.evolve.duration_kappa_c >= 0.0) {
            return Err(config_err("evolution duration must be ≥ 0"));
        }
        if self.evolve.samples < 2 && self.evolve.duration_kappa_c > 0.0 {
            return Err(config_err("a nonzero duration needs at least 2 samples"));
        }
        let sp = &self.spectrum;
        if sp.points < 3 || !(sp.stop > sp.start) {
            return Err(config_err("spectrum axis needs stop > start and at least 3 points"));
        }
        if !(sp.storage_nbar >= 0.0) || sp.storage_dim < 1 || sp.cooling_dim < 2 {
            return Err(config_err("spectrum needs storage_nbar ≥ 0, storage_dim ≥ 1 and cooling_dim ≥ 2"));
        }
        if self.jobs == Some(0) {
            return Err(config_err("jobs must be ≥ 1"));
        }
        self.tomography.grid.validate().map_err(|e| config_err(e.to_string()))?;
        self.system_params().map(|_| ())
    }

    /// Preset, then `params`, then the operating-point knobs.
    pub fn system_params(&self) -> Result<SystemParams> {
        let base = SystemParams::preset(self.preset);
        let mut value = serde_json::to_value(&base)?;
        let obj = value.as_object_mut().expect("params serialize to an object");
        for (k, v) in &self.params {
            if !obj.contains_key(k) {
                return Err(config_err(format!("unknown parameter `{k}`")));
            }
            obj.insert(k.clone(), v.clone());
        }
        let mut params: SystemParams =
            serde_json::from_value(value).map_err(|e| config_err(format!("params: {e}")))?;

        let stabilization = self.preset == Preset::Stabilization;
        let overridden = |k: &str| self.params.contains_key(k);
        let omega_s = self
            .storage_drive_over_kappa_c
            .or((stabilization && !overridden("storage_drive")).then_some(STABILIZATION_STORAGE_DRIVE));
        if let Some(x) = omega_s {
            params.storage_drive = crate::C64::new(x * params.kappa_c_rate(), 0.0);
        }
        let nbar = self
            .cooling_nbar
            .or((stabilization && !overridden("cooling_drive")).then_some(model::DEFAULT_COOLING_NBAR));
        if let Some(n) = nbar {
            if !(n >= 0.0) {
                return Err(config_err("cooling_nbar must be ≥ 0"));
            }
            params.set_cooling_nbar(n);
        }
        let delta = self
            .delta_over_chi
            .or((stabilization && !overridden("omega_dc")).then_some(1.0));
        if let Some(d) = delta {
            params.set_cooling_detuning_over_chi(d);
        }
        params.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(params)
    }

    pub fn jobs(&self) -> usize {
        self.jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

/// Unit conventions echoed into every JSON sidecar.
pub fn units() -> Value {
    json!({
        "frequencies": "Hz (cycles per second, the f = omega/2pi values)",
        "kappa": "quoted as kappa/2pi in Hz unless kappa_convention = angular",
        "internal_rates": "rad/us",
        "drive_amplitudes": "rad/us (H contains Omega b^dag + Omega^* b)",
        "time": "us",
        "omega_c_amp": "rad/us",
        "delta_over_chi": "(f_C0 - f_d) / chi_sc",
        "runtime": "s",
        "effective_temperature": "K",
    })
}

fn sidecar(config: &RunConfig, params: &SystemParams, extra: Value) -> Value {
    let mut v = json!({
        "library": "fockstab",
        "version": VERSION,
        "units": units(),
        "config": config.to_json(),
        "params": params,
        "derived": {
            "kappa_s_rad_per_us": params.kappa_s_rate(),
            "kappa_c_rad_per_us": params.kappa_c_rate(),
            "chi_sc_rad_per_us": params.chi_sc_rate(),
            "kappa_c_over_kappa_s": params.kappa_c / params.kappa_s,
        },
    });
    if let (Some(obj), Value::Object(extra)) = (v.as_object_mut(), extra) {
        obj.extend(extra);
    }
    v
}

/// Steady state of one operating point and its figures of merit.
#[derive(Clone, Debug)]
pub struct PointSolution {
    pub rho: DensityMatrix,
    pub storage: Populations,
    pub mean_n_cooling: f64,
    /// `None` when P(0) + P(1) = 0.
    pub p: Option<f64>,
}

pub fn solve_point(params: &SystemParams, dims: Truncation, residual_tol: f64) -> Result<PointSolution> {
    let space = dims.space()?;
    let h = model::driven_hamiltonian(params, &space)?;
    let ops = model::collapse_operators(params, &space)?;
    let rho = steady_state_with_tolerance(&liouvillian(&h, &ops)?, residual_tol)?;
    let storage = observables::populations(&rho, fock::STORAGE)?;
    storage.check()?;
    let mean_n_cooling = observables::mean_cooling_photons(&rho)?;
    let p = polarization(storage.get(0), storage.get(1)).ok();
    Ok(PointSolution {
        rho,
        storage,
        mean_n_cooling,
        p,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub omega_c_amp: f64,
    pub delta_over_chi: f64,
    pub p: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub mean_n_cooling: f64,
    pub converged_flag: bool,
    pub runtime: f64,
}

impl SweepRow {
    fn failed(omega_c_amp: f64, delta_over_chi: f64, runtime: f64) -> Self {
        Self {
            omega_c_amp,
            delta_over_chi,
            p: f64::NAN,
            p0: f64::NAN,
            p1: f64::NAN,
            p2: f64::NAN,
            p3: f64::NAN,
            mean_n_cooling: f64::NAN,
            converged_flag: false,
            runtime,
        }
    }

    /// Every column except the wall-clock runtime.
    pub fn same_result(&self, other: &SweepRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        eq(self.omega_c_amp, other.omega_c_amp)
            && eq(self.delta_over_chi, other.delta_over_chi)
            && eq(self.p, other.p)
            && eq(self.p0, other.p0)
            && eq(self.p1, other.p1)
            && eq(self.p2, other.p2)
            && eq(self.p3, other.p3)
            && eq(self.mean_n_cooling, other.mean_n_cooling)
            && self.converged_flag == other.converged_flag
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.omega_c_amp,
            self.delta_over_chi,
            self.p,
            self.p0,
            self.p1,
            self.p2,
            self.p3,
            self.mean_n_cooling,
            self.converged_flag,
            self.runtime
        )
    }
}

/// Rows in grid order: index `i·n_delta + j` holds amplitude `i`, detuning `j`.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub n_amplitude: usize,
    pub n_delta: usize,
    /// Steady states of converged points, kept only on request.
    pub states: Vec<Option<DensityMatrix>>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.converged_flag).count()
    }

    /// Converged row with the smallest polarization.
    pub fn min_p(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.converged_flag && r.p.is_finite())
            .min_by(|a, b| a.p.total_cmp(&b.p))
    }

    pub fn max_p(&self) -> Option<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| r.converged_flag && r.p.is_finite())
            .max_by(|a, b| a.p.total_cmp(&b.p))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SWEEP_HEADER}")?;
        for row in &self.rows {
            writeln!(w, "{}", row.csv_line())?;
        }
        Ok(())
    }
}

fn sweep_point(
    config: &RunConfig,
    base: &SystemParams,
    k: usize,
    keep_state: bool,
) -> (SweepRow, Option<DensityMatrix>) {
    let n_delta = config.sweep.delta_over_chi.len();
    let (i, j) = (k / n_delta, k % n_delta);
    let start = Instant::now();
    let mut params = base.clone();
    let amp = config.sweep.amplitude.amplitude(i, params.kappa_c_rate());
    let delta = config.sweep.delta_over_chi[j];
    params.cooling_drive = crate::C64::new(amp, 0.0);
    params.set_cooling_detuning_over_chi(delta);
    match solve_point(&params, config.truncation, config.tolerances.steady_residual) {
        Ok(sol) => {
            let s = &sol.storage;
            let row = SweepRow {
                omega_c_amp: amp,
                delta_over_chi: delta,
                p: sol.p.unwrap_or(f64::NAN),
                p0: s.get(0),
                p1: s.get(1),
                p2: s.get(2),
                p3: s.get(3),
                mean_n_cooling: sol.mean_n_cooling,
                converged_flag: true,
                runtime: start.elapsed().as_secs_f64(),
            };
            debug!("point {k}: Ω_C = {amp:.4}, Δ/χ = {delta:.3}, p = {:.5}", row.p);
            (row, keep_state.then_some(sol.rho))
        }
        Err(e) => {
            warn!("point {k} (Ω_C = {amp}, Δ/χ = {delta}) failed: {e}");
            (SweepRow::failed(amp, delta, start.elapsed().as_secs_f64()), None)
        }
    }
}

/// Solve every grid point. Failed points are flagged and the sweep goes on;
/// only a sweep in which every point fails is an error.
pub fn run_sweep(config: &RunConfig, jobs: usize, keep_states: bool) -> Result<SweepResult> {
    config.validate()?;
    let base = config.system_params()?;
    let n_amplitude = config.sweep.amplitude.values().len();
    let n_delta = config.sweep.delta_over_chi.len();
    let n = n_amplitude * n_delta;
    let results: Vec<(SweepRow, Option<DensityMatrix>)> = if jobs <= 1 {
        (0..n).map(|k| sweep_point(config, &base, k, keep_states)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| config_err(format!("thread pool: {e}")))?;
        // indexed parallel collect keeps grid order
        pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|k| sweep_point(config, &base, k, keep_states))
                .collect()
        })
    };
    let (rows, states): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let result = SweepResult {
        rows,
        n_amplitude,
        n_delta,
        states,
    };
    if result.failures() == n {
        return Err(Error::NonUniqueSteadyState(format!("all {n} sweep points failed")));
    }
    Ok(result)
}

/// Write `sweep.csv` and `sweep.json` into `dir`.
pub fn write_sweep(config: &RunConfig, result: &SweepResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let params = config.system_params()?;
    let csv_path = dir.join("sweep.csv");
    let json_path = dir.join("sweep.json");
    result.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    let axis_kind = match config.sweep.amplitude {
        AmplitudeAxis::Nbar { .. } => "nbar",
        AmplitudeAxis::Raw { .. } => "raw",
    };
    let extra = json!({
        "kind": "steady_sweep",
        "csv": csv_path.file_name().and_then(|s| s.to_str()),
        "columns": SWEEP_HEADER.split(',').collect::<Vec<_>>(),
        "row_order": "amplitude-major: row i * n_delta + j holds amplitude i, detuning j",
        "axes": {
            "amplitude_kind": axis_kind,
            "amplitude_values": config.sweep.amplitude.values(),
            "omega_c_amp": (0..result.n_amplitude)
                .map(|i| config.sweep.amplitude.amplitude(i, params.kappa_c_rate()))
                .collect::<Vec<_>>(),
            "nbar_definition": "nbar_c = |Omega_C / (kappa_c/2)|^2",
            "delta_over_chi": config.sweep.delta_over_chi,
        },
        "failed_points": result.failures(),
        "min_p": result.min_p(),
        "max_p": result.max_p(),
    });
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar(config, &params, extra))?)?;
    Ok((csv_path, json_path))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub time: f64,
    pub time_kappa_c: f64,
    pub p: f64,
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub mean_n_storage: f64,
    pub mean_n_cooling: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    pub states: Vec<DensityMatrix>,
    pub steps: usize,
}

impl Trajectory {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRAJECTORY_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.time, r.time_kappa_c, r.p, r.p0, r.p1, r.p2, r.p3, r.mean_n_storage, r.mean_n_cooling
            )?;
        }
        Ok(())
    }

    pub fn column(&self, f: impl Fn(&TrajectoryRow) -> f64) -> Vec<f64> {
        self.rows.iter().map(f).collect()
    }
}

/// Evolve `params` from the Fock state `initial` and record populations at
/// `samples` equally spaced times over `duration_kappa_c / κ_c`.
pub fn trajectory(
    params: &SystemParams,
    dims: Truncation,
    initial: [usize; 2],
    duration_kappa_c: f64,
    samples: usize,
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    let space = dims.space()?;
    let h = model::driven_hamiltonian(params, &space)?;
    let ops = model::collapse_operators(params, &space)?;
    let l = liouvillian(&h, &ops)?;
    let rho0 = DensityMatrix::fock(&space, &initial)?;
    let kappa_c = params.kappa_c_rate();
    if !(kappa_c > 0.0) {
        return Err(Error::InvalidParameter("time axis is in units of 1/κ_c, which must be positive".into()));
    }
    let t_end = duration_kappa_c / kappa_c;
    let times = if duration_kappa_c == 0.0 { vec![0.0] } else { linspace(0.0, t_end, samples.max(2)) };
    let res = evolve_liouvillian(&l, &rho0, &times, opts)?;
    let mut rows = Vec::with_capacity(times.len());
    for (t, rho) in res.times.iter().zip(&res.states) {
        let s = observables::populations(rho, fock::STORAGE)?;
        let c = observables::populations(rho, fock::COOLING)?;
        rows.push(TrajectoryRow {
            time: *t,
            time_kappa_c: t * kappa_c,
            p: polarization(s.get(0), s.get(1)).unwrap_or(f64::NAN),
            p0: s.get(0),
            p1: s.get(1),
            p2: s.get(2),
            p3: s.get(3),
            mean_n_storage: s.mean(),
            mean_n_cooling: c.mean(),
        });
    }
    Ok(Trajectory {
        rows,
        states: res.states,
        steps: res.steps,
    })
}

pub fn run_trajectory(config: &RunConfig) -> Result<Trajectory> {
    config.validate()?;
    let params = config.system_params()?;
    trajectory(
        &params,
        config.truncation,
        config.evolve.initial,
        config.evolve.duration_kappa_c,
        config.evolve.samples,
        &config.tolerances.evolve_options(),
    )
}

pub fn write_trajectory(config: &RunConfig, traj: &Trajectory, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let params = config.system_params()?;
    let csv_path = dir.join("trajectory.csv");
    let json_path = dir.join("trajectory.json");
    traj.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv_path)?))?;
    let extra = json!({
        "kind": "time_evolve",
        "csv": "trajectory.csv",
        "columns": TRAJECTORY_HEADER.split(',').collect::<Vec<_>>(),
        "integrator": "Dormand-Prince 5(4), adaptive",
        "accepted_steps": traj.steps,
        "final": traj.rows.last(),
    });
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar(config, &params, extra))?)?;
    Ok((csv_path, json_path))
}

/// Reduced storage state of the operating point and its phase-space maps.
#[derive(Clone, Debug)]
pub struct TomographyRun {
    pub storage: DensityMatrix,
    pub maps: TomographySet,
    /// Population above `n_max` in the reduced storage state.
    pub tail_population: f64,
    pub wigner_origin: f64,
}

pub fn run_tomography(config: &RunConfig) -> Result<TomographyRun> {
    config.validate()?;
    let params = config.system_params()?;
    let sol = solve_point(&params, config.truncation, config.tolerances.steady_residual)?;
    let storage = tomography::reduced_density(&sol.rho, fock::STORAGE)?;
    storage.validate(StateTolerance::default())?;
    let n_max = config.tomography.n_max.min(storage.dim() - 1);
    let maps = tomography::tomography(&storage, n_max, &config.tomography.grid)?;
    Ok(TomographyRun {
        tail_population: sol.storage.tail_above(n_max),
        wigner_origin: tomography::wigner_direct(&storage, crate::C64::new(0.0, 0.0))?,
        storage,
        maps,
    })
}

pub fn write_tomography(config: &RunConfig, run: &TomographyRun, dir: &Path) -> Result<PathBuf> {
    run.maps.save(dir)?;
    let params = config.system_params()?;
    let max_dev = run.maps.wigner.max_abs_diff(&run.maps.wigner_from_q)?;
    let extra = json!({
        "kind": "wigner",
        "files": ["q0..qN.{csv,json}", "wigner_from_q", "wigner_direct", "truncation_bound"],
        "storage_populations": run.storage.diagonal(),
        "wigner_origin": run.wigner_origin,
        "population_above_n_max": run.tail_population,
        "max_abs_wigner_minus_from_q": max_dev,
    });
    let path = dir.join("tomography.json");
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar(config, &params, extra))?)?;
    Ok(path)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRound {
    pub dims: Truncation,
    pub enlarged: Truncation,
    pub p: Option<f64>,
    pub p_enlarged: Option<f64>,
    pub mean_n_cooling: f64,
    pub mean_n_cooling_enlarged: f64,
    /// Enlarged-solve population on storage levels ≥ `dims.storage`.
    pub storage_tail: f64,
    /// Enlarged-solve population on cooling levels ≥ `dims.cooling`.
    pub cooling_tail: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub rounds: Vec<ConvergenceRound>,
    /// Whether the configured truncation passed.
    pub passed: bool,
    /// Smallest tried truncation that passed, if any.
    pub recommended: Option<Truncation>,
}

fn tail_from(pops: &Populations, level: usize) -> f64 {
    if level == 0 {
        1.0
    } else {
        pops.tail_above(level - 1)
    }
}

pub fn convergence_round(params: &SystemParams, dims: Truncation, cfg: &ConvergenceConfig, tol: f64) -> Result<ConvergenceRound> {
    let enlarged = Truncation {
        storage: dims.storage + cfg.storage_step,
        cooling: dims.cooling + cfg.cooling_step,
    };
    let base = solve_point(params, dims, tol)?;
    let big = solve_point(params, enlarged, tol)?;
    let cooling_big = observables::populations(&big.rho, fock::COOLING)?;
    let storage_tail = tail_from(&big.storage, dims.storage);
    let cooling_tail = tail_from(&cooling_big, dims.cooling);
    let dp = match (base.p, big.p) {
        (Some(a), Some(b)) => (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    };
    let dn = (base.mean_n_cooling - big.mean_n_cooling).abs();
    let passed = dp < cfg.p_tol && dn < cfg.mean_n_cooling_tol && storage_tail <= cfg.tail_tol;
    Ok(ConvergenceRound {
        dims,
        enlarged,
        p: base.p,
        p_enlarged: big.p,
        mean_n_cooling: base.mean_n_cooling,
        mean_n_cooling_enlarged: big.mean_n_cooling,
        storage_tail,
        cooling_tail,
        passed,
    })
}

/// Compare the configured truncation against an enlarged one at the
/// operating point; on failure keep enlarging to find a recommendation.
pub fn check_convergence(config: &RunConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let params = config.system_params()?;
    let cfg = &config.convergence;
    let mut dims = config.truncation;
    let mut rounds = Vec::new();
    let mut recommended = None;
    for _ in 0..=cfg.max_rounds {
        let round = convergence_round(&params, dims, cfg, config.tolerances.steady_residual)?;
        let passed = round.passed;
        let next = round.enlarged;
        rounds.push(round);
        if passed {
            recommended = Some(dims);
            break;
        }
        dims = next;
    }
    Ok(ConvergenceReport {
        passed: rounds.first().map(|r| r.passed).unwrap_or(false),
        rounds,
        recommended,
    })
}

#[derive(Clone, Debug)]
pub struct SpectrumRun {
    pub spectrum: Spectrum,
    pub peaks: Vec<Peak>,
}

pub fn run_spectrum(config: &RunConfig) -> Result<SpectrumRun> {
    config.validate()?;
    let params = config.system_params()?;
    let sp = &config.spectrum;
    let opts = SpectrumOptions {
        storage_nbar: sp.storage_nbar,
        probe_amplitude: sp.probe_over_kappa_c.map(|x| x * params.kappa_c_rate()),
        storage_dim: sp.storage_dim,
        cooling_dim: sp.cooling_dim,
    };
    let spectrum = observables::conditional_spectrum(&params, &linspace(sp.start, sp.stop, sp.points), &opts)?;
    let peaks = observables::resolved_peaks(&spectrum, sp.peak_threshold);
    Ok(SpectrumRun { spectrum, peaks })
}

pub fn write_spectrum(config: &RunConfig, run: &SpectrumRun, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let params = config.system_params()?;
    let csv_path = dir.join("spectrum.csv");
    let json_path = dir.join("spectrum.json");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv_path)?);
    writeln!(w, "{SPECTRUM_HEADER}")?;
    for p in &run.spectrum.points {
        writeln!(w, "{},{}", p.detuning, p.response)?;
    }
    w.flush()?;
    let extra = json!({
        "kind": "spectrum",
        "csv": "spectrum.csv",
        "columns": SPECTRUM_HEADER.split(',').collect::<Vec<_>>(),
        "detuning": "f_C0 - f_probe in Hz",
        "response": "steady-state <c^dag c> averaged over the storage photon-number distribution",
        "storage_weights": run.spectrum.weights,
        "probe_amplitude_rad_per_us": run.spectrum.probe_amplitude,
        "peaks": run.peaks,
        "warnings": run.spectrum.warnings,
    });
    std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar(config, &params, extra))?)?;
    Ok((csv_path, json_path))
}

/// κ↑ fitted to the storage P(1)(t) from vacuum over `[0, window / κ_c]`.
#[derive(Clone, Debug, Serialize)]
pub struct RateFit {
    pub rate: f64,
    pub rate_over_kappa_c: f64,
    pub p1_steady: f64,
    pub window_kappa_c: f64,
}

pub fn fit_stabilization_rate(
    params: &SystemParams,
    dims: Truncation,
    window_kappa_c: f64,
    samples: usize,
    opts: &EvolveOptions,
) -> Result<RateFit> {
    let sol = solve_point(params, dims, STEADY_STATE_RESIDUAL)?;
    let traj = trajectory(params, dims, [0, 0], window_kappa_c, samples, opts)?;
    let times = traj.column(|r| r.time);
    let p1 = traj.column(|r| r.p1);
    let p1_steady = sol.storage.get(1);
    let rate = rate_model::fit_approach_rate(&times, &p1, p1_steady)?;
    Ok(RateFit {
        rate,
        rate_over_kappa_c: rate / params.kappa_c_rate(),
        p1_steady,
        window_kappa_c,
    })
}

/// Storage-cavity P(1) at the operating point of `params`.
pub fn steady_p1(params: &SystemParams, dims: Truncation) -> Result<f64> {
    Ok(solve_point(params, dims, STEADY_STATE_RESIDUAL)?.storage.get(1))
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimizedPoint {
    pub storage_drive_over_kappa_c: f64,
    pub cooling_nbar: f64,
    pub delta_over_chi: f64,
    pub p1: f64,
    pub evaluations: usize,
}

/// Maximize the steady-state storage P(1) over (Ω_S/κ_c, n̄_c, Δ/χ_sc) with
/// Nelder–Mead started at `start`.
pub fn optimize_p1(params: &SystemParams, dims: Truncation, start: [f64; 3], max_evals: usize) -> Result<OptimizedPoint> {
    let kappa_c = params.kappa_c_rate();
    let eval = |x: &[f64; 3]| -> f64 {
        if x[0] <= 0.0 || x[1] < 0.0 {
            return 1.0;
        }
        let mut p = params.clone();
        p.storage_drive = crate::C64::new(x[0] * kappa_c, 0.0);
        p.set_cooling_nbar(x[1]);
        p.set_cooling_detuning_over_chi(x[2]);
        match steady_p1(&p, dims) {
            Ok(v) => -v,
            Err(_) => 1.0,
        }
    };
    let steps = [0.3 * start[0].abs().max(0.05), 0.3 * start[1].abs().max(1.0), 0.2];
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((start, eval(&start)));
    for d in 0..3 {
        let mut x = start;
        x[d] += steps[d];
        simplex.push((x, eval(&x)));
    }
    let mut evals = 4;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[3].1 - simplex[0].1).abs() < 1e-7 {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += x[d] / 3.0;
            }
        }
        let along = |t: f64| -> [f64; 3] {
            let mut y = [0.0; 3];
            for d in 0..3 {
                y[d] = centroid[d] + t * (simplex[3].0[d] - centroid[d]);
            }
            y
        };
        let xr = along(-1.0);
        let fr = eval(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe);
            evals += 1;
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let xc = if fr < simplex[3].1 { along(-0.5) } else { along(0.5) };
            let fc = eval(&xc);
            evals += 1;
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for item in simplex.iter_mut().skip(1) {
                    let mut y = [0.0; 3];
                    for d in 0..3 {
                        y[d] = best[d] + 0.5 * (item.0[d] - best[d]);
                    }
                    *item = (y, eval(&y));
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex[0];
    Ok(OptimizedPoint {
        storage_drive_over_kappa_c: x[0],
        cooling_nbar: x[1],
        delta_over_chi: x[2],
        p1: -f,
        evaluations: evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        RunConfig {
            truncation: Truncation { storage: 3, cooling: 4 },
            sweep: SweepAxes {
                amplitude: AmplitudeAxis::Nbar { values: vec![0.0, 0.5] },
                delta_over_chi: vec![0.0, 1.0, 2.0],
            },
            ..Default::default()
        }
    }

    #[test]
    fn empty_config_is_the_operating_point() {
        let cfg = RunConfig::from_json_str("{}").unwrap();
        let p = cfg.system_params().unwrap();
        assert_eq!(p, SystemParams::stabilization());
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        assert!(matches!(RunConfig::from_json_str(r#"{"bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(
            RunConfig::from_json_str(r#"{"params": {"kappa_x": 1}}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json_str(r#"{"truncation": {"storage": 1, "cooling": 4}}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_json_str(r#"{"sweep": {"amplitude": {"kind": "nbar", "values": []}, "delta_over_chi": [1]}}"#),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut cfg = RunConfig::default();
        cfg.set("params.kappa_c", "3400000").unwrap();
        cfg.set("truncation.cooling", "9").unwrap();
        cfg.set("cooling_nbar", "4").unwrap();
        let p = cfg.system_params().unwrap();
        assert_eq!(cfg.truncation.cooling, 9);
        assert!((p.cooling_nbar() - 4.0).abs() < 1e-12);
        assert!((p.storage_drive.re - STABILIZATION_STORAGE_DRIVE * p.kappa_c_rate()).abs() < 1e-12);
        assert!(cfg.set("truncation.nope", "3").is_err());
        assert!(cfg.set("preset", "nonsense").is_err());
        cfg.set("preset", "spectroscopy").unwrap();
        assert_eq!(cfg.preset, Preset::Spectroscopy);
    }

    #[test]
    fn spectroscopy_preset_keeps_drives_off() {
        let cfg = RunConfig::from_json_str(r#"{"preset": "spectroscopy"}"#).unwrap();
        let p = cfg.system_params().unwrap();
        assert_eq!(p.storage_drive, crate::C64::new(0.0, 0.0));
        assert_eq!(p.cooling_drive, crate::C64::new(0.0, 0.0));
    }

    #[test]
    fn sweep_rows_and_csv() {
        let cfg = tiny();
        let res = run_sweep(&cfg, 1, false).unwrap();
        assert_eq!(res.rows.len(), 6);
        assert_eq!(res.failures(), 0);
        for r in &res.rows {
            assert!(r.p0 + r.p1 + r.p2 + r.p3 <= 1.0 + 1e-8);
            assert!((r.p - (r.p0 - r.p1) / (r.p0 + r.p1)).abs() < 1e-12);
        }
        assert_eq!(res.rows[4].delta_over_chi, 1.0);
        assert!(res.rows[4].omega_c_amp > 0.0);
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), SWEEP_HEADER);
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn parallel_matches_serial() {
        let cfg = tiny();
        let serial = run_sweep(&cfg, 1, false).unwrap();
        let parallel = run_sweep(&cfg, 3, false).unwrap();
        assert_eq!(serial.rows.len(), parallel.rows.len());
        for (a, b) in serial.rows.iter().zip(&parallel.rows) {
            assert!(a.same_result(b), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn zero_duration_trajectory_is_the_initial_row() {
        let mut cfg = tiny();
        cfg.evolve.duration_kappa_c = 0.0;
        let traj = run_trajectory(&cfg).unwrap();
        assert_eq!(traj.rows.len(), 1);
        assert_eq!(traj.rows[0].p0, 1.0);
    }

    #[test]
    fn undriven_single_photon_decays_exponentially() {
        let mut cfg = tiny();
        cfg.storage_drive_over_kappa_c = Some(0.0);
        cfg.cooling_nbar = Some(0.0);
        cfg.evolve = EvolveConfig {
            duration_kappa_c: 3.0,
            samples: 7,
            initial: [1, 0],
        };
        let params = cfg.system_params().unwrap();
        let traj = run_trajectory(&cfg).unwrap();
        let ks = params.kappa_s_rate();
        for r in &traj.rows {
            assert!((r.p1 - (-ks * r.time).exp()).abs() < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn linear_cavity_truncation_rule() {
        // driven damped linear storage mode with |α| = 1; the coherent tail
        // bound |α|² + 4|α| = 5 is where the check starts to pass once a
        // couple of guard levels are added for the P(0)/P(1) ratio
        let mut params = SystemParams::spectroscopy();
        params.a_s = 0.0;
        params.a_c = 0.0;
        params.chi_sc = 0.0;
        params.kappa_s = 100e3;
        let ks = params.kappa_s_rate();
        params.storage_drive = crate::C64::new(0.5 * ks, 0.0);
        let rule = 5;
        let cfg = ConvergenceConfig::default();
        let round = |storage| convergence_round(&params, Truncation { storage, cooling: 2 }, &cfg, 1e-10).unwrap();
        assert!(round(rule + 2).passed);
        assert!(round(rule + 2).storage_tail < 1e-4);
        let bad = round(2);
        assert!(!bad.passed);
        assert!(bad.storage_tail > 1e-3);

        let mut run = RunConfig {
            preset: Preset::Spectroscopy,
            ..Default::default()
        };
        for (k, v) in [("a_s", 0.0), ("a_c", 0.0), ("chi_sc", 0.0), ("kappa_s", 100e3)] {
            run.params.insert(k.into(), serde_json::json!(v));
        }
        run.params.insert("storage_drive".into(), serde_json::json!([0.5 * ks, 0.0]));
        run.truncation = Truncation { storage: 2, cooling: 2 };
        let report = check_convergence(&run).unwrap();
        assert!(!report.passed);
        let rec = report.recommended.unwrap();
        assert!(rec.storage >= rule && rec.storage <= rule + 4, "{rec:?}");
    }

    #[test]
    fn nelder_mead_improves_on_start() {
        let params = SystemParams::stabilization();
        let dims = Truncation { storage: 3, cooling: 6 };
        let start = [STABILIZATION_STORAGE_DRIVE, 1.0, 1.0];
        let p_start = steady_p1(&params, dims).unwrap();
        let opt = optimize_p1(&params, dims, start, 40).unwrap();
        assert!(opt.p1 >= p_start - 1e-12);
    }
}
