//! Figures of merit: photon populations, polarization, effective temperature
//! and the photon-number-resolved cooling spectrum.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, Operator};
use crate::lindblad::{liouvillian, steady_state};
use crate::model::{hz_to_angular, SystemParams};

/// Planck constant (J·s).
pub const PLANCK: f64 = 6.626070150e-34;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380649000e-23;

/// Photon-number distribution of one mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Populations {
    pub p_n: Vec<f64>,
}

impl Populations {
    pub fn get(&self, n: usize) -> f64 {
        self.p_n.get(n).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.p_n.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.p_n.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Probability of finding more than `n` photons.
    pub fn tail_above(&self, n: usize) -> f64 {
        self.p_n.iter().skip(n + 1).sum::<f64>().max(0.0)
    }

    pub fn check(&self) -> Result<()> {
        if let Some(p) = self.p_n.iter().find(|p| !(**p >= -1e-10 && **p <= 1.0 + 1e-10)) {
            return Err(Error::InvalidState(format!("population {p} outside [0, 1]")));
        }
        let total = self.total();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidState(format!("populations sum to {total}")));
        }
        Ok(())
    }
}

/// Diagonal of the reduced state of `mode`.
pub fn populations(rho: &DensityMatrix, mode: &str) -> Result<Populations> {
    let p_n = if rho.space().modes().len() == 1 {
        rho.space().mode_index(mode)?;
        rho.diagonal()
    } else {
        rho.reduce_to(mode)?.diagonal()
    };
    Ok(Populations { p_n })
}

/// `(p0 − p1)/(p0 + p1)`.
pub fn polarization(p0: f64, p1: f64) -> Result<f64> {
    let s = p0 + p1;
    if s <= 0.0 {
        return Err(Error::UndefinedPolarization);
    }
    Ok(((p0 - p1) / s).clamp(-1.0, 1.0))
}

/// Spin temperature of a two-level population with polarization `p` and
/// transition frequency `f01` (Hz): `T = h f01 / (2 k_B atanh p)`.
pub fn effective_temperature(p: f64, f01: f64) -> Result<f64> {
    if p == 0.0 {
        return Err(Error::InfiniteTemperature);
    }
    if p.abs() >= 1.0 {
        return Err(Error::ZeroTemperature);
    }
    if !p.is_finite() {
        return Err(Error::InvalidParameter(format!("polarization {p}")));
    }
    Ok(PLANCK * f01 / (2.0 * BOLTZMANN * p.atanh()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationRecord {
    pub p: f64,
    pub p0: f64,
    pub p1: f64,
    /// Kelvin; ±∞ when p = 0 and 0 when |p| = 1.
    pub effective_temperature: f64,
}

impl PolarizationRecord {
    pub fn new(p0: f64, p1: f64, f01: f64) -> Result<Self> {
        let p = polarization(p0, p1)?;
        let effective_temperature = match effective_temperature(p, f01) {
            Ok(t) => t,
            Err(Error::InfiniteTemperature) => f64::INFINITY,
            Err(Error::ZeroTemperature) => 0.0,
            Err(e) => return Err(e),
        };
        Ok(Self { p, p0, p1, effective_temperature })
    }

    pub fn from_populations(pops: &Populations, f01: f64) -> Result<Self> {
        Self::new(pops.get(0), pops.get(1), f01)
    }
}

/// Settings for [`conditional_spectrum`].
#[derive(Clone, Debug)]
pub struct SpectrumOptions {
    /// Mean storage photon number of the prepared displaced state.
    pub storage_nbar: f64,
    /// Probe amplitude on the cooling mode (rad/µs); `None` means κ_c/10.
    pub probe_amplitude: Option<f64>,
    /// Storage Fock levels kept in the photon-number sum.
    pub storage_dim: usize,
    /// Cooling Fock levels.
    pub cooling_dim: usize,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            storage_nbar: 1.5,
            probe_amplitude: None,
            storage_dim: 12,
            cooling_dim: 6,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumPoint {
    /// Probe detuning Δ = f_C⁰ − f_probe (Hz).
    pub detuning: f64,
    /// Steady-state ⟨c†c⟩.
    pub response: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Spectrum {
    pub points: Vec<SpectrumPoint>,
    /// Storage photon-number weights used in the sum.
    pub weights: Vec<f64>,
    pub probe_amplitude: f64,
    pub warnings: Vec<String>,
}

/// Poisson distribution truncated to `dim` levels (not renormalized).
pub fn poisson(nbar: f64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    let mut p = (-nbar).exp();
    for n in 0..dim {
        if n > 0 {
            p *= nbar / n as f64;
        }
        out.push(p);
    }
    out
}

/// Cooling-mode response to a weak probe while the storage holds a displaced
/// state with `storage_nbar` photons on average.
///
/// The storage is frozen: its decay is negligible on the probe time scale and
/// the probe Hamiltonian conserves the storage photon number, so the steady
/// cooling occupation is the Poisson-weighted sum of single-mode responses
/// with the cooling frequency pulled by `n χ_sc`.
pub fn conditional_spectrum(params: &SystemParams, probe_detunings: &[f64], opts: &SpectrumOptions) -> Result<Spectrum> {
    if !(opts.storage_nbar >= 0.0) {
        return Err(Error::InvalidParameter("storage photon number must be ≥ 0".into()));
    }
    let kappa_c = params.kappa_c_rate();
    if !(kappa_c > 0.0) {
        return Err(Error::InvalidParameter("spectroscopy needs κ_c > 0".into()));
    }
    let omega = opts.probe_amplitude.unwrap_or(0.1 * kappa_c);
    let chi = params.chi_sc_rate();
    let mut warnings = Vec::new();
    if 2.0 * omega.abs() > chi.abs() {
        let msg = format!(
            "probe Rabi rate {:.3} rad/µs exceeds χ_sc = {:.3} rad/µs; peaks will be power broadened",
            2.0 * omega.abs(),
            chi.abs()
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let weights = poisson(opts.storage_nbar, opts.storage_dim);
    let tail = 1.0 - weights.iter().sum::<f64>();
    if tail > 1e-6 {
        let msg = format!("storage truncation drops {tail:.2e} of the displaced state");
        warn!("{msg}");
        warnings.push(msg);
    }

    let a = fock::annihilation(opts.cooling_dim)?;
    let n_op = fock::number(opts.cooling_dim)?;
    let kerr = &(&n_op * &n_op) - &n_op;
    let drive = &a.scale_real(omega) + &a.dagger().scale_real(omega);
    let damping = [a.scale_real(kappa_c.sqrt())];
    let a_c = hz_to_angular(params.a_c);

    let response_at = |delta_hz: f64| -> Result<f64> {
        let mut total = 0.0;
        for (n, w) in weights.iter().enumerate() {
            if *w < 1e-14 {
                continue;
            }
            let detuning = hz_to_angular(delta_hz) - n as f64 * chi;
            let h: Operator = &(&n_op.scale_real(detuning) + &kerr.scale_real(-0.5 * a_c)) + &drive;
            let rho = steady_state(&liouvillian(&h, &damping)?)?;
            total += w * fock::expectation(&n_op, &rho)?.re;
        }
        Ok(total)
    };
    let responses: Result<Vec<f64>> = probe_detunings.par_iter().map(|d| response_at(*d)).collect();
    let points = probe_detunings
        .iter()
        .zip(responses?)
        .map(|(&detuning, response)| SpectrumPoint { detuning, response })
        .collect();
    Ok(Spectrum {
        points,
        weights,
        probe_amplitude: omega,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Peak {
    pub detuning: f64,
    pub height: f64,
}

/// Vertex of the parabola through three samples around a maximum.
fn parabolic_vertex(a: &SpectrumPoint, b: &SpectrumPoint, c: &SpectrumPoint) -> Peak {
    let (x0, x1, x2) = (a.detuning, b.detuning, c.detuning);
    let (y0, y1, y2) = (a.response, b.response, c.response);
    let denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    let ca = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    let cb = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    let cc = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / denom;
    if !(ca < 0.0) || !denom.is_finite() {
        return Peak { detuning: x1, height: y1 };
    }
    let xv = (-cb / (2.0 * ca)).clamp(x0.min(x2), x0.max(x2));
    Peak {
        detuning: xv,
        height: (ca * xv * xv + cb * xv + cc).max(y1),
    }
}

/// Local maxima whose height exceeds `rel_threshold` times the largest
/// response and which dip below half their height on both sides before the
/// next maximum. Positions and heights are refined by a parabola through the
/// three samples around each maximum.
pub fn resolved_peaks(spectrum: &Spectrum, rel_threshold: f64) -> Vec<Peak> {
    let pts = &spectrum.points;
    let max = pts.iter().map(|p| p.response).fold(0.0, f64::max);
    let mut peaks = Vec::new();
    for i in 1..pts.len().saturating_sub(1) {
        let y = pts[i].response;
        if !(y > pts[i - 1].response && y >= pts[i + 1].response && y > rel_threshold * max) {
            continue;
        }
        let dips = |range: &mut dyn Iterator<Item = usize>| {
            for j in range {
                if pts[j].response > y {
                    return false;
                }
                if pts[j].response < 0.5 * y {
                    return true;
                }
            }
            false
        };
        if dips(&mut (0..i).rev()) && dips(&mut (i + 1..pts.len())) {
            peaks.push(parabolic_vertex(&pts[i - 1], &pts[i], &pts[i + 1]));
        }
    }
    peaks
}

/// ⟨c†c⟩ of the cooling mode in a two-cavity state.
pub fn mean_cooling_photons(rho: &DensityMatrix) -> Result<f64> {
    Ok(populations(rho, fock::COOLING)?.mean())
}
