//! System parameters and the Hamiltonian / collapse-operator builders.
//!
//! Frequencies, anharmonicities, cross-Kerr shifts and decay rates are stored
//! as cycles per second (the `ω/2π` values of the measured parameter table).
//! Builders convert them to the internal unit system, angular frequency in
//! rad/µs, with a single multiplication by `2π × 10⁻⁶`. Drive amplitudes are
//! stored directly in internal units (rad/µs).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, HilbertSpace, Operator, COOLING, QUBIT, STORAGE};

/// Convert a frequency in Hz (cycles/s) to rad/µs.
pub fn hz_to_angular(hz: f64) -> f64 {
    2.0 * PI * 1e-6 * hz
}

/// Convert rad/µs back to Hz.
pub fn angular_to_hz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e-6)
}

/// How quoted decay rates are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaConvention {
    /// The quoted number is `κ/2π` in Hz; the internal rate is `2π × value`.
    #[default]
    OverTwoPi,
    /// The quoted number already is `κ` in s⁻¹.
    Angular,
}

/// Every Hamiltonian, dissipation and drive parameter of the device.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_q: f64,
    pub omega_s: f64,
    pub omega_c: f64,
    pub a_q: f64,
    pub a_s: f64,
    pub a_c: f64,
    pub chi_qs: f64,
    pub chi_qc: f64,
    pub chi_sc: f64,
    pub kappa_s: f64,
    pub kappa_c: f64,
    /// Storage drive frequency (Hz).
    pub omega_ds: f64,
    /// Cooling drive frequency (Hz).
    pub omega_dc: f64,
    /// Storage drive amplitude Ω_S (rad/µs).
    pub storage_drive: C64,
    /// Cooling drive amplitude Ω_C (rad/µs).
    pub cooling_drive: C64,
    #[serde(default)]
    pub kappa_convention: KappaConvention,
}

/// Drive detunings in Hz, always derived from [`SystemParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detunings {
    pub delta_s: f64,
    pub delta_c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Stabilization,
    Spectroscopy,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stabilization" => Ok(Preset::Stabilization),
            "spectroscopy" => Ok(Preset::Spectroscopy),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Stabilization => "stabilization",
            Preset::Spectroscopy => "spectroscopy",
        })
    }
}

const MHZ: f64 = 1e6;
const KHZ: f64 = 1e3;

/// Storage drive Ω_S of the stabilization operating point, in units of κ_c.
pub const STABILIZATION_STORAGE_DRIVE: f64 = 0.25;

/// Default mean cooling occupation for the stabilization operating point.
pub const DEFAULT_COOLING_NBAR: f64 = 1.0;

impl SystemParams {
    /// Device table with both drives off and tuned to the bare modes.
    fn device_table() -> Self {
        Self {
            omega_q: 7249.0 * MHZ,
            omega_s: 8493.0 * MHZ,
            omega_c: 9320.0 * MHZ,
            a_q: 26.0 * MHZ,
            a_s: 4.0 * MHZ,
            a_c: 300.0 * KHZ,
            chi_qs: 21.1 * MHZ,
            chi_qc: 4.9 * MHZ,
            chi_sc: 2.59 * MHZ,
            kappa_s: 0.0,
            kappa_c: 0.0,
            omega_ds: 8493.0 * MHZ,
            omega_dc: 9320.0 * MHZ,
            storage_drive: C64::new(0.0, 0.0),
            cooling_drive: C64::new(0.0, 0.0),
            kappa_convention: KappaConvention::OverTwoPi,
        }
    }

    /// Stabilization operating point: κ_s = 65 kHz, κ_c = 1.7 MHz, storage
    /// drive resonant with its 0→1 transition at Ω_S = κ_c/4 (the amplitude
    /// that maximizes the steady-state P(1) here), cooling drive one
    /// cross-Kerr below the bare cooling frequency (Δ/χ_sc = 1) with n̄_c = 1.
    pub fn stabilization() -> Self {
        let mut p = Self::device_table();
        p.kappa_s = 65.0 * KHZ;
        p.kappa_c = 1.7 * MHZ;
        p.storage_drive = C64::new(STABILIZATION_STORAGE_DRIVE * p.kappa_c_rate(), 0.0);
        p.set_cooling_detuning_over_chi(1.0);
        p.set_cooling_nbar(DEFAULT_COOLING_NBAR);
        p
    }

    /// Cross-Kerr spectroscopy configuration: κ_s = 7.5 kHz, κ_c = 120 kHz,
    /// drives off.
    pub fn spectroscopy() -> Self {
        let mut p = Self::device_table();
        p.kappa_s = 7.5 * KHZ;
        p.kappa_c = 120.0 * KHZ;
        p
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Stabilization => Self::stabilization(),
            Preset::Spectroscopy => Self::spectroscopy(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("omega_q", self.omega_q),
            ("omega_s", self.omega_s),
            ("omega_c", self.omega_c),
            ("a_q", self.a_q),
            ("a_s", self.a_s),
            ("a_c", self.a_c),
            ("chi_qs", self.chi_qs),
            ("chi_qc", self.chi_qc),
            ("chi_sc", self.chi_sc),
            ("kappa_s", self.kappa_s),
            ("kappa_c", self.kappa_c),
            ("omega_ds", self.omega_ds),
            ("omega_dc", self.omega_dc),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        for (name, v) in [("storage_drive", self.storage_drive), ("cooling_drive", self.cooling_drive)] {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} is not finite")));
            }
        }
        Ok(())
    }

    pub fn detunings(&self) -> Detunings {
        Detunings {
            delta_s: self.omega_s - self.omega_ds,
            delta_c: self.omega_c - self.omega_dc,
        }
    }

    fn kappa_rate(&self, quoted: f64) -> f64 {
        match self.kappa_convention {
            KappaConvention::OverTwoPi => hz_to_angular(quoted),
            KappaConvention::Angular => quoted * 1e-6,
        }
    }

    /// Storage decay rate κ_s in rad/µs.
    pub fn kappa_s_rate(&self) -> f64 {
        self.kappa_rate(self.kappa_s)
    }

    /// Cooling decay rate κ_c in rad/µs.
    pub fn kappa_c_rate(&self) -> f64 {
        self.kappa_rate(self.kappa_c)
    }

    /// Cross-Kerr χ_sc in rad/µs.
    pub fn chi_sc_rate(&self) -> f64 {
        hz_to_angular(self.chi_sc)
    }

    /// Place the cooling drive at Δ = f_C⁰ − f_d = `ratio · χ_sc`.
    pub fn set_cooling_detuning_over_chi(&mut self, ratio: f64) {
        self.omega_dc = self.omega_c - ratio * self.chi_sc;
    }

    pub fn cooling_detuning_over_chi(&self) -> f64 {
        self.detunings().delta_c / self.chi_sc
    }

    /// Set the (real) cooling drive so that a resonantly driven linear cooling
    /// cavity holds `nbar` photons: Ω_C = √n̄ · κ_c/2.
    pub fn set_cooling_nbar(&mut self, nbar: f64) {
        self.cooling_drive = C64::new(nbar.max(0.0).sqrt() * 0.5 * self.kappa_c_rate(), 0.0);
    }

    /// Inverse of [`SystemParams::set_cooling_nbar`]: |Ω_C / (κ_c/2)|².
    pub fn cooling_nbar(&self) -> f64 {
        let half = 0.5 * self.kappa_c_rate();
        if half == 0.0 {
            return 0.0;
        }
        (self.cooling_drive / half).norm_sqr()
    }
}

/// `2√(A_i A_j)`, the fourth-order cross-Kerr estimate from two anharmonicities.
pub fn predicted_cross_kerr(a_i: f64, a_j: f64) -> Result<f64> {
    if a_i < 0.0 || a_j < 0.0 || !a_i.is_finite() || !a_j.is_finite() {
        return Err(Error::InvalidParameter("anharmonicities must be non-negative".into()));
    }
    Ok(2.0 * (a_i * a_j).sqrt())
}

fn kerr(n: &Operator) -> Operator {
    // a†²a² = n(n − 1)
    &(n * n) - n
}

/// Static three-mode Hamiltonian H/ħ in rad/µs on `(qubit, storage, cooling)`.
pub fn full_hamiltonian(params: &SystemParams, space: &HilbertSpace) -> Result<Operator> {
    space.require_three_mode()?;
    let w = hz_to_angular;
    let nq = fock::mode_number(space, QUBIT)?;
    let ns = fock::mode_number(space, STORAGE)?;
    let nc = fock::mode_number(space, COOLING)?;

    let terms = [
        (w(params.omega_q), nq.clone()),
        (w(params.omega_s), ns.clone()),
        (w(params.omega_c), nc.clone()),
        (-0.5 * w(params.a_q), kerr(&nq)),
        (-0.5 * w(params.a_s), kerr(&ns)),
        (-0.5 * w(params.a_c), kerr(&nc)),
        (-w(params.chi_qs), &nq * &ns),
        (-w(params.chi_qc), &nq * &nc),
        (-w(params.chi_sc), &ns * &nc),
    ];
    let mut h = Operator::zeros(space);
    for (coef, op) in terms {
        h = &h + &op.scale_real(coef);
    }
    Ok(h)
}

/// Rotating-frame driven two-cavity Hamiltonian H/ħ in rad/µs on
/// `(storage, cooling)`. Drives enter as `Ω b† + Ω* b`.
pub fn driven_hamiltonian(params: &SystemParams, space: &HilbertSpace) -> Result<Operator> {
    space.require_two_cavity()?;
    let w = hz_to_angular;
    let det = params.detunings();
    let b = fock::mode_annihilation(space, STORAGE)?;
    let c = fock::mode_annihilation(space, COOLING)?;
    let ns = fock::mode_number(space, STORAGE)?;
    let nc = fock::mode_number(space, COOLING)?;

    let mut h = ns.scale_real(w(det.delta_s));
    h = &h + &nc.scale_real(w(det.delta_c));
    h = &h + &kerr(&ns).scale_real(-0.5 * w(params.a_s));
    h = &h + &kerr(&nc).scale_real(-0.5 * w(params.a_c));
    h = &h + &(&ns * &nc).scale_real(-w(params.chi_sc));
    for (op, omega) in [(&b, params.storage_drive), (&c, params.cooling_drive)] {
        h = &h + &op.dagger().scale(omega);
        h = &h + &op.scale(omega.conj());
    }
    Ok(h)
}

/// `[√κ_s b, √κ_c c]`, skipping modes with zero decay.
pub fn collapse_operators(params: &SystemParams, space: &HilbertSpace) -> Result<Vec<Operator>> {
    let mut ops = Vec::with_capacity(2);
    for (label, rate) in [(STORAGE, params.kappa_s_rate()), (COOLING, params.kappa_c_rate())] {
        if rate > 0.0 {
            ops.push(fock::mode_annihilation(space, label)?.scale_real(rate.sqrt()));
        }
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params() -> SystemParams {
        SystemParams {
            omega_q: 0.0,
            omega_s: 0.0,
            omega_c: 0.0,
            a_q: 0.0,
            a_s: 0.0,
            a_c: 0.0,
            chi_qs: 0.0,
            chi_qc: 0.0,
            chi_sc: 0.0,
            kappa_s: 0.0,
            kappa_c: 0.0,
            omega_ds: 0.0,
            omega_dc: 0.0,
            storage_drive: C64::new(0.0, 0.0),
            cooling_drive: C64::new(0.0, 0.0),
            kappa_convention: KappaConvention::OverTwoPi,
        }
    }

    #[test]
    fn zero_params_give_zero_hamiltonians() {
        let p = zero_params();
        let s3 = HilbertSpace::three_mode(2, 3, 3).unwrap();
        assert_eq!(full_hamiltonian(&p, &s3).unwrap().matrix().norm_max(), 0.0);
        let s2 = HilbertSpace::two_cavity(3, 3).unwrap();
        assert_eq!(driven_hamiltonian(&p, &s2).unwrap().matrix().norm_max(), 0.0);
    }

    #[test]
    fn wrong_layout_rejected() {
        let p = SystemParams::stabilization();
        let s2 = HilbertSpace::two_cavity(3, 3).unwrap();
        assert!(matches!(full_hamiltonian(&p, &s2), Err(Error::ModeLayout { .. })));
        let s3 = HilbertSpace::three_mode(2, 3, 3).unwrap();
        assert!(matches!(driven_hamiltonian(&p, &s3), Err(Error::ModeLayout { .. })));
    }

    #[test]
    fn full_hamiltonian_diagonal_element() {
        let p = SystemParams::stabilization();
        let space = HilbertSpace::three_mode(2, 3, 3).unwrap();
        let h = full_hamiltonian(&p, &space).unwrap();
        let idx = space.basis_index(&[0, 1, 1]).unwrap();
        let expected = 2.0 * PI * (8493.0 + 9320.0 - 2.59);
        assert!((h.get(idx, idx).re - expected).abs() < 1e-8);
        assert!(h.is_hermitian(1e-10));
    }

    #[test]
    fn cooling_transition_shifts_by_one_cross_kerr_per_storage_photon() {
        let p = SystemParams::stabilization();
        let space = HilbertSpace::three_mode(2, 3, 3).unwrap();
        let h = full_hamiltonian(&p, &space).unwrap();
        let e = |occ: [usize; 3]| {
            let i = space.basis_index(&occ).unwrap();
            h.get(i, i).re
        };
        let f0 = e([0, 0, 1]) - e([0, 0, 0]);
        let f1 = e([0, 1, 1]) - e([0, 1, 0]);
        assert!((angular_to_hz(f0 - f1) - 2.59e6).abs() < 1e-3);
    }

    #[test]
    fn driven_hamiltonian_diagonal_closed_form() {
        let mut p = SystemParams::stabilization();
        p.storage_drive = C64::new(0.0, 0.0);
        p.cooling_drive = C64::new(0.0, 0.0);
        p.omega_ds = p.omega_s - 0.37e6;
        let space = HilbertSpace::two_cavity(4, 6).unwrap();
        let h = driven_hamiltonian(&p, &space).unwrap();
        let det = p.detunings();
        for idx in 0..space.dim() {
            let occ = space.occupations(idx);
            let (ns, nc) = (occ[0] as f64, occ[1] as f64);
            let expected = 2.0
                * PI
                * 1e-6
                * (det.delta_s * ns + det.delta_c * nc
                    - 0.5 * p.a_s * ns * (ns - 1.0)
                    - 0.5 * p.a_c * nc * (nc - 1.0)
                    - p.chi_sc * ns * nc);
            assert!((h.get(idx, idx).re - expected).abs() < 1e-10, "{occ:?}");
        }
    }

    #[test]
    fn displaced_linear_oscillator_spectrum() {
        // Δ n − Ω²/Δ for H = Δ c†c + Ω(c† + c)
        let mut p = zero_params();
        p.omega_c = 1.5e6;
        p.cooling_drive = C64::new(0.8, 0.0);
        let space = HilbertSpace::two_cavity(2, 40).unwrap();
        let h = driven_hamiltonian(&p, &space).unwrap();
        let delta = hz_to_angular(1.5e6);
        let ev = h.hermitian_eigenvalues();
        // each level appears twice (storage dim 2, storage Hamiltonian zero)
        for n in 0..5 {
            let expected = delta * n as f64 - 0.64 / delta;
            assert!((ev[2 * n] - expected).abs() < 1e-8, "n = {n}: {}", ev[2 * n]);
            assert!((ev[2 * n + 1] - expected).abs() < 1e-8);
        }
    }

    #[test]
    fn real_drives_without_nonlinearity_give_real_matrix() {
        let mut p = SystemParams::stabilization();
        p.a_s = 0.0;
        p.a_c = 0.0;
        p.chi_sc = 0.0;
        let space = HilbertSpace::two_cavity(3, 5).unwrap();
        let h = driven_hamiltonian(&p, &space).unwrap();
        let max_im = (0..space.dim())
            .flat_map(|i| (0..space.dim()).map(move |j| (i, j)))
            .map(|(i, j)| h.get(i, j).im.abs())
            .fold(0.0, f64::max);
        assert_eq!(max_im, 0.0);
        assert!(h.is_hermitian(1e-12));
    }

    #[test]
    fn complex_drive_stays_hermitian() {
        let mut p = SystemParams::stabilization();
        p.cooling_drive = C64::new(1.0, -2.5);
        p.storage_drive = C64::new(0.0, 3.0);
        let space = HilbertSpace::two_cavity(3, 5).unwrap();
        assert!(driven_hamiltonian(&p, &space).unwrap().is_hermitian(1e-10));
    }

    #[test]
    fn conditional_resonance_at_one_cross_kerr() {
        let mut p = SystemParams::stabilization();
        p.set_cooling_detuning_over_chi(1.0);
        assert!((p.detunings().delta_c - p.chi_sc).abs() < 1e-6);
        // |1,0⟩ → |1,1⟩ costs zero energy in the rotating frame
        p.storage_drive = C64::new(0.0, 0.0);
        p.cooling_drive = C64::new(0.0, 0.0);
        let space = HilbertSpace::two_cavity(3, 3).unwrap();
        let h = driven_hamiltonian(&p, &space).unwrap();
        let e10 = h.get(space.basis_index(&[1, 0]).unwrap(), space.basis_index(&[1, 0]).unwrap()).re;
        let e11 = h.get(space.basis_index(&[1, 1]).unwrap(), space.basis_index(&[1, 1]).unwrap()).re;
        assert!((e11 - e10).abs() < 1e-9);
    }

    #[test]
    fn collapse_operator_rates() {
        let mut p = SystemParams::stabilization();
        let space = HilbertSpace::two_cavity(3, 4).unwrap();
        assert_eq!(collapse_operators(&p, &space).unwrap().len(), 2);
        assert!((p.kappa_c_rate() - 2.0 * PI * 1.7).abs() < 1e-12);

        let ops = collapse_operators(&p, &space).unwrap();
        // ‖√κ_c c |0,1⟩‖ = √κ_c
        let col = space.basis_index(&[0, 1]).unwrap();
        let norm: f64 = (0..space.dim()).map(|i| ops[1].get(i, col).norm_sqr()).sum::<f64>().sqrt();
        assert!((norm - p.kappa_c_rate().sqrt()).abs() < 1e-12);

        p.kappa_s = 0.0;
        assert_eq!(collapse_operators(&p, &space).unwrap().len(), 1);
    }

    #[test]
    fn angular_kappa_convention() {
        let mut p = SystemParams::stabilization();
        p.kappa_convention = KappaConvention::Angular;
        assert!((p.kappa_c_rate() - 1.7).abs() < 1e-12);
    }

    #[test]
    fn cross_kerr_from_anharmonicities() {
        assert_eq!(predicted_cross_kerr(3.0, 3.0).unwrap(), 6.0);
        assert_eq!(predicted_cross_kerr(0.0, 5.0).unwrap(), 0.0);
        let chi = predicted_cross_kerr(4.0e6, 0.3e6).unwrap();
        assert!((chi - 2.0 * 1.2f64.sqrt() * 1e6).abs() < 1e-6);
        assert!((chi / 1e6 - 2.19).abs() < 0.01);
        assert!(predicted_cross_kerr(-1.0, 1.0).is_err());
    }

    #[test]
    fn presets() {
        let s = SystemParams::stabilization();
        let q = SystemParams::spectroscopy();
        assert_eq!(s.chi_sc, 2.59e6);
        assert_eq!(s.a_s, 4.0e6);
        assert_eq!(q.a_s, 4.0e6);
        assert!((q.kappa_c / q.kappa_s - 16.0).abs() < 1e-12);
        assert!((s.cooling_nbar() - DEFAULT_COOLING_NBAR).abs() < 1e-12);
        assert!((s.cooling_detuning_over_chi() - 1.0).abs() < 1e-9);
        assert!(s.validate().is_ok());
        assert_eq!("spectroscopy".parse::<Preset>().unwrap(), Preset::Spectroscopy);
        assert!("nope".parse::<Preset>().is_err());
    }

    #[test]
    fn params_json_roundtrip() {
        let s = SystemParams::stabilization();
        let text = serde_json::to_string(&s).unwrap();
        let back: SystemParams = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
