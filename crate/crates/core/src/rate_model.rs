//! Four-level classical rate picture of the stabilization cycle.
//!
//! States A, B, C, D (indices 0..4) with transitions A→B at the drive rate
//! Ω_AB, B→C and D→A at the cooling decay κ and C→D at the target decay κ↓.
//! C is the target state.

use faer::linalg::solvers::Solve;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};

pub const STATE_LABELS: [&str; 4] = ["A", "B", "C", "D"];
const TARGET: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FourLevelParams {
    /// B→C and D→A rate.
    pub kappa: f64,
    /// A→B drive rate.
    pub omega_ab: f64,
    /// C→D target decay rate.
    pub kappa_down: f64,
}

impl FourLevelParams {
    pub fn new(kappa: f64, omega_ab: f64, kappa_down: f64) -> Result<Self> {
        let p = Self { kappa, omega_ab, kappa_down };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("omega_ab", self.omega_ab), ("kappa_down", self.kappa_down)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be a positive finite rate, got {v}")));
            }
        }
        Ok(())
    }
}

/// How the coherent A↔B drive enters the classical chain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveModel {
    /// A→B only.
    #[default]
    Unidirectional,
    /// A→B and B→A at the same rate.
    Bidirectional,
}

/// Generator of a continuous-time Markov chain: `m[(j, i)]` is the rate
/// i→j and every column sums to zero.
#[derive(Clone, Debug)]
pub struct RateMatrix {
    m: Mat<f64>,
}

impl RateMatrix {
    pub fn from_rates(rates: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Mat::<f64>::zeros(4, 4);
        for &(from, to, r) in rates {
            if from >= 4 || to >= 4 || from == to {
                return Err(Error::InvalidParameter(format!("bad transition {from}→{to}")));
            }
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidParameter(format!("transition rate must be ≥ 0, got {r}")));
            }
            m[(to, from)] += r;
            m[(from, from)] -= r;
        }
        Ok(Self { m })
    }

    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.m[(to, from)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.m
    }

    pub fn max_column_sum(&self) -> f64 {
        (0..4)
            .map(|j| (0..4).map(|i| self.m[(i, j)]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Slowest nonzero relaxation rate, `min −Re λ` over the nonzero spectrum.
    pub fn spectral_gap(&self) -> Result<f64> {
        let scale = (0..4).map(|i| self.m[(i, i)].abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::DegenerateRateMatrix("all rates are zero".into()));
        }
        let eig = self
            .m
            .eigenvalues()
            .map_err(|e| Error::DegenerateRateMatrix(format!("eigenvalue solve failed: {e:?}")))?;
        let mut rates: Vec<f64> = eig.iter().map(|z| -z.re).collect();
        rates.sort_by(f64::total_cmp);
        // rates[0] is the stationary eigenvalue
        Ok(rates[1])
    }
}

/// κ↑ obtained by adding the three cycle times in series, `(2/κ + 1/Ω_AB)⁻¹`.
pub fn stabilization_rate(kappa: f64, omega_ab: f64) -> Result<f64> {
    for v in [kappa, omega_ab] {
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!("rates must be positive, got {v}")));
        }
    }
    Ok(1.0 / (1.0 / kappa + 1.0 / kappa + 1.0 / omega_ab))
}

/// Two-state balance `κ↓ P(1) = κ↑ P(0)`.
pub fn equilibrium_p1(kappa_up: f64, kappa_down: f64) -> Result<f64> {
    if !(kappa_up > 0.0) || kappa_down < 0.0 || kappa_down.is_nan() {
        return Err(Error::InvalidParameter(format!(
            "need κ↑ > 0 and κ↓ ≥ 0, got κ↑ = {kappa_up}, κ↓ = {kappa_down}"
        )));
    }
    if kappa_down.is_infinite() {
        return Ok(0.0);
    }
    Ok(1.0 / (1.0 + kappa_down / kappa_up))
}

pub fn build_rate_matrix(params: &FourLevelParams, drive: DriveModel) -> Result<RateMatrix> {
    params.validate()?;
    let mut rates = vec![
        (0, 1, params.omega_ab),
        (1, 2, params.kappa),
        (2, 3, params.kappa_down),
        (3, 0, params.kappa),
    ];
    if drive == DriveModel::Bidirectional {
        rates.push((1, 0, params.omega_ab));
    }
    RateMatrix::from_rates(&rates)
}

/// Normalized null vector of the generator.
pub fn stationary_distribution(m: &RateMatrix) -> Result<[f64; 4]> {
    let scale = m.m.norm_max();
    if scale == 0.0 {
        return Err(Error::DegenerateRateMatrix("all rates are zero".into()));
    }
    let mut a = m.m.clone();
    for j in 0..4 {
        a[(0, j)] = 1.0;
    }
    let mut b = Mat::<f64>::zeros(4, 1);
    b[(0, 0)] = 1.0;
    let x = a.full_piv_lu().solve(&b);
    let mut p = [0.0; 4];
    for (i, v) in p.iter_mut().enumerate() {
        *v = x[(i, 0)];
    }
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateRateMatrix("stationary state is not unique".into()));
    }
    let residual = (0..4)
        .map(|i| (0..4).map(|j| m.m[(i, j)] * p[j]).sum::<f64>().abs())
        .fold(0.0, f64::max);
    if residual > 1e-9 * scale {
        return Err(Error::DegenerateRateMatrix(format!(
            "stationary state is not unique (residual {residual:.2e})"
        )));
    }
    for v in &mut p {
        if *v < 0.0 {
            if *v < -1e-12 {
                return Err(Error::DegenerateRateMatrix(format!("negative stationary weight {v}")));
            }
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    Ok(p.map(|v| v / total))
}

/// Stationary population of the target state C.
pub fn target_population(params: &FourLevelParams, drive: DriveModel) -> Result<f64> {
    Ok(stationary_distribution(&build_rate_matrix(params, drive)?)?[TARGET])
}

/// Fraction of the strong-drive relaxation rate used to define the knee.
pub const OPTIMAL_DRIVE_GAP_FRACTION: f64 = 0.99;

/// Drive rate at the knee of the relaxation rate.
///
/// Stationary P(C) increases monotonically with Ω_AB, so it has no interior
/// maximum. The returned Ω_AB is instead the smallest drive at which the
/// slowest relaxation rate of the chain reaches 99% of its Ω_AB → ∞ value:
/// driving harder barely speeds up stabilization and only buys the last
/// sliver of P(C).
pub fn optimal_drive(kappa: f64, kappa_down: f64) -> Result<f64> {
    FourLevelParams { kappa, omega_ab: kappa, kappa_down }.validate()?;
    let gap = |omega: f64| -> Result<f64> {
        build_rate_matrix(&FourLevelParams { kappa, omega_ab: omega, kappa_down }, DriveModel::Unidirectional)?
            .spectral_gap()
    };
    let target = OPTIMAL_DRIVE_GAP_FRACTION * gap(1e6 * kappa)?;

    // scan upward on a log grid for the first crossing, then bisect
    let (lo_exp, hi_exp, n) = (-4.0_f64, 6.0_f64, 400);
    let mut prev = 10f64.powf(lo_exp) * kappa;
    if gap(prev)? >= target {
        return Ok(prev);
    }
    for k in 1..=n {
        let omega = 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / n as f64) * kappa;
        if gap(omega)? >= target {
            let (mut lo, mut hi) = (prev, omega);
            for _ in 0..100 {
                let mid = (lo * hi).sqrt();
                if gap(mid)? >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi / lo - 1.0 < 1e-12 {
                    break;
                }
            }
            return Ok(hi);
        }
        prev = omega;
    }
    Ok(1e6 * kappa)
}

/// Least-squares rate `r` for `P(1)(t) ≈ p_ss (1 − e^{−r t})`.
pub fn fit_approach_rate(times: &[f64], p1: &[f64], p_ss: f64) -> Result<f64> {
    if times.len() != p1.len() || times.len() < 3 {
        return Err(Error::InvalidParameter("need at least three matching samples".into()));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    if !(t_max > 0.0) || !(p_ss > 0.0) {
        return Err(Error::InvalidParameter("fit needs a positive time span and steady value".into()));
    }
    let sse = |log_r: f64| -> f64 {
        let r = log_r.exp();
        times
            .iter()
            .zip(p1)
            .map(|(t, y)| (y - p_ss * (1.0 - (-r * t).exp())).powi(2))
            .sum()
    };
    let (lo, hi) = ((1e-3 / t_max).ln(), (1e4 / t_max).ln());
    let n = 200;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let best = (0..=n)
        .min_by(|&a, &b| sse(grid[a]).total_cmp(&sse(grid[b])))
        .expect("grid is nonempty");
    let (mut a, mut b) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    // golden-section refinement
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..200 {
        if sse(c) < sse(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Everything the `rate-model` command prints.
#[derive(Clone, Debug, Serialize)]
pub struct RateModelReport {
    pub kappa: f64,
    pub kappa_down: f64,
    pub omega_ab: f64,
    pub omega_ab_optimized: bool,
    pub drive_model: DriveModel,
    pub kappa_up: f64,
    pub equilibrium_p1: f64,
    pub stationary: [f64; 4],
    pub relaxation_rate: f64,
}

pub fn report(kappa: f64, kappa_down: f64, omega_ab: Option<f64>, drive: DriveModel) -> Result<RateModelReport> {
    let (omega, optimized) = match omega_ab {
        Some(w) => (w, false),
        None => (optimal_drive(kappa, kappa_down)?, true),
    };
    let params = FourLevelParams::new(kappa, omega, kappa_down)?;
    let m = build_rate_matrix(&params, drive)?;
    let kappa_up = stabilization_rate(kappa, omega)?;
    Ok(RateModelReport {
        kappa,
        kappa_down,
        omega_ab: omega,
        omega_ab_optimized: optimized,
        drive_model: drive,
        kappa_up,
        equilibrium_p1: equilibrium_p1(kappa_up, kappa_down)?,
        stationary: stationary_distribution(&m)?,
        relaxation_rate: m.spectral_gap()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rate_limits() {
        assert_eq!(stabilization_rate(3.0, 3.0).unwrap(), 1.0);
        assert!((stabilization_rate(1.0, 1e12).unwrap() - 0.5).abs() < 1e-11);
        assert!(stabilization_rate(1.0, 1e-12).unwrap() < 1e-11);
        assert!(stabilization_rate(0.0, 1.0).is_err());
        assert!(stabilization_rate(1.0, -1.0).is_err());
    }

    #[test]
    fn equilibrium_values() {
        assert_eq!(equilibrium_p1(2.0, 2.0).unwrap(), 0.5);
        assert!((equilibrium_p1(99.0, 1.0).unwrap() - 0.99).abs() < 1e-15);
        assert_eq!(equilibrium_p1(1.0, f64::INFINITY).unwrap(), 0.0);
        assert!(equilibrium_p1(0.0, 1.0).is_err());
    }

    #[test]
    fn generator_columns_sum_to_zero() {
        for drive in [DriveModel::Unidirectional, DriveModel::Bidirectional] {
            let m = build_rate_matrix(&FourLevelParams::new(1.3, 0.7, 0.01).unwrap(), drive).unwrap();
            assert!(m.max_column_sum() < 1e-12);
            for i in 0..4 {
                for j in 0..4 {
                    if i != j {
                        assert!(m.get(i, j) >= 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_rates_give_uniform_distribution() {
        let m = build_rate_matrix(&FourLevelParams::new(2.0, 2.0, 2.0).unwrap(), DriveModel::Unidirectional).unwrap();
        for p in stationary_distribution(&m).unwrap() {
            assert!((p - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn cycle_target_population_equals_two_state_balance() {
        // flux balance around the cycle: P_X ∝ 1 / (rate out of X)
        for &(k, w, kd) in &[(1.0, 1.0, 1.0 / 300.0), (1.0, 0.2, 0.05), (3.0, 7.0, 0.5)] {
            let weights = [1.0 / w, 1.0 / k, 1.0 / kd, 1.0 / k];
            let total: f64 = weights.iter().sum();
            let p = stationary_distribution(
                &build_rate_matrix(&FourLevelParams::new(k, w, kd).unwrap(), DriveModel::Unidirectional).unwrap(),
            )
            .unwrap();
            for i in 0..4 {
                assert!((p[i] - weights[i] / total).abs() < 1e-13);
            }
            let two_state = equilibrium_p1(stabilization_rate(k, w).unwrap(), kd).unwrap();
            assert!((p[TARGET] - two_state).abs() < 1e-13);
        }
    }

    #[test]
    fn bidirectional_drive_lowers_target_population() {
        let p = FourLevelParams::new(1.0, 1.0, 0.01).unwrap();
        let uni = target_population(&p, DriveModel::Unidirectional).unwrap();
        let bi = target_population(&p, DriveModel::Bidirectional).unwrap();
        assert!(bi < uni);
    }

    #[test]
    fn degenerate_generators_rejected() {
        let zero = RateMatrix::from_rates(&[]).unwrap();
        assert!(matches!(stationary_distribution(&zero), Err(Error::DegenerateRateMatrix(_))));
        // two absorbing states
        let split = RateMatrix::from_rates(&[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        assert!(stationary_distribution(&split).is_err());
        assert!(FourLevelParams::new(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn optimal_drive_is_near_kappa() {
        let kappa = 1.0;
        let kd = kappa / 300.0;
        let w = optimal_drive(kappa, kd).unwrap();
        assert!(w > 0.5 * kappa && w < 2.0 * kappa, "{w}");
        let pc = |w: f64| target_population(&FourLevelParams::new(kappa, w, kd).unwrap(), DriveModel::Unidirectional).unwrap();
        assert!(pc(w) >= pc(kappa / 10.0));
        // homogeneity of the generator
        let w_scaled = optimal_drive(7.0 * kappa, 7.0 * kd).unwrap();
        assert!((w_scaled / w - 7.0).abs() < 1e-8);
    }

    #[test]
    fn relaxation_rate_saturates() {
        let gap = |w: f64| {
            build_rate_matrix(&FourLevelParams::new(1.0, w, 1.0 / 300.0).unwrap(), DriveModel::Unidirectional)
                .unwrap()
                .spectral_gap()
                .unwrap()
        };
        assert!(gap(0.1) < gap(1.0));
        assert!((gap(1e3) - gap(1e6)).abs() < 1e-2);
    }

    #[test]
    fn fit_recovers_known_rate() {
        let times: Vec<f64> = (0..=50).map(|k| 0.1 * k as f64).collect();
        let p1: Vec<f64> = times.iter().map(|t| 0.7 * (1.0 - (-1.7 * t).exp())).collect();
        let r = fit_approach_rate(&times, &p1, 0.7).unwrap();
        assert!((r - 1.7).abs() < 1e-7, "{r}");
    }

    #[test]
    fn report_defaults_to_optimizer() {
        let rep = report(1.0, 1.0 / 300.0, None, DriveModel::Unidirectional).unwrap();
        assert!(rep.omega_ab_optimized);
        let fixed = report(1.0, 1.0 / 300.0, Some(1.0), DriveModel::Unidirectional).unwrap();
        assert!((fixed.equilibrium_p1 - fixed.stationary[TARGET]).abs() < 1e-13);
        assert!((fixed.equilibrium_p1 - 100.0 / 101.0).abs() < 1e-14);
    }
}
