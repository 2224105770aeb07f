use num_complex::Complex64 as C64;

use super::{liouvillian, steady_state, unvectorize, vectorize, Liouvillian};
use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, HilbertSpace, Operator};
use crate::model::{self, SystemParams};

/// Integrator settings for [`evolve`].
#[derive(Clone, Debug)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on attempted steps before giving up.
    pub max_steps: usize,
    /// Expectation values `Re Tr[O ρ]` recorded at every output time.
    pub observables: Vec<(String, Operator)>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 5_000_000,
            observables: Vec::new(),
        }
    }
}

/// States (and optional observables) at the requested output times.
#[derive(Clone, Debug)]
pub struct EvolutionResult {
    /// Output times in µs.
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub observables: Vec<(String, Vec<f64>)>,
    /// Accepted integrator steps.
    pub steps: usize,
    /// Rejected integrator steps.
    pub rejected: usize,
}

impl EvolutionResult {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("an evolution always has at least one output")
    }
}

// Dormand–Prince 5(4) tableau. The generator is time independent, so the
// node positions never enter.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Stepper<'a> {
    l: &'a Liouvillian,
    k: [Vec<C64>; 7],
    tmp: Vec<C64>,
    ynew: Vec<C64>,
}

impl<'a> Stepper<'a> {
    fn new(l: &'a Liouvillian, n: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); n];
        Self {
            l,
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            ynew: z,
        }
    }

    fn combine(&mut self, y: &[C64], h: f64, coefs: &[(usize, f64)]) {
        for (i, out) in self.tmp.iter_mut().enumerate() {
            let mut acc = y[i];
            for &(s, a) in coefs {
                acc += self.k[s][i] * (h * a);
            }
            *out = acc;
        }
    }

    fn eval(&mut self, stage: usize) {
        let (tmp, k) = (&self.tmp, &mut self.k[stage]);
        self.l.matrix().mul_vec_into(tmp, k);
    }

    /// One trial step from `y` (with `k[0] = L y` already filled). Returns the
    /// scaled error norm; the candidate is left in `ynew` and `k[6] = L ynew`.
    fn attempt(&mut self, y: &[C64], h: f64, rtol: f64, atol: f64) -> f64 {
        self.combine(y, h, &[(0, A21)]);
        self.eval(1);
        self.combine(y, h, &[(0, A31), (1, A32)]);
        self.eval(2);
        self.combine(y, h, &[(0, A41), (1, A42), (2, A43)]);
        self.eval(3);
        self.combine(y, h, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        self.eval(4);
        self.combine(y, h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        self.eval(5);
        self.combine(y, h, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        std::mem::swap(&mut self.tmp, &mut self.ynew);
        {
            let (ynew, k6) = (&self.ynew, &mut self.k[6]);
            self.l.matrix().mul_vec_into(ynew, k6);
        }
        let mut acc = 0.0;
        for (i, yi) in y.iter().enumerate() {
            let err = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * h;
            let scale = atol + rtol * yi.norm().max(self.ynew[i].norm());
            acc += (err.norm() / scale).powi(2);
        }
        (acc / y.len() as f64).sqrt()
    }
}

fn record(
    rho: &DensityMatrix,
    opts: &EvolveOptions,
    observables: &mut [(String, Vec<f64>)],
) -> Result<()> {
    for ((_, op), (_, series)) in opts.observables.iter().zip(observables.iter_mut()) {
        series.push(fock::expectation(op, rho)?.re);
    }
    Ok(())
}

/// Integrate `ρ̇ = L ρ` with an adaptive Dormand–Prince 5(4) pair and emit
/// states at `times` (µs), which must start at 0 and increase strictly.
/// Output states are re-symmetrized to `(ρ + ρ†)/2`; internal steps are not.
pub fn evolve(
    h: &Operator,
    collapse: &[Operator],
    rho0: &DensityMatrix,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    let l = liouvillian(h, collapse)?;
    evolve_liouvillian(&l, rho0, times, opts)
}

pub(crate) fn evolve_liouvillian(
    l: &Liouvillian,
    rho0: &DensityMatrix,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<EvolutionResult> {
    if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidTimeGrid);
    }
    if rho0.space() != l.space() {
        return Err(Error::DimensionMismatch {
            expected: l.space().dim(),
            actual: rho0.dim(),
        });
    }
    let d = rho0.dim();
    let n = d * d;
    let space = rho0.space().clone();

    let mut observables: Vec<(String, Vec<f64>)> = opts
        .observables
        .iter()
        .map(|(name, _)| (name.clone(), Vec::with_capacity(times.len())))
        .collect();
    let mut states = Vec::with_capacity(times.len());
    let mut first = rho0.clone();
    first.symmetrize();
    record(&first, opts, &mut observables)?;
    states.push(first);

    let mut y = vectorize(rho0.matrix());
    let mut stepper = Stepper::new(l, n);
    l.matrix().mul_vec_into(&y, &mut stepper.k[0]);

    let scale = l.matrix().norm_inf().max(1e-12);
    let mut hstep = (0.01 / scale).min(times.last().copied().unwrap_or(1.0).max(1e-12));
    let mut t = 0.0;
    let (mut steps, mut rejected) = (0usize, 0usize);

    for &t_out in &times[1..] {
        while t < t_out {
            if steps + rejected >= opts.max_steps {
                return Err(Error::StepSizeUnderflow { time: t, step: hstep });
            }
            let remaining = t_out - t;
            let clamped = hstep >= remaining;
            let h = if clamped { remaining } else { hstep };
            if h < 1e-14 * t.abs().max(1.0) && !clamped {
                return Err(Error::StepSizeUnderflow { time: t, step: h });
            }
            let err = stepper.attempt(&y, h, opts.rtol, opts.atol);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if clamped { t_out } else { t + h };
                std::mem::swap(&mut y, &mut stepper.ynew);
                stepper.k.swap(0, 6);
                steps += 1;
                // keep the controller's proposal when a clamp shortened the step
                hstep = if clamped { hstep.max(h * factor) } else { h * factor };
            } else {
                rejected += 1;
                hstep = h * factor.min(1.0);
            }
        }
        let mut rho = DensityMatrix::from_matrix(space.clone(), unvectorize(&y, d))?;
        rho.symmetrize();
        record(&rho, opts, &mut observables)?;
        states.push(rho);
    }

    Ok(EvolutionResult {
        times: times.to_vec(),
        states,
        observables,
        steps,
        rejected,
    })
}

/// Trace distance between the state reached from vacuum after
/// `horizon_kappa_c` cooling lifetimes (`t = horizon / κ_c`) and the steady
/// state of the same driven model.
pub fn steady_vs_evolve_check(
    params: &SystemParams,
    space: &HilbertSpace,
    horizon_kappa_c: f64,
    opts: &EvolveOptions,
) -> Result<f64> {
    let h = model::driven_hamiltonian(params, space)?;
    let ops = model::collapse_operators(params, space)?;
    let l = liouvillian(&h, &ops)?;
    let rho_ss = steady_state(&l)?;
    let kappa_c = params.kappa_c_rate();
    if kappa_c <= 0.0 {
        return Err(Error::InvalidParameter("κ_c must be positive to set the horizon".into()));
    }
    let t_end = horizon_kappa_c / kappa_c;
    let vac = DensityMatrix::vacuum(space);
    let traj = evolve_liouvillian(&l, &vac, &[0.0, t_end], opts)?;
    traj.final_state().trace_distance(&rho_ss)
}
