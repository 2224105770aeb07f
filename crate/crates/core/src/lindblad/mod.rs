//! Master-equation machinery: Liouvillian assembly, steady states and
//! time evolution of `ρ̇ = −i[H, ρ] + Σ D[L]ρ`.
//!
//! Density matrices are vectorized by column stacking,
//! `vec(ρ)[i + d·j] = ρ[i, j]`, so that `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

mod evolve;
mod sparse;

pub use evolve::{evolve, steady_vs_evolve_check, EvolutionResult, EvolveOptions};
pub use sparse::SparseMatrix;
pub(crate) use evolve::evolve_liouvillian;

use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::fock::{DensityMatrix, HilbertSpace, Operator, StateTolerance};

/// Superoperator `L` with `vec(ρ̇) = L vec(ρ)`.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    space: HilbertSpace,
    matrix: SparseMatrix,
}

fn nonzeros(op: &Operator) -> Vec<(usize, usize, C64)> {
    let d = op.dim();
    let zero = C64::new(0.0, 0.0);
    let mut out = Vec::new();
    for j in 0..d {
        for i in 0..d {
            let v = op.get(i, j);
            if v != zero {
                out.push((i, j, v));
            }
        }
    }
    out
}

/// Vectorized `−i[H, ·]`.
pub fn hamiltonian_superop(h: &Operator) -> Liouvillian {
    let d = h.dim();
    let mi = C64::new(0.0, -1.0);
    let entries = nonzeros(h);
    let mut triplets = Vec::with_capacity(2 * d * entries.len());
    for &(a, b, v) in &entries {
        for k in 0..d {
            // I ⊗ H: row block k, (a, b) inside the block
            triplets.push((a + d * k, b + d * k, mi * v));
            // Hᵀ ⊗ I: (b, a) selects blocks, identity inside
            triplets.push((k + d * b, k + d * a, -mi * v));
        }
    }
    Liouvillian {
        space: h.space().clone(),
        matrix: SparseMatrix::from_triplets(d * d, d * d, triplets),
    }
}

/// Vectorized `D[L]ρ = LρL† − ½(L†Lρ + ρL†L)`,
/// i.e. `L̄ ⊗ L − ½(I ⊗ L†L + (L†L)ᵀ ⊗ I)`.
pub fn dissipator_superop(l: &Operator) -> Liouvillian {
    let d = l.dim();
    let lnz = nonzeros(l);
    let ldl = &l.dagger() * l;
    let ldl_nz = nonzeros(&ldl);
    let mut triplets = Vec::with_capacity(lnz.len() * lnz.len() + 2 * d * ldl_nz.len());
    for &(a, b, v) in &lnz {
        for &(c, e, w) in &lnz {
            // L̄[c, e] ⊗ L[a, b]
            triplets.push((a + d * c, b + d * e, w.conj() * v));
        }
    }
    for &(a, b, v) in &ldl_nz {
        for k in 0..d {
            triplets.push((a + d * k, b + d * k, -0.5 * v));
            triplets.push((k + d * b, k + d * a, -0.5 * v));
        }
    }
    Liouvillian {
        space: l.space().clone(),
        matrix: SparseMatrix::from_triplets(d * d, d * d, triplets),
    }
}

/// Full Liouvillian for Hamiltonian `h` and collapse operators `collapse`.
pub fn liouvillian(h: &Operator, collapse: &[Operator]) -> Result<Liouvillian> {
    let mut total = hamiltonian_superop(h);
    for l in collapse {
        if l.space() != h.space() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                actual: l.dim(),
            });
        }
        total = total.add(&dissipator_superop(l))?;
    }
    Ok(total)
}

pub(crate) fn vectorize(m: &Mat<C64>) -> Vec<C64> {
    let d = m.nrows();
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub(crate) fn unvectorize(v: &[C64], d: usize) -> Mat<C64> {
    Mat::from_fn(d, d, |i, j| v[i + d * j])
}

impl Liouvillian {
    pub fn zeros(space: &HilbertSpace) -> Self {
        let n = space.dim() * space.dim();
        Self {
            space: space.clone(),
            matrix: SparseMatrix::zeros(n, n),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn add(&self, other: &Liouvillian) -> Result<Liouvillian> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                actual: other.space.dim(),
            });
        }
        Ok(Liouvillian {
            space: self.space.clone(),
            matrix: self.matrix.add(&other.matrix),
        })
    }

    /// `L ρ` as a matrix.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<Mat<C64>> {
        if rho.space() != &self.space {
            return Err(Error::DimensionMismatch {
                expected: self.space.dim(),
                actual: rho.dim(),
            });
        }
        let d = self.space.dim();
        let out = self.matrix.mul_vec(&vectorize(rho.matrix()));
        Ok(unvectorize(&out, d))
    }

    /// Largest entry of the row vector `vec(I)† L`; zero for trace-preserving
    /// generators.
    pub fn trace_defect(&self) -> f64 {
        let d = self.space.dim();
        let mut sums = vec![C64::new(0.0, 0.0); d * d];
        for (r, c, v) in self.matrix.triplets() {
            if r % (d + 1) == 0 {
                sums[c] += v;
            }
        }
        sums.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }

    /// Relative residual `‖L vec(ρ)‖∞ / ‖L‖∞` of a state.
    pub fn residual(&self, rho: &DensityMatrix) -> f64 {
        let r = self.matrix.mul_vec(&vectorize(rho.matrix()));
        let rmax = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let scale = self.matrix.norm_inf();
        if scale == 0.0 {
            rmax
        } else {
            rmax / scale
        }
    }
}

fn solve_with(lu: &Lu<usize, C64>, rhs: &[C64]) -> Vec<C64> {
    let b = Col::<C64>::from_fn(rhs.len(), |i| rhs[i]);
    let x = lu.solve(&b);
    (0..rhs.len()).map(|i| x[i]).collect()
}

/// Relative residual the steady state must reach.
pub const STEADY_STATE_RESIDUAL: f64 = 1e-10;

/// Null vector of `L`, normalized to unit trace.
///
/// One row of `L` (the equation for `ρ₀₀`) is redundant because `L`
/// preserves the trace; it is replaced by the trace constraint and the
/// resulting nonsingular system is LU-factorized.
pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    steady_state_with_tolerance(l, STEADY_STATE_RESIDUAL)
}

/// [`steady_state`] with a caller-chosen bound on the relative residual.
pub fn steady_state_with_tolerance(l: &Liouvillian, residual_tol: f64) -> Result<DensityMatrix> {
    let d = l.space.dim();
    let n = d * d;
    let mut triplets: Vec<(usize, usize, C64)> = l.matrix.triplets().filter(|&(r, _, _)| r != 0).collect();
    for i in 0..d {
        triplets.push((0, i * (d + 1), C64::new(1.0, 0.0)));
    }
    let bordered = SparseMatrix::from_triplets(n, n, triplets);
    let lu = bordered
        .to_faer()?
        .sp_lu()
        .map_err(|e| {
            let msg = format!("{e:?}");
            if msg.contains("Singular") {
                Error::NonUniqueSteadyState(format!("bordered Liouvillian is singular ({msg})"))
            } else {
                Error::Factorization(msg)
            }
        })?;

    let mut rhs = vec![C64::new(0.0, 0.0); n];
    rhs[0] = C64::new(1.0, 0.0);
    let mut x = solve_with(&lu, &rhs);
    if x.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::NonUniqueSteadyState(
            "bordered Liouvillian is singular (more than one null vector)".into(),
        ));
    }

    // A couple of refinement sweeps on the bordered system.
    for _ in 0..2 {
        let ax = bordered.mul_vec(&x);
        let r: Vec<C64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let rnorm = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if rnorm < 1e-15 {
            break;
        }
        let dx = solve_with(&lu, &r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }
    let bordered_residual = {
        let ax = bordered.mul_vec(&x);
        rhs.iter().zip(&ax).map(|(b, a)| (b - a).norm()).fold(0.0, f64::max)
    };
    let xmax = x.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !xmax.is_finite() || bordered_residual > 1e-6 * xmax.max(1.0) {
        return Err(Error::NonUniqueSteadyState(format!(
            "bordered system is numerically singular (residual {bordered_residual:.3e})"
        )));
    }

    let mut rho = DensityMatrix::from_matrix(l.space.clone(), unvectorize(&x, d))?;
    rho.symmetrize();
    rho.normalize_trace();

    let residual = l.residual(&rho);
    if !(residual <= residual_tol) {
        return Err(Error::SteadyStateResidual { residual });
    }
    rho.validate(StateTolerance::default())?;
    Ok(rho)
}
