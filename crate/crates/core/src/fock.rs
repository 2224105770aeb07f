//! Truncated Fock-space operator algebra.
//!
//! Multi-mode spaces are tensor products of truncated oscillators. The basis
//! index of a product state follows the Kronecker convention: the first mode
//! is the most significant digit, so for modes `(storage, cooling)` the state
//! `|n_s, n_c⟩` sits at `n_s * dim_c + n_c`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::dense;
use crate::error::{Error, Result};

pub const QUBIT: &str = "qubit";
pub const STORAGE: &str = "storage";
pub const COOLING: &str = "cooling";

/// One truncated oscillator mode.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpec {
    label: String,
    dim: usize,
}

impl ModeSpec {
    pub fn new(label: impl Into<String>, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension { dim });
        }
        Ok(Self {
            label: label.into(),
            dim,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Ordered tensor product of truncated modes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HilbertSpace {
    modes: Vec<ModeSpec>,
    total_dim: usize,
}

impl HilbertSpace {
    pub fn new(modes: Vec<ModeSpec>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidParameter("a Hilbert space needs at least one mode".into()));
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].iter().any(|o| o.label == m.label) {
                return Err(Error::DuplicateMode(m.label.clone()));
            }
        }
        let total_dim = modes.iter().map(|m| m.dim).product();
        Ok(Self { modes, total_dim })
    }

    pub fn single(label: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(vec![ModeSpec::new(label, dim)?])
    }

    /// The driven two-cavity layout `(storage, cooling)`.
    pub fn two_cavity(storage_dim: usize, cooling_dim: usize) -> Result<Self> {
        Self::new(vec![
            ModeSpec::new(STORAGE, storage_dim)?,
            ModeSpec::new(COOLING, cooling_dim)?,
        ])
    }

    /// The full three-mode layout `(qubit, storage, cooling)`.
    pub fn three_mode(qubit_dim: usize, storage_dim: usize, cooling_dim: usize) -> Result<Self> {
        Self::new(vec![
            ModeSpec::new(QUBIT, qubit_dim)?,
            ModeSpec::new(STORAGE, storage_dim)?,
            ModeSpec::new(COOLING, cooling_dim)?,
        ])
    }

    pub fn modes(&self) -> &[ModeSpec] {
        &self.modes
    }

    pub fn labels(&self) -> Vec<String> {
        self.modes.iter().map(|m| m.label.clone()).collect()
    }

    pub fn dim(&self) -> usize {
        self.total_dim
    }

    pub fn mode_index(&self, label: &str) -> Result<usize> {
        self.modes
            .iter()
            .position(|m| m.label == label)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    pub fn mode_dim(&self, label: &str) -> Result<usize> {
        Ok(self.modes[self.mode_index(label)?].dim)
    }

    /// Basis index of the product state with the given occupations.
    pub fn basis_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                actual: occupations.len(),
            });
        }
        let mut idx = 0;
        for (m, &n) in self.modes.iter().zip(occupations) {
            if n >= m.dim {
                return Err(Error::FockIndexOutOfRange { n, dim: m.dim });
            }
            idx = idx * m.dim + n;
        }
        Ok(idx)
    }

    /// Occupations of basis state `index`.
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let mut occ = vec![0; self.modes.len()];
        for (k, m) in self.modes.iter().enumerate().rev() {
            occ[k] = index % m.dim;
            index /= m.dim;
        }
        occ
    }

    fn require_labels(&self, expected: &[&str]) -> Result<()> {
        let actual = self.labels();
        if actual.len() != expected.len() || actual.iter().zip(expected).any(|(a, e)| a != e) {
            return Err(Error::ModeLayout {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                actual,
            });
        }
        Ok(())
    }

    pub(crate) fn require_two_cavity(&self) -> Result<()> {
        self.require_labels(&[STORAGE, COOLING])
    }

    pub(crate) fn require_three_mode(&self) -> Result<()> {
        self.require_labels(&[QUBIT, STORAGE, COOLING])
    }
}

impl fmt::Display for HilbertSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.modes.iter().map(|m| format!("{}[{}]", m.label, m.dim)).collect();
        write!(f, "{}", parts.join(" ⊗ "))
    }
}

/// Dense operator on a [`HilbertSpace`].
#[derive(Clone, Debug)]
pub struct Operator {
    space: HilbertSpace,
    matrix: Mat<C64>,
}

impl Operator {
    pub fn from_matrix(space: HilbertSpace, matrix: Mat<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            matrix: Mat::zeros(d, d),
        }
    }

    pub fn identity(space: &HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space: space.clone(),
            matrix: Mat::identity(d, d),
        }
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn dagger(&self) -> Self {
        Self {
            space: self.space.clone(),
            matrix: dense::adjoint(&self.matrix),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        let d = self.dim();
        Self {
            space: self.space.clone(),
            matrix: Mat::from_fn(d, d, |i, j| self.matrix[(i, j)] * factor),
        }
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        self.scale(C64::new(factor, 0.0))
    }

    /// Max-entry distance from hermiticity, `max |A - A†|`.
    pub fn hermitian_defect(&self) -> f64 {
        dense::hermitian_defect(&self.matrix)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        &(self * other) - &(other * self)
    }

    pub fn trace(&self) -> C64 {
        dense::trace(&self.matrix)
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        dense::hermitian_eigenvalues(&self.matrix)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        dense::max_abs_diff(&self.matrix, &other.matrix)
    }

    fn same_space(&self, other: &Operator) {
        assert_eq!(self.space, other.space, "operators act on different spaces");
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.same_space(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        self.same_space(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.same_space(rhs);
        Operator {
            space: self.space.clone(),
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        Err(Error::InvalidDimension { dim })
    } else {
        Ok(())
    }
}

fn single_mode_space(dim: usize) -> Result<HilbertSpace> {
    HilbertSpace::single("mode", dim)
}

/// Single-mode lowering operator with `⟨n-1|a|n⟩ = √n`.
pub fn annihilation(dim: usize) -> Result<Operator> {
    check_dim(dim)?;
    let mut m = Mat::<C64>::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator::from_matrix(single_mode_space(dim)?, m)
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.dagger())
}

/// Diagonal `a†a`.
pub fn number(dim: usize) -> Result<Operator> {
    check_dim(dim)?;
    let m = Mat::from_fn(dim, dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
    Operator::from_matrix(single_mode_space(dim)?, m)
}

pub fn identity(dim: usize) -> Result<Operator> {
    check_dim(dim)?;
    Ok(Operator::identity(&single_mode_space(dim)?))
}

/// Photon-number parity `(-1)^n`.
pub fn parity(dim: usize) -> Result<Operator> {
    check_dim(dim)?;
    let m = Mat::from_fn(dim, dim, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if i % 2 == 0 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    });
    Operator::from_matrix(single_mode_space(dim)?, m)
}

/// Displacement `exp(α a† − α* a)` on a `dim`-level truncation.
///
/// Accurate on the low Fock levels when `|α|² + 4|α|` stays below `dim`.
pub fn displacement(alpha: C64, dim: usize) -> Result<Operator> {
    let a = annihilation(dim)?;
    let ad = a.dagger();
    let generator = &ad.scale(alpha) - &a.scale(alpha.conj());
    Operator::from_matrix(single_mode_space(dim)?, dense::expm(generator.matrix()))
}

/// Lift a single-mode operator onto mode `label` of `space`.
pub fn embed(op: &Operator, label: &str, space: &HilbertSpace) -> Result<Operator> {
    let target = space.mode_index(label)?;
    let mode_dim = space.modes()[target].dim();
    if op.dim() != mode_dim {
        return Err(Error::DimensionMismatch {
            expected: mode_dim,
            actual: op.dim(),
        });
    }
    let left: usize = space.modes()[..target].iter().map(|m| m.dim()).product();
    let right: usize = space.modes()[target + 1..].iter().map(|m| m.dim()).product();
    let d = space.dim();
    let mut m = Mat::<C64>::zeros(d, d);
    // I_left ⊗ op ⊗ I_right
    for l in 0..left {
        for i in 0..mode_dim {
            for j in 0..mode_dim {
                let v = op.matrix[(i, j)];
                if v == C64::new(0.0, 0.0) {
                    continue;
                }
                for r in 0..right {
                    let row = (l * mode_dim + i) * right + r;
                    let col = (l * mode_dim + j) * right + r;
                    m[(row, col)] = v;
                }
            }
        }
    }
    Operator::from_matrix(space.clone(), m)
}

/// Lowering operator of mode `label` in `space`.
pub fn mode_annihilation(space: &HilbertSpace, label: &str) -> Result<Operator> {
    embed(&annihilation(space.mode_dim(label)?)?, label, space)
}

/// Number operator of mode `label` in `space`.
pub fn mode_number(space: &HilbertSpace, label: &str) -> Result<Operator> {
    embed(&number(space.mode_dim(label)?)?, label, space)
}

/// Pure state.
#[derive(Clone, Debug)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn from_amplitudes(space: HilbertSpace, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!("state norm {norm} differs from 1")));
        }
        Ok(Self { space, amplitudes })
    }

    /// Normalize arbitrary (nonzero) amplitudes.
    pub fn normalized(space: HilbertSpace, mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        for a in &mut amplitudes {
            *a /= norm;
        }
        Self::from_amplitudes(space, amplitudes)
    }

    pub fn fock(space: &HilbertSpace, occupations: &[usize]) -> Result<Self> {
        let mut amps = vec![C64::new(0.0, 0.0); space.dim()];
        amps[space.basis_index(occupations)?] = C64::new(1.0, 0.0);
        Self::from_amplitudes(space.clone(), amps)
    }

    /// Truncated coherent state `|α⟩`, renormalized on the retained levels.
    pub fn coherent(space: &HilbertSpace, alpha: C64) -> Result<Self> {
        if space.modes().len() != 1 {
            return Err(Error::InvalidParameter("coherent state needs a single-mode space".into()));
        }
        let dim = space.dim();
        let mut amps = Vec::with_capacity(dim);
        let mut term = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..dim {
            if n > 0 {
                term = term * alpha / (n as f64).sqrt();
            }
            amps.push(term);
        }
        Self::normalized(space.clone(), amps)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Mixed state on a [`HilbertSpace`].
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: Mat<C64>,
}

/// Tolerances a returned state must satisfy.
#[derive(Clone, Copy, Debug)]
pub struct StateTolerance {
    pub hermitian: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateTolerance {
    fn default() -> Self {
        Self {
            hermitian: 1e-10,
            trace: 1e-10,
            min_eigenvalue: -1e-8,
        }
    }
}

impl DensityMatrix {
    /// Wrap a matrix without validating physicality; see [`DensityMatrix::validate`].
    pub fn from_matrix(space: HilbertSpace, matrix: Mat<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn pure(state: &StateVector) -> Self {
        let a = &state.amplitudes;
        let d = a.len();
        Self {
            space: state.space.clone(),
            matrix: Mat::from_fn(d, d, |i, j| a[i] * a[j].conj()),
        }
    }

    pub fn fock(space: &HilbertSpace, occupations: &[usize]) -> Result<Self> {
        Ok(Self::pure(&StateVector::fock(space, occupations)?))
    }

    pub fn vacuum(space: &HilbertSpace) -> Self {
        Self::fock(space, &vec![0; space.modes().len()]).expect("vacuum is always in range")
    }

    /// Diagonal mixture of single-mode Fock states with the given weights.
    pub fn fock_mixture(space: &HilbertSpace, weights: &[f64]) -> Result<Self> {
        if weights.len() > space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                actual: weights.len(),
            });
        }
        let d = space.dim();
        let m = Mat::from_fn(d, d, |i, j| {
            if i == j && i < weights.len() {
                C64::new(weights[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self::from_matrix(space.clone(), m)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn matrix(&self) -> &Mat<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.matrix[(row, col)]
    }

    pub fn trace(&self) -> C64 {
        dense::trace(&self.matrix)
    }

    pub fn hermitian_defect(&self) -> f64 {
        dense::hermitian_defect(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        dense::hermitian_eigenvalues(&self.matrix)[0]
    }

    /// Real diagonal (basis-state populations).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).collect()
    }

    /// Replace ρ by (ρ + ρ†)/2.
    pub fn symmetrize(&mut self) {
        let d = self.dim();
        for j in 0..d {
            for i in 0..=j {
                let v = 0.5 * (self.matrix[(i, j)] + self.matrix[(j, i)].conj());
                self.matrix[(i, j)] = v;
                self.matrix[(j, i)] = v.conj();
            }
        }
    }

    /// Divide by the (real part of the) trace.
    pub fn normalize_trace(&mut self) {
        let t = self.trace().re;
        let d = self.dim();
        for j in 0..d {
            for i in 0..d {
                self.matrix[(i, j)] /= t;
            }
        }
    }

    /// Check hermiticity, unit trace and positivity.
    pub fn validate(&self, tol: StateTolerance) -> Result<()> {
        let herm = self.hermitian_defect();
        if herm > tol.hermitian {
            return Err(Error::InvalidState(format!("hermiticity defect {herm:.3e}")));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol.trace {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < tol.min_eigenvalue {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Partial trace over every mode except `label`.
    pub fn reduce_to(&self, label: &str) -> Result<DensityMatrix> {
        let k = self.space.mode_index(label)?;
        let modes = self.space.modes();
        let dk = modes[k].dim();
        let left: usize = modes[..k].iter().map(|m| m.dim()).product();
        let right: usize = modes[k + 1..].iter().map(|m| m.dim()).product();
        let mut out = Mat::<C64>::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = C64::new(0.0, 0.0);
                for l in 0..left {
                    for r in 0..right {
                        let row = (l * dk + i) * right + r;
                        let col = (l * dk + j) * right + r;
                        acc += self.matrix[(row, col)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        DensityMatrix::from_matrix(HilbertSpace::new(vec![modes[k].clone()])?, out)
    }

    /// Trace distance ½‖ρ − σ‖₁.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        let diff = &self.matrix - &other.matrix;
        Ok(0.5 * dense::trace_norm_hermitian(&diff))
    }
}

/// `Tr[op · ρ]`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<C64> {
    if op.space != rho.space {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            actual: rho.dim(),
        });
    }
    Ok(dense::trace_product(&op.matrix, &rho.matrix))
}
