//! Small dense helpers on top of `faer` matrices.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

pub(crate) fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

/// Largest entry magnitude of `a - b`.
pub fn max_abs_diff(a: &Mat<C64>, b: &Mat<C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

/// Largest entry magnitude of `a - a†`.
pub fn hermitian_defect(a: &Mat<C64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

pub fn adjoint(a: &Mat<C64>) -> Mat<C64> {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn trace(a: &Mat<C64>) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Trace of the product `a * b` without forming it.
pub fn trace_product(a: &Mat<C64>, b: &Mat<C64>) -> C64 {
    let mut acc = zero();
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Eigenvalues of the hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &Mat<C64>) -> Vec<f64> {
    let h = Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)].conj()));
    h.self_adjoint_eigenvalues(Side::Lower)
        .expect("hermitian eigenvalue decomposition")
}

/// Sum of absolute eigenvalues of the hermitian part of `a`.
pub fn trace_norm_hermitian(a: &Mat<C64>) -> f64 {
    hermitian_eigenvalues(a).iter().map(|e| e.abs()).sum()
}

fn one_norm(a: &Mat<C64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a truncated Taylor kernel.
///
/// The argument is scaled by `2^-s` until its 1-norm is below 1/2, where a
/// degree-20 Taylor polynomial is accurate to well below machine precision.
pub fn expm(a: &Mat<C64>) -> Mat<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm = one_norm(a);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    let scale = 0.5f64.powi(squarings as i32);
    let scaled = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);

    let mut result = Mat::<C64>::identity(n, n);
    let mut term = Mat::<C64>::identity(n, n);
    for k in 1..=20u32 {
        term = &term * &scaled;
        let inv = 1.0 / k as f64;
        for j in 0..n {
            for i in 0..n {
                term[(i, j)] *= inv;
            }
        }
        result += &term;
        if one_norm(&term) < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}
