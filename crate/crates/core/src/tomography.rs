//! Phase-space tomography of a single mode: generalized Husimi functions
//! `Q_N`, the displaced-parity Wigner function and the alternating Q sum.
//!
//! Normalization: the vacuum has `W(0) = 2/π` and `Q_0(0) = 1/π`, so
//! `∫ W dRe dIm = 1`.
//!
//! Displacement matrix elements are evaluated from the closed Laguerre form,
//! which is exact for the untruncated operator: a state supported on the
//! first `d` levels only needs the `d × d` corner of `D(α)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::DensityMatrix;

/// Rectangular grid of points α = re + i·im.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl Default for PhaseSpaceGrid {
    fn default() -> Self {
        Self::square(3.0, 61).expect("default grid is valid")
    }
}

impl PhaseSpaceGrid {
    pub fn new(re: (f64, f64), im: (f64, f64), n_re: usize, n_im: usize) -> Result<Self> {
        let g = Self {
            re_min: re.0,
            re_max: re.1,
            im_min: im.0,
            im_max: im.1,
            n_re,
            n_im,
        };
        g.validate()?;
        Ok(g)
    }

    /// `[−half, half]²` with `n` points per axis.
    pub fn square(half: f64, n: usize) -> Result<Self> {
        Self::new((-half, half), (-half, half), n, n)
    }

    /// A single point, for pointwise evaluation through the grid machinery.
    pub fn point(alpha: C64) -> Self {
        Self {
            re_min: alpha.re,
            re_max: alpha.re,
            im_min: alpha.im,
            im_max: alpha.im,
            n_re: 1,
            n_im: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let single = self.n_re == 1 && self.n_im == 1 && self.re_min == self.re_max && self.im_min == self.im_max;
        if single {
            return Ok(());
        }
        if self.n_re < 2 || self.n_im < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 points per axis".into()));
        }
        if !(self.re_max > self.re_min && self.im_max > self.im_min) {
            return Err(Error::InvalidParameter("grid window is empty".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_re * self.n_im
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(min: f64, max: f64, n: usize, k: usize) -> f64 {
        if n == 1 {
            min
        } else {
            min + (max - min) * k as f64 / (n - 1) as f64
        }
    }

    pub fn re(&self, i: usize) -> f64 {
        Self::axis(self.re_min, self.re_max, self.n_re, i)
    }

    pub fn im(&self, j: usize) -> f64 {
        Self::axis(self.im_min, self.im_max, self.n_im, j)
    }

    /// Point for flat index `k = i·n_im + j`.
    pub fn alpha(&self, k: usize) -> C64 {
        C64::new(self.re(k / self.n_im), self.im(k % self.n_im))
    }

    /// Area element ΔRe·ΔIm.
    pub fn cell_area(&self) -> f64 {
        let dre = if self.n_re > 1 { (self.re_max - self.re_min) / (self.n_re - 1) as f64 } else { 1.0 };
        let dim = if self.n_im > 1 { (self.im_max - self.im_min) / (self.n_im - 1) as f64 } else { 1.0 };
        dre * dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MapKind {
    /// Generalized Husimi function `Q_N`.
    Q { n: usize },
    /// Displaced-parity Wigner function.
    Wigner,
    /// `2 Σ_{N ≤ n_max} (−1)^N Q_N`.
    WignerFromQ { n_max: usize },
    /// `2 Σ_{N > n_max} Q_N`, a pointwise bound on |W − W_from_Q|.
    TruncationBound { n_max: usize },
}

/// Real values on a grid, stored row-major: `values[i·n_im + j]` sits at
/// `(re(i), im(j))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceMap {
    pub grid: PhaseSpaceGrid,
    pub kind: MapKind,
    pub values: Vec<f64>,
}

const NORMALIZATION_NOTE: &str = "W(0) = 2/pi for the vacuum, Q_0(0) = 1/pi; integral of W over dRe dIm is 1";

impl PhaseSpaceMap {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_im + j]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Riemann sum Σ value·ΔRe·ΔIm.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Value at the grid point closest to `alpha`.
    pub fn nearest(&self, alpha: C64) -> f64 {
        let idx = |min: f64, max: f64, n: usize, x: f64| -> usize {
            if n == 1 {
                return 0;
            }
            let t = (x - min) / (max - min) * (n - 1) as f64;
            t.round().clamp(0.0, (n - 1) as f64) as usize
        };
        let g = &self.grid;
        self.at(idx(g.re_min, g.re_max, g.n_re, alpha.re), idx(g.im_min, g.im_max, g.n_im, alpha.im))
    }

    pub fn max_abs_diff(&self, other: &PhaseSpaceMap) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "re,im,value")?;
        for k in 0..self.values.len() {
            let a = self.grid.alpha(k);
            writeln!(w, "{},{},{}", a.re, a.im, self.values[k])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "grid": self.grid,
            "normalization": NORMALIZATION_NOTE,
            "layout": "values[i * n_im + j] at (re_i, im_j)",
            "values": self.values,
        })
    }

    /// Write `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let csv = std::fs::File::create(stem.with_extension("csv"))?;
        self.write_csv(std::io::BufWriter::new(csv))?;
        std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// `d × d` corner of the untruncated displacement operator `D(α)`.
pub fn displacement_elements(alpha: C64, dim: usize) -> Mat<C64> {
    let x = alpha.norm_sqr();
    let gauss = (-0.5 * x).exp();
    let mut out = Mat::<C64>::zeros(dim, dim);
    let mut lag = vec![0.0; dim];
    for k in 0..dim {
        // generalized Laguerre L_j^{(k)}(x) for j = 0..dim-k
        let count = dim - k;
        let kf = k as f64;
        lag[0] = 1.0;
        if count > 1 {
            lag[1] = 1.0 + kf - x;
        }
        for j in 1..count.saturating_sub(1) {
            let jf = j as f64;
            lag[j + 1] = ((2.0 * jf + 1.0 + kf - x) * lag[j] - (jf + kf) * lag[j - 1]) / (jf + 1.0);
        }
        for j in 0..count {
            // √(j!/(j+k)!) α^k
            let mut pref = C64::new(1.0, 0.0);
            for l in 1..=k {
                pref *= alpha / ((j + l) as f64).sqrt();
            }
            let lower = pref * (gauss * lag[j]);
            out[(j + k, j)] = lower;
            if k > 0 {
                // ⟨j|D|j+k⟩ = (−α*)^k analogue of the lower element
                let mut pref_up = C64::new(1.0, 0.0);
                for l in 1..=k {
                    pref_up *= -alpha.conj() / ((j + l) as f64).sqrt();
                }
                out[(j, j + k)] = pref_up * (gauss * lag[j]);
            }
        }
    }
    out
}

fn single_mode(rho: &DensityMatrix) -> Result<()> {
    if rho.space().modes().len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "tomography needs a single-mode state, got {}; reduce it first",
            rho.space()
        )));
    }
    Ok(())
}

/// `π⁻¹ ⟨N|D(−α) ρ D(α)|N⟩`.
pub fn q_function(rho: &DensityMatrix, n: usize, alpha: C64) -> Result<f64> {
    single_mode(rho)?;
    let d = rho.dim();
    if n >= d {
        return Err(Error::FockIndexOutOfRange { n, dim: d });
    }
    let dm = displacement_elements(alpha, d);
    Ok(q_from_elements(rho, &dm, n))
}

fn q_from_elements(rho: &DensityMatrix, dm: &Mat<C64>, n: usize) -> f64 {
    let d = rho.dim();
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..d {
        let left = dm[(m, n)].conj();
        if left == C64::new(0.0, 0.0) {
            continue;
        }
        let mut row = C64::new(0.0, 0.0);
        for k in 0..d {
            row += rho.get(m, k) * dm[(k, n)];
        }
        acc += left * row;
    }
    acc.re / PI
}

/// `(2/π) Tr[D(−α) ρ D(α) Π]`, evaluated as `(2/π) Tr[ρ D(2α) Π]`.
pub fn wigner_direct(rho: &DensityMatrix, alpha: C64) -> Result<f64> {
    single_mode(rho)?;
    let d = rho.dim();
    let dm = displacement_elements(2.0 * alpha, d);
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..d {
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for n in 0..d {
            acc += rho.get(m, n) * dm[(n, m)] * sign;
        }
    }
    Ok(2.0 / PI * acc.re)
}

/// Evaluate a pointwise functional at every grid point, in parallel.
pub fn map_over_grid<F>(grid: &PhaseSpaceGrid, kind: MapKind, f: F) -> Result<PhaseSpaceMap>
where
    F: Fn(C64) -> Result<f64> + Sync,
{
    grid.validate()?;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| f(grid.alpha(k)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(PhaseSpaceMap {
        grid: grid.clone(),
        kind,
        values,
    })
}

pub fn q_map(rho: &DensityMatrix, n: usize, grid: &PhaseSpaceGrid) -> Result<PhaseSpaceMap> {
    map_over_grid(grid, MapKind::Q { n }, |a| q_function(rho, n, a))
}

pub fn wigner_map(rho: &DensityMatrix, grid: &PhaseSpaceGrid) -> Result<PhaseSpaceMap> {
    map_over_grid(grid, MapKind::Wigner, |a| wigner_direct(rho, a))
}

/// Maps `Q_0 … Q_{n_max}` from a single pass over the grid.
pub fn q_maps(rho: &DensityMatrix, n_max: usize, grid: &PhaseSpaceGrid) -> Result<Vec<PhaseSpaceMap>> {
    single_mode(rho)?;
    let d = rho.dim();
    if n_max >= d {
        return Err(Error::FockIndexOutOfRange { n: n_max, dim: d });
    }
    grid.validate()?;
    let per_point: Vec<Vec<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let dm = displacement_elements(grid.alpha(k), d);
            (0..=n_max).map(|n| q_from_elements(rho, &dm, n)).collect()
        })
        .collect();
    Ok((0..=n_max)
        .map(|n| PhaseSpaceMap {
            grid: grid.clone(),
            kind: MapKind::Q { n },
            values: per_point.iter().map(|v| v[n]).collect(),
        })
        .collect())
}

fn check_q_family(q_maps: &[PhaseSpaceMap]) -> Result<&PhaseSpaceGrid> {
    let first = q_maps
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least the Q_0 map".into()))?;
    for (n, m) in q_maps.iter().enumerate() {
        if m.grid != first.grid {
            return Err(Error::GridMismatch);
        }
        if m.kind != (MapKind::Q { n }) {
            return Err(Error::InvalidParameter(format!("map {n} is {:?}, expected Q_{n}", m.kind)));
        }
    }
    Ok(&first.grid)
}

/// `W(α) = 2 Σ_N (−1)^N Q_N(α)` over the supplied maps `Q_0 … Q_{n_max}`.
pub fn wigner_from_q(q_maps: &[PhaseSpaceMap]) -> Result<PhaseSpaceMap> {
    let grid = check_q_family(q_maps)?;
    let values = (0..grid.len())
        .map(|k| {
            2.0 * q_maps
                .iter()
                .enumerate()
                .map(|(n, m)| if n % 2 == 0 { m.values[k] } else { -m.values[k] })
                .sum::<f64>()
        })
        .collect();
    Ok(PhaseSpaceMap {
        grid: grid.clone(),
        kind: MapKind::WignerFromQ { n_max: q_maps.len() - 1 },
        values,
    })
}

/// `2 Σ_{N > n_max} Q_N(α) = 2 (1/π − Σ_{N ≤ n_max} Q_N(α))` for a unit-trace state.
pub fn truncation_bound(q_maps: &[PhaseSpaceMap]) -> Result<PhaseSpaceMap> {
    let grid = check_q_family(q_maps)?;
    let values = (0..grid.len())
        .map(|k| (2.0 * (1.0 / PI - q_maps.iter().map(|m| m.values[k]).sum::<f64>())).max(0.0))
        .collect();
    Ok(PhaseSpaceMap {
        grid: grid.clone(),
        kind: MapKind::TruncationBound { n_max: q_maps.len() - 1 },
        values,
    })
}

/// Partial trace onto `mode`.
pub fn reduced_density(rho: &DensityMatrix, mode: &str) -> Result<DensityMatrix> {
    rho.reduce_to(mode)
}

/// Everything a tomography export produces for one state.
#[derive(Clone, Debug)]
pub struct TomographySet {
    pub q: Vec<PhaseSpaceMap>,
    pub wigner_from_q: PhaseSpaceMap,
    pub wigner: PhaseSpaceMap,
    pub truncation_bound: PhaseSpaceMap,
}

pub const DEFAULT_Q_NMAX: usize = 3;

pub fn tomography(rho: &DensityMatrix, n_max: usize, grid: &PhaseSpaceGrid) -> Result<TomographySet> {
    let q = q_maps(rho, n_max, grid)?;
    Ok(TomographySet {
        wigner_from_q: wigner_from_q(&q)?,
        truncation_bound: truncation_bound(&q)?,
        wigner: wigner_map(rho, grid)?,
        q,
    })
}

impl TomographySet {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for m in &self.q {
            if let MapKind::Q { n } = m.kind {
                m.save(&dir.join(format!("q{n}")))?;
            }
        }
        self.wigner_from_q.save(&dir.join("wigner_from_q"))?;
        self.wigner.save(&dir.join("wigner_direct"))?;
        self.truncation_bound.save(&dir.join("truncation_bound"))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{self, HilbertSpace, StateVector};

    fn space(d: usize) -> HilbertSpace {
        HilbertSpace::single("storage", d).unwrap()
    }

    #[test]
    fn closed_form_matches_matrix_exponential() {
        // expm of the truncated generator converges to the exact corner when the
        // truncation is much larger than the corner
        let big = 60;
        for alpha in [C64::new(0.3, -0.2), C64::new(1.1, 0.7), C64::new(-2.0, 1.5)] {
            let exact = displacement_elements(alpha, 8);
            let d = fock::displacement(alpha, big).unwrap();
            for i in 0..8 {
                for j in 0..8 {
                    assert!((exact[(i, j)] - d.get(i, j)).norm() < 1e-10, "{alpha} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn q_function_examples() {
        let vac = DensityMatrix::vacuum(&space(6));
        assert!((q_function(&vac, 0, C64::new(0.0, 0.0)).unwrap() - 1.0 / PI).abs() < 1e-15);
        for a in [C64::new(0.5, 0.0), C64::new(-1.0, 1.3)] {
            let expected = (-a.norm_sqr()).exp() / PI;
            assert!((q_function(&vac, 0, a).unwrap() - expected).abs() < 1e-14);
        }
        let one = DensityMatrix::fock(&space(4), &[1]).unwrap();
        assert!((q_function(&one, 1, C64::new(0.0, 0.0)).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!(q_function(&one, 0, C64::new(0.0, 0.0)).unwrap().abs() < 1e-15);
        assert!(matches!(q_function(&one, 4, C64::new(0.0, 0.0)), Err(Error::FockIndexOutOfRange { .. })));
    }

    #[test]
    fn wigner_examples() {
        let z = C64::new(0.0, 0.0);
        let vac = DensityMatrix::vacuum(&space(4));
        assert!((wigner_direct(&vac, z).unwrap() - 2.0 / PI).abs() < 1e-15);
        let one = DensityMatrix::fock(&space(4), &[1]).unwrap();
        assert!((wigner_direct(&one, z).unwrap() + 2.0 / PI).abs() < 1e-15);
        let mix = DensityMatrix::fock_mixture(&space(4), &[0.37, 0.63]).unwrap();
        let w = wigner_direct(&mix, z).unwrap();
        assert!((w - 2.0 / PI * (0.37 - 0.63)).abs() < 1e-15);
        assert!(w < 0.0);
        // vacuum Gaussian away from the origin
        let a = C64::new(0.4, -0.9);
        assert!((wigner_direct(&vac, a).unwrap() - 2.0 / PI * (-2.0 * a.norm_sqr()).exp()).abs() < 1e-14);
    }

    #[test]
    fn wigner_of_coherent_state_is_displaced_gaussian() {
        let alpha0 = C64::new(0.8, -0.5);
        let rho = DensityMatrix::pure(&StateVector::coherent(&space(30), alpha0).unwrap());
        for a in [C64::new(0.0, 0.0), C64::new(1.0, 0.2), C64::new(-0.5, 0.5)] {
            let expected = 2.0 / PI * (-2.0 * (a - alpha0).norm_sqr()).exp();
            assert!((wigner_direct(&rho, a).unwrap() - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn q_sum_reconstruction() {
        let grid = PhaseSpaceGrid::square(3.0, 21).unwrap();
        // vacuum with N_max = 0 is exact at the origin
        let vac = DensityMatrix::vacuum(&space(4));
        let w0 = wigner_from_q(&q_maps(&vac, 0, &grid).unwrap()).unwrap();
        assert!((w0.nearest(C64::new(0.0, 0.0)) - 2.0 / PI).abs() < 1e-15);

        for rho in [
            DensityMatrix::fock_mixture(&space(6), &[0.37, 0.63]).unwrap(),
            DensityMatrix::pure(&StateVector::coherent(&space(25), C64::new(1.0, 0.0)).unwrap()),
        ] {
            let set = tomography(&rho, 3, &grid).unwrap();
            for k in 0..grid.len() {
                let diff = (set.wigner.values[k] - set.wigner_from_q.values[k]).abs();
                assert!(diff <= set.truncation_bound.values[k] + 1e-12, "k = {k}: {diff}");
            }
            let origin = C64::new(0.0, 0.0);
            let support_low = rho.diagonal().iter().skip(4).sum::<f64>() < 1e-12;
            if support_low {
                assert!((set.wigner.nearest(origin) - set.wigner_from_q.nearest(origin)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_grids_rejected() {
        let vac = DensityMatrix::vacuum(&space(3));
        let mut maps = q_maps(&vac, 1, &PhaseSpaceGrid::square(2.0, 5).unwrap()).unwrap();
        maps[1].grid = PhaseSpaceGrid::square(1.0, 5).unwrap();
        assert!(matches!(wigner_from_q(&maps), Err(Error::GridMismatch)));
    }

    #[test]
    fn grid_shapes() {
        assert!(PhaseSpaceGrid::new((0.0, 1.0), (0.0, 1.0), 1, 5).is_err());
        assert!(PhaseSpaceGrid::new((1.0, 1.0), (0.0, 1.0), 3, 5).is_err());
        let vac = DensityMatrix::vacuum(&space(3));
        let a = C64::new(0.3, 0.1);
        let single = map_over_grid(&PhaseSpaceGrid::point(a), MapKind::Wigner, |z| wigner_direct(&vac, z)).unwrap();
        assert_eq!(single.values, vec![wigner_direct(&vac, a).unwrap()]);
    }

    #[test]
    fn vacuum_wigner_integrates_to_one() {
        let vac = DensityMatrix::vacuum(&space(3));
        let w = wigner_map(&vac, &PhaseSpaceGrid::square(4.0, 81).unwrap()).unwrap();
        assert!((w.integral() - 1.0).abs() < 1e-2);
    }

    #[test]
    fn fock_mixture_map_is_inversion_symmetric() {
        let rho = DensityMatrix::fock_mixture(&space(5), &[0.2, 0.5, 0.3]).unwrap();
        let grid = PhaseSpaceGrid::square(2.0, 11).unwrap();
        let w = wigner_map(&rho, &grid).unwrap();
        for i in 0..11 {
            for j in 0..11 {
                assert!((w.at(i, j) - w.at(10 - i, 10 - j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reduced_density_of_correlated_state() {
        // (|0,1⟩ + |1,0⟩ + |2,2⟩)/√3 on 3×3 levels
        let s = HilbertSpace::new(vec![
            fock::ModeSpec::new("storage", 3).unwrap(),
            fock::ModeSpec::new("cooling", 3).unwrap(),
        ])
        .unwrap();
        let mut amps = vec![C64::new(0.0, 0.0); 9];
        for occ in [[0, 1], [1, 0], [2, 2]] {
            amps[s.basis_index(&occ).unwrap()] = C64::new(1.0, 0.0);
        }
        let rho = DensityMatrix::pure(&StateVector::normalized(s, amps).unwrap());
        let red = reduced_density(&rho, "storage").unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 / 3.0 } else { 0.0 };
                assert!((red.get(i, j) - C64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
        assert!((red.trace().re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn csv_and_json_layout() {
        let vac = DensityMatrix::vacuum(&space(3));
        let m = wigner_map(&vac, &PhaseSpaceGrid::square(1.0, 2).unwrap()).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re,im,value");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("-1,1,"));
        let j = m.to_json();
        assert_eq!(j["kind"]["type"], "wigner");
        assert_eq!(j["grid"]["n_re"], 2);
    }
}
