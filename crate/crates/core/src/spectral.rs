//! Mode matrices, eigenvalue curves and the dissipativity type `(p, q)`.
//!
//! For a Fourier mode `û(t) e^{iξx}` the system reduces to
//! `û_t = −(A⁰)⁻¹(iξA + L) û`; the roots `η` of the characteristic equation are
//! the eigenvalues of the negated mode matrix. A system is of type `(p, q)`
//! when `Re η ≤ −c ξ^{2p}/(1+ξ²)^q`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eig_adaptive, EigenDecomposition};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::sysmodel::RelaxationSystem;

/// How a grid was generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridDesign {
    Log { min: f64, max: f64, count: usize },
    Explicit,
}

/// Strictly increasing positive frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub points: Vec<f64>,
    pub design: GridDesign,
}

impl FrequencyGrid {
    pub fn log(min: f64, max: f64, count: usize) -> Result<Self> {
        if !(min > 0.0 && max > min && min.is_finite() && max.is_finite()) {
            return Err(Error::InvalidGrid(format!("need 0 < min < max, got [{min}, {max}]")));
        }
        if count < 2 {
            return Err(Error::InvalidGrid("a log grid needs at least 2 points".into()));
        }
        let (l0, l1) = (min.log10(), max.log10());
        let mut points: Vec<f64> = (0..count)
            .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (count - 1) as f64))
            .collect();
        points[0] = min;
        points[count - 1] = max;
        Ok(FrequencyGrid { points, design: GridDesign::Log { min, max, count } })
    }

    /// Default analysis grid: 601 log-spaced points on `[1e-3, 1e3]`.
    pub fn default_log() -> Self {
        Self::log(1e-3, 1e3, 601).expect("default grid is valid")
    }

    pub fn explicit(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if points.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidGrid("grid points must be positive and finite".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid("grid points must be strictly increasing".into()));
        }
        Ok(FrequencyGrid { points, design: GridDesign::Explicit })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `(A⁰)⁻¹(iξA + L)`.
pub fn mode_matrix(sys: &RelaxationSystem, xi: f64) -> CMat {
    let m = sys.m;
    let base = DMatrix::from_fn(m, m, |i, j| Complex64::new(sys.l[(i, j)], xi * sys.a[(i, j)]));
    if sys.a0 == DMatrix::identity(m, m) {
        return base;
    }
    let chol = sys.a0.clone().cholesky().expect("A0 validated as SPD");
    let re = chol.solve(&base.map(|z| z.re));
    let im = chol.solve(&base.map(|z| z.im));
    DMatrix::from_fn(m, m, |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

fn sort_roots(v: &mut [Complex64]) {
    v.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
}

/// Full eigen-decomposition of `−mode_matrix(ξ)` with adaptive precision.
pub fn decompose_at(sys: &RelaxationSystem, xi: f64, want_vectors: bool) -> Result<EigenDecomposition> {
    let neg = -mode_matrix(sys, xi);
    eig_adaptive(&neg, want_vectors).map_err(|e| Error::EigenAt { xi, source: Box::new(e) })
}

/// Roots `η` at frequency `ξ`, sorted by descending real part, then ascending imaginary part.
pub fn eigenvalues_at(sys: &RelaxationSystem, xi: f64) -> Result<Vec<Complex64>> {
    let mut v = decompose_at(sys, xi, false)?.values;
    sort_roots(&mut v);
    Ok(v)
}

/// Spectral abscissa `max Re η(iξ)` on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralCurve {
    pub grid: FrequencyGrid,
    pub abscissa: Vec<f64>,
    pub full_spectra: Option<Vec<Vec<Complex64>>>,
    /// Mantissa width that resolved each point.
    pub bits: Vec<usize>,
}

pub fn spectral_abscissa_curve(sys: &RelaxationSystem, grid: &FrequencyGrid) -> Result<SpectralCurve> {
    let rows: Vec<(Vec<Complex64>, usize)> = grid
        .points
        .par_iter()
        .map(|&xi| {
            let d = decompose_at(sys, xi, false)?;
            let mut v = d.values;
            sort_roots(&mut v);
            Ok((v, d.bits))
        })
        .collect::<Result<_>>()?;
    let abscissa = rows.iter().map(|(v, _)| v[0].re).collect();
    let bits = rows.iter().map(|(_, b)| *b).collect();
    let full = rows.into_iter().map(|(v, _)| v).collect();
    Ok(SpectralCurve { grid: grid.clone(), abscissa, full_spectra: Some(full), bits })
}

/// Least-squares exponents of the abscissa at both ends of the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayTypeFit {
    pub p_hat: f64,
    pub q_hat: f64,
    pub low_slope: f64,
    pub high_slope: f64,
    /// RMS residual in natural-log units, low window then high window.
    pub residuals: [f64; 2],
    pub low_count: usize,
    pub high_count: usize,
}

/// Slope, intercept and RMS residual of a least-squares line.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icpt, rms)
}

fn window_fit(curve: &SpectralCurve, keep: impl Fn(f64) -> bool, name: &'static str) -> Result<(f64, f64, usize)> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&xi, &a) in curve.grid.points.iter().zip(&curve.abscissa) {
        if !keep(xi) {
            continue;
        }
        if a >= 0.0 {
            return Err(Error::NonnegativeAbscissa { window: name, xi, value: a });
        }
        lx.push(xi.ln());
        ly.push((-a).ln());
    }
    if lx.len() < 8 {
        return Err(Error::FitWindowTooSmall { window: name, count: lx.len() });
    }
    let (s, _, r) = line_fit(&lx, &ly);
    Ok((s, r, lx.len()))
}

/// Fit `log(−abscissa)` against `log ξ` on `ξ ≤ low_max` and `ξ ≥ high_min`.
pub fn fit_decay_type(curve: &SpectralCurve, low_max: f64, high_min: f64) -> Result<DecayTypeFit> {
    let (low_slope, rl, nl) = window_fit(curve, |x| x <= low_max, "low")?;
    let (high_slope, rh, nh) = window_fit(curve, |x| x >= high_min, "high")?;
    Ok(DecayTypeFit {
        p_hat: low_slope / 2.0,
        q_hat: (low_slope - high_slope) / 2.0,
        low_slope,
        high_slope,
        residuals: [rl, rh],
        low_count: nl,
        high_count: nh,
    })
}

/// Outcome of checking `Re η ≤ −c ξ^{2p}/(1+ξ²)^q` on a grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TypeBound {
    pub p: i32,
    pub q: i32,
    /// `min (−abscissa)(1+ξ²)^q / ξ^{2p}` over the grid.
    pub c_est: f64,
    pub xi_at_min: f64,
    pub holds: bool,
    /// Grid points where the scaled ratio is not positive.
    pub violations: Vec<f64>,
}

pub fn verify_type_bound(curve: &SpectralCurve, p: i32, q: i32) -> TypeBound {
    let mut c_est = f64::INFINITY;
    let mut at = f64::NAN;
    let mut violations = Vec::new();
    for (&xi, &a) in curve.grid.points.iter().zip(&curve.abscissa) {
        // Evaluate in logs when possible so that extreme powers do not overflow.
        let ratio = if a < 0.0 {
            ((-a).ln() + q as f64 * (1.0 + xi * xi).ln() - 2.0 * p as f64 * xi.ln()).exp()
        } else {
            -a * (1.0 + xi * xi).powi(q) / xi.powi(2 * p)
        };
        if ratio <= 0.0 {
            violations.push(xi);
        }
        if ratio < c_est {
            c_est = ratio;
            at = xi;
        }
    }
    TypeBound { p, q, c_est, xi_at_min: at, holds: c_est > 0.0 && violations.is_empty(), violations }
}

/// Proven rate exponents `(p, q)` for a model of dimension `m`; the second
/// model's `p` is `(3m − 10)/2`, an integer for even `m`.
pub fn proven_type(model: crate::sysmodel::ModelTag, m: usize) -> Option<(i32, i32)> {
    let m = m as i32;
    match model {
        crate::sysmodel::ModelTag::ModelI => Some((m - 3, m - 2)),
        crate::sysmodel::ModelTag::ModelII => Some(((3 * m - 10) / 2, 2 * (m - 3))),
        crate::sysmodel::ModelTag::Custom => None,
    }
}
