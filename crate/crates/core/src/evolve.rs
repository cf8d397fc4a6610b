//! Exact propagation of Fourier modes and Sobolev-norm decay measurements.
//!
//! Transform convention: `û(ξ) = ∫ u(x) e^{−iξx} dx`, so that Parseval reads
//! `‖u‖² = (1/2π) ∫ |û(ξ)|² dξ`. Real data satisfy `û(−ξ) = conj(û(ξ))`, and
//! the norms below integrate over `ξ > 0` and double.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{eig_adaptive, eig_at_precision};
use crate::error::{Error, Result};
use crate::lyapunov::{lambda_profile, LyapunovCertificate};
use crate::spectral::{line_fit, mode_matrix, FrequencyGrid};
use crate::sysmodel::{ModelTag, RelaxationSystem};

/// Eigenbases with a larger condition number fall back to the matrix exponential.
pub const MAX_BASIS_CONDITION: f64 = 1e8;

/// `û(t) = exp(−tM)û₀` at a fixed frequency.
#[derive(Clone, Debug)]
pub enum ModePropagator {
    /// `−M = V diag(η) V⁻¹`.
    Eigen { eta: Vec<Complex64>, v: DMatrix<Complex64>, v_inv: DMatrix<Complex64> },
    Exponential { m: DMatrix<Complex64> },
}

impl ModePropagator {
    pub fn new(sys: &RelaxationSystem, xi: f64) -> Self {
        let m = mode_matrix(sys, xi);
        let neg = -&m;
        // At ξ = 0 the kernel of L sits exactly on the imaginary axis, which
        // only costs the adaptive solver time; double precision is exact enough.
        let dec = if xi == 0.0 { eig_at_precision(&neg, 53, true) } else { eig_adaptive(&neg, true) };
        if let Ok(dec) = dec {
            let v = dec.vectors.expect("vectors requested");
            if let Some(v_inv) = v.clone().try_inverse() {
                if v.norm() * v_inv.norm() <= MAX_BASIS_CONDITION {
                    return ModePropagator::Eigen { eta: dec.values, v, v_inv };
                }
            }
        }
        ModePropagator::Exponential { m }
    }

    pub fn uses_eigenbasis(&self) -> bool {
        matches!(self, ModePropagator::Eigen { .. })
    }

    pub fn propagate(&self, u0: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
        if t == 0.0 {
            return u0.clone();
        }
        match self {
            ModePropagator::Eigen { eta, v, v_inv } => {
                let c = v_inv * u0;
                let scaled = DVector::from_fn(c.len(), |i, _| c[i] * (eta[i] * t).exp());
                v * scaled
            }
            ModePropagator::Exponential { m } => (m * Complex64::new(-t, 0.0)).exp() * u0,
        }
    }

    /// States at several times, sharing the modal coordinates of `û₀`.
    pub fn propagate_many(&self, u0: &DVector<Complex64>, times: &[f64]) -> Vec<DVector<Complex64>> {
        match self {
            ModePropagator::Eigen { eta, v, v_inv } => {
                let c = v_inv * u0;
                times
                    .iter()
                    .map(|&t| {
                        if t == 0.0 {
                            u0.clone()
                        } else {
                            v * DVector::from_fn(c.len(), |i, _| c[i] * (eta[i] * t).exp())
                        }
                    })
                    .collect()
            }
            ModePropagator::Exponential { .. } => times.iter().map(|&t| self.propagate(u0, t)).collect(),
        }
    }
}

pub fn propagate_mode(sys: &RelaxationSystem, xi: f64, u0: &DVector<Complex64>, t: f64) -> DVector<Complex64> {
    ModePropagator::new(sys, xi).propagate(u0, t)
}

/// States of one mode at increasing times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModeTrajectory {
    pub xi: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
}

impl ModeTrajectory {
    /// Header `t,abs,abs_u1,…,abs_um`.
    pub fn to_csv(&self) -> String {
        let m = self.states.first().map_or(0, |s| s.len());
        let mut s = String::from("t,abs");
        for j in 1..=m {
            s.push_str(&format!(",abs_u{j}"));
        }
        s.push('\n');
        for (t, st) in self.times.iter().zip(&self.states) {
            let norm = st.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            s.push_str(&format!("{t:.16e},{norm:.16e}"));
            for z in st {
                s.push_str(&format!(",{:.16e}", z.norm()));
            }
            s.push('\n');
        }
        s
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidParams("times must be finite and nonnegative".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParams("times must be strictly increasing".into()));
    }
    Ok(())
}

pub fn trajectory(sys: &RelaxationSystem, xi: f64, u0: &DVector<Complex64>, times: &[f64]) -> Result<ModeTrajectory> {
    check_times(times)?;
    let states = ModePropagator::new(sys, xi).propagate_many(u0, times);
    Ok(ModeTrajectory { xi, times: times.to_vec(), states: states.into_iter().map(|v| v.iter().copied().collect()).collect() })
}

/// Seed used by [`pointwise_envelope_check`].
pub const ENVELOPE_SEED: u64 = 0x5eed;

/// Largest value of `|û(t)| e^{c λ(ξ) t}` over grid frequencies, random unit
/// initial states and the given times, with the fixed [`ENVELOPE_SEED`].
pub fn pointwise_envelope_check(
    sys: &RelaxationSystem,
    cert: &LyapunovCertificate,
    grid: &FrequencyGrid,
    n_samples: usize,
    times: &[f64],
) -> Result<f64> {
    pointwise_envelope_check_seeded(sys, cert, grid, n_samples, times, ENVELOPE_SEED)
}

/// [`pointwise_envelope_check`] with an explicit seed. Grid point `k` draws
/// its states from a stream seeded with `seed ^ k`.
pub fn pointwise_envelope_check_seeded(
    sys: &RelaxationSystem,
    cert: &LyapunovCertificate,
    grid: &FrequencyGrid,
    n_samples: usize,
    times: &[f64],
    seed: u64,
) -> Result<f64> {
    check_times(times)?;
    let m = sys.m;
    let per_xi: Vec<f64> = grid
        .points
        .par_iter()
        .enumerate()
        .map(|(k, &xi)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k as u64);
            let prop = ModePropagator::new(sys, xi);
            let lam = cert.lambda.eval(xi);
            let mut worst: f64 = 0.0;
            for _ in 0..n_samples {
                let mut u0 = DVector::from_fn(m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
                u0 /= Complex64::new(u0.norm(), 0.0);
                for (u, &t) in prop.propagate_many(&u0, times).iter().zip(times) {
                    worst = worst.max(u.norm() * (cert.c_rate * lam * t).exp());
                }
            }
            worst
        })
        .collect();
    Ok(per_xi.into_iter().fold(0.0, f64::max))
}

/// Shape of the initial data in frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataKind {
    /// `e^{−σ²ξ²/2}`.
    Gaussian { sigma: f64 },
    /// Indicator of `R_low ≤ |ξ| ≤ R_high`.
    Band { r_low: f64, r_high: f64 },
    /// One scalar profile value per grid point.
    Custom { samples: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDataSpec {
    #[serde(flatten)]
    pub kind: DataKind,
    /// Which components carry data, and how much.
    pub amplitude: Vec<f64>,
}

impl InitialDataSpec {
    pub fn gaussian(sigma: f64, amplitude: Vec<f64>) -> Self {
        InitialDataSpec { kind: DataKind::Gaussian { sigma }, amplitude }
    }

    pub fn band(r_low: f64, r_high: f64, amplitude: Vec<f64>) -> Self {
        InitialDataSpec { kind: DataKind::Band { r_low, r_high }, amplitude }
    }

    /// Unit amplitude on component `j` (1-based) of an `m`-vector.
    pub fn unit(m: usize, j: usize) -> Vec<f64> {
        let mut a = vec![0.0; m];
        a[j - 1] = 1.0;
        a
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude.is_empty() || self.amplitude.iter().all(|&a| a == 0.0) {
            return Err(Error::InvalidParams("amplitude must be a nonzero vector".into()));
        }
        match self.kind {
            DataKind::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidParams(format!("sigma = {sigma} must be positive")))
            }
            DataKind::Band { r_low, r_high } if !(r_low > 0.0 && r_high > r_low && r_high.is_finite()) => {
                Err(Error::InvalidParams(format!("band needs 0 < R_low < R_high, got ({r_low}, {r_high})")))
            }
            _ => Ok(()),
        }
    }

    /// Scalar profile at one frequency. Custom data are looked up by index.
    fn profile(&self, xi: f64, index: usize) -> f64 {
        match &self.kind {
            DataKind::Gaussian { sigma } => (-0.5 * sigma * sigma * xi * xi).exp(),
            DataKind::Band { r_low, r_high } => {
                if (*r_low..=*r_high).contains(&xi.abs()) {
                    1.0
                } else {
                    0.0
                }
            }
            DataKind::Custom { samples } => samples[index],
        }
    }
}

/// `û₀(ξ)` at every grid point.
pub fn synthesize_initial_data(spec: &InitialDataSpec, grid: &FrequencyGrid) -> Result<Vec<DVector<Complex64>>> {
    spec.validate()?;
    if let DataKind::Custom { samples } = &spec.kind {
        if samples.len() != grid.len() {
            return Err(Error::InvalidParams(format!("{} custom samples for {} grid points", samples.len(), grid.len())));
        }
    }
    Ok(grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let s = spec.profile(xi, i);
            DVector::from_iterator(spec.amplitude.len(), spec.amplitude.iter().map(|&a| Complex64::new(a * s, 0.0)))
        })
        .collect())
}

/// `‖∂ₓᵏu‖_{L²} = (∫₀^∞ ξ^{2k}|û|² dξ / π)^{1/2}`.
///
/// Trapezoid rule in `ln ξ` on the grid, plus the interval `[0, ξ_min]`
/// with `|û|` frozen at its first grid value, which contributes
/// `ξ_min^{2k+1}|û(ξ_min)|²/(2k+1)`.
pub fn sobolev_norm(u_hat: &[DVector<Complex64>], k: i32, grid: &FrequencyGrid) -> Result<f64> {
    if k < 0 {
        return Err(Error::InvalidParams(format!("derivative order k = {k} must be nonnegative")));
    }
    if u_hat.len() != grid.len() {
        return Err(Error::InvalidParams(format!("{} samples for {} grid points", u_hat.len(), grid.len())));
    }
    let f: Vec<f64> = grid.points.iter().zip(u_hat).map(|(&x, u)| x.powi(2 * k + 1) * u.norm_squared()).collect();
    let mut integral = 0.0;
    for i in 1..f.len() {
        integral += 0.5 * (f[i] + f[i - 1]) * (grid.points[i].ln() - grid.points[i - 1].ln());
    }
    let x0 = grid.points[0];
    integral += x0.powi(2 * k + 1) * u_hat[0].norm_squared() / (2 * k + 1) as f64;
    Ok((integral / std::f64::consts::PI).sqrt())
}

/// Sobolev norms of the evolved data at each time.
pub fn evolved_norms(
    sys: &RelaxationSystem,
    spec: &InitialDataSpec,
    k: i32,
    grid: &FrequencyGrid,
    times: &[f64],
) -> Result<Vec<f64>> {
    check_times(times)?;
    if spec.amplitude.len() != sys.m {
        return Err(Error::InvalidParams(format!("amplitude has {} entries, system has m = {}", spec.amplitude.len(), sys.m)));
    }
    let u0 = synthesize_initial_data(spec, grid)?;
    let states: Vec<Vec<DVector<Complex64>>> = grid
        .points
        .par_iter()
        .zip(&u0)
        .map(|(&xi, u)| {
            if u.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
                vec![u.clone(); times.len()]
            } else {
                ModePropagator::new(sys, xi).propagate_many(u, times)
            }
        })
        .collect();
    (0..times.len())
        .map(|j| {
            let at: Vec<DVector<Complex64>> = states.iter().map(|s| s[j].clone()).collect();
            sobolev_norm(&at, k, grid)
        })
        .collect()
}

/// Measured norms against the calibrated two-term bound.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub k: i32,
    pub ell: i32,
    pub times: Vec<f64>,
    pub measured_norm: Vec<f64>,
    pub bound: Vec<f64>,
    /// Exponents of the two bound terms.
    pub exponents: [f64; 2],
    /// Log-log slope over the last two decades of times; absent when a norm vanishes there.
    pub fitted_slope: Option<f64>,
    pub pass: bool,
    /// Whether `measured(t_{i+1}) ≤ measured(t_i)(1 + 1e−6)` for `t_i ≥ 10`.
    pub monotone_tail: bool,
}

impl DecayReport {
    /// Header `t,measured,bound,ratio`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,measured,bound,ratio\n");
        for ((t, m), b) in self.times.iter().zip(&self.measured_norm).zip(&self.bound) {
            let ratio = if *b > 0.0 { m / b } else { 0.0 };
            s.push_str(&format!("{t:.16e},{m:.16e},{b:.16e},{ratio:.16e}\n"));
        }
        s
    }
}

/// Exponents `(r₁, r₂)` of `(1+t)^{−r₁}` and `(1+t)^{−r₂}` in the decay bound.
pub fn decay_exponents(model: ModelTag, m: usize, k: i32, ell: i32) -> Result<[f64; 2]> {
    let lam = lambda_profile(model, m)?;
    let (k, ell, m) = (k as f64, ell as f64, m as f64);
    Ok(match model {
        ModelTag::ModelI => [(0.5 + k) / lam.p2 as f64, ell / 2.0],
        _ => [(0.5 + k) / lam.p2 as f64, ell / (m - 2.0)],
    })
}

/// Ordered log-spaced times on `[t_min, t_max]`.
pub fn log_times(t_min: f64, t_max: f64, count: usize) -> Result<Vec<f64>> {
    Ok(FrequencyGrid::log(t_min, t_max, count)?.points)
}

pub fn decay_report(
    sys: &RelaxationSystem,
    spec: &InitialDataSpec,
    k: i32,
    ell: i32,
    times: &[f64],
    grid: &FrequencyGrid,
) -> Result<DecayReport> {
    check_times(times)?;
    let exponents = decay_exponents(sys.model, sys.m, k, ell)?;
    let mut all = times.to_vec();
    let calib = match all.iter().position(|&t| t == 1.0) {
        Some(i) => i,
        None => {
            let i = all.partition_point(|&t| t < 1.0);
            all.insert(i, 1.0);
            i
        }
    };
    let norms = evolved_norms(sys, spec, k, grid, &all)?;
    let n1 = norms[calib];
    let coef = exponents.map(|r| n1 * 2f64.powf(r));
    let bound_at = |t: f64| coef[0] * (1.0 + t).powf(-exponents[0]) + coef[1] * (1.0 + t).powf(-exponents[1]);
    let measured: Vec<f64> = all.iter().zip(&norms).filter(|(t, _)| times.contains(t)).map(|(_, n)| *n).collect();
    let bound: Vec<f64> = times.iter().map(|&t| bound_at(t)).collect();
    let pass = times.iter().zip(&measured).zip(&bound).all(|((&t, &m), &b)| t < 1.0 || m <= b);
    let monotone_tail = times.windows(2).zip(measured.windows(2)).all(|(t, m)| t[0] < 10.0 || m[1] <= m[0] * (1.0 + 1e-6));
    let t_last = *times.last().unwrap_or(&0.0);
    let tail: Vec<(f64, f64)> =
        times.iter().zip(&measured).filter(|(&t, _)| t > 0.0 && t >= t_last / 100.0).map(|(&t, &m)| (t, m)).collect();
    let fitted_slope = if tail.len() >= 2 && tail.iter().all(|(_, m)| *m > 0.0) {
        let lx: Vec<f64> = tail.iter().map(|(t, _)| t.ln()).collect();
        let ly: Vec<f64> = tail.iter().map(|(_, m)| m.ln()).collect();
        Some(line_fit(&lx, &ly).0)
    } else {
        None
    };
    Ok(DecayReport { k, ell, times: times.to_vec(), measured_norm: measured, bound, exponents, fitted_slope, pass, monotone_tail })
}

/// First time the norm falls to `1/e` of its initial value, interpolated
/// linearly in `ln t` between samples. `times[0]` is the reference.
pub fn e_folding_time(times: &[f64], norms: &[f64]) -> Option<f64> {
    let target = norms.first()? / std::f64::consts::E;
    for i in 1..norms.len() {
        if norms[i] <= target {
            let (t0, t1) = (times[i - 1], times[i]);
            let (n0, n1) = (norms[i - 1].ln(), norms[i].ln());
            let s = (n0 - target.ln()) / (n0 - n1);
            if t0 <= 0.0 {
                return Some(t0 + s * (t1 - t0));
            }
            return Some((t0.ln() + s * (t1.ln() - t0.ln())).exp());
        }
    }
    None
}

/// E-folding time of the `L²` norm for band data on `[R, 2R]`.
pub fn band_e_folding(sys: &RelaxationSystem, r: f64, amplitude: Vec<f64>, grid: &FrequencyGrid, times: &[f64]) -> Result<Option<f64>> {
    let spec = InitialDataSpec::band(r, 2.0 * r, amplitude);
    let norms = evolved_norms(sys, &spec, 0, grid, times)?;
    Ok(e_folding_time(times, &norms))
}
