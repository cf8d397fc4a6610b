//! Frequency-wise Lyapunov matrices and the pointwise decay certificate.
//!
//! `W(ξ) = I + (W − I)(ξ)` is built from a compensator set. Along a Fourier
//! mode `û' = −Mû` with `M = (A⁰)⁻¹(iξA + L)` the energy `⟨Wû, û⟩` satisfies
//!
//! ```text
//! d/dt ⟨Wû, û⟩ = −2 ⟨Herm(WM) û, û⟩,
//! ```
//!
//! so `Herm(WM) ⪰ c λ(ξ) W` together with `c_equiv I ⪯ W ⪯ C_equiv I` gives
//! `|û(t)|² ≤ (C_equiv/c_equiv) e^{−2cλ(ξ)t} |û₀|²`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensator::{
    compensators_for, congruence_scale, tune_deltas_from, CompensatorSet, DeltaSchedule,
    DissipationForm, RationalWeight, STildeVariant, MARGIN_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_extremes, CMat};
use crate::spectral::{FrequencyGrid, GridDesign};
use crate::sysmodel::{build_model_one, build_model_two, ModelParamsI, ModelParamsII, ModelTag, RelaxationSystem};

/// Lower eigenvalue bound the halving loop of [`equivalence_bounds`] enforces.
pub const EQUIV_FLOOR: f64 = 0.5;
/// Maximum number of halvings of the outer constant.
pub const MAX_HALVINGS: usize = 20;
/// Steps of the per-frequency rate bisection.
pub const RATE_STEPS: usize = 64;
/// The bracket for the rate is grown by doubling from 1 up to this value.
pub const RATE_CAP: f64 = 1e6;

/// `λ(ξ) = ξ^{p2}/(1+ξ²)^q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaProfile {
    pub p2: i32,
    pub q: i32,
}

impl LambdaProfile {
    pub fn eval(&self, xi: f64) -> f64 {
        RationalWeight::new(self.p2, self.q).eval(xi)
    }
}

/// Rate profile of each model: `ξ^{2(m−3)}/(1+ξ²)^{m−2}` for the first and
/// `ξ^{3m−10}/(1+ξ²)^{2(m−3)}` for the second.
pub fn lambda_profile(model: ModelTag, m: usize) -> Result<LambdaProfile> {
    let mi = m as i32;
    match model {
        ModelTag::ModelI => Ok(LambdaProfile { p2: 2 * (mi - 3), q: mi - 2 }),
        ModelTag::ModelII => Ok(LambdaProfile { p2: 3 * mi - 10, q: 2 * (mi - 3) }),
        ModelTag::Custom => Err(Error::Unsupported("custom systems have no rate profile".into())),
    }
}

/// Model parameters as stored in a certificate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateParams {
    pub gamma: f64,
    pub a: Vec<f64>,
}

/// Everything needed to rebuild `W(ξ)` and evaluate the decay envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub model: ModelTag,
    pub m: usize,
    pub params: CertificateParams,
    pub deltas: Vec<f64>,
    pub ratio: f64,
    pub outer_delta: f64,
    pub s_tilde: STildeVariant,
    pub lambda: LambdaProfile,
    pub c_equiv: f64,
    #[serde(rename = "C_equiv")]
    pub c_equiv_upper: f64,
    pub c_rate: f64,
    /// Frequency that limits `c_rate`.
    pub rate_xi: f64,
    pub grid: GridDesign,
}

impl LyapunovCertificate {
    pub fn system(&self) -> Result<RelaxationSystem> {
        let (gamma, a) = (self.params.gamma, self.params.a.clone());
        match self.model {
            ModelTag::ModelI => build_model_one(&ModelParamsI { m: self.m, gamma, a }),
            ModelTag::ModelII => build_model_two(&ModelParamsII { m: self.m, gamma, a }),
            ModelTag::Custom => Err(Error::Unsupported("custom systems carry no certificate".into())),
        }
    }

    pub fn schedule(&self) -> DeltaSchedule {
        DeltaSchedule { ratio: self.ratio, deltas: self.deltas.clone(), outer: self.outer_delta }
    }

    pub fn compensators(&self, sys: &RelaxationSystem) -> Result<CompensatorSet> {
        Ok(compensators_for(sys, &self.schedule())?.with_s_tilde(self.s_tilde))
    }

    /// `(C_equiv/c_equiv) e^{−2 c_rate λ(ξ) t}`, the bound on `|û(t)|²/|û₀|²`.
    pub fn envelope(&self, xi: f64, t: f64) -> f64 {
        self.c_equiv_upper / self.c_equiv * (-2.0 * self.c_rate * self.lambda.eval(xi) * t).exp()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cert: Self = serde_json::from_str(s).map_err(|e| Error::InvalidParams(format!("certificate: {e}")))?;
        if !(cert.c_equiv > 0.0 && cert.c_equiv_upper >= cert.c_equiv && cert.c_rate > 0.0) {
            return Err(Error::InvalidParams("certificate constants must satisfy 0 < c_equiv ≤ C_equiv, c_rate > 0".into()));
        }
        if lambda_profile(cert.model, cert.m)? != cert.lambda {
            return Err(Error::InvalidParams("lambda profile does not match the model".into()));
        }
        Ok(cert)
    }
}

/// Energy bounds and dissipation margin at one frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMargin {
    pub xi: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Minimum eigenvalue of `Herm(WM) − c λ W`.
    pub d_margin: f64,
    /// The same matrix after congruence with the coercive weights; this is
    /// the quantity certification tests against `−MARGIN_TOL`.
    pub scaled_margin: f64,
}

/// Margins on a whole grid.
pub fn margins_csv(margins: &[EnergyMargin]) -> String {
    let mut s = String::from("xi,w_min,w_max,d_margin\n");
    for e in margins {
        s.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", e.xi, e.w_min, e.w_max, e.d_margin));
    }
    s
}

pub fn lyapunov_matrix(set: &CompensatorSet, outer: f64, xi: f64) -> CMat {
    let mut w = set.lyapunov_correction(xi, outer);
    for i in 0..set.m {
        w[(i, i)].re += 1.0;
    }
    w
}

/// Result of [`equivalence_bounds`], including the outer constant it settled on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceBounds {
    pub c_equiv: f64,
    pub c_equiv_upper: f64,
    pub outer: f64,
    pub halvings: usize,
}

fn w_extremes(set: &CompensatorSet, outer: f64, grid: &FrequencyGrid) -> (f64, f64, f64) {
    let ext: Vec<(f64, f64)> =
        grid.points.par_iter().map(|&xi| hermitian_extremes(&lyapunov_matrix(set, outer, xi))).collect();
    let mut lo = (f64::INFINITY, f64::NAN);
    let mut hi = f64::NEG_INFINITY;
    for (&xi, &(a, b)) in grid.points.iter().zip(&ext) {
        if a < lo.0 {
            lo = (a, xi);
        }
        hi = hi.max(b);
    }
    (lo.0, hi, lo.1)
}

/// Extreme eigenvalues of `W` over the grid, halving `outer` until the lower
/// one is at least [`EQUIV_FLOOR`].
pub fn equivalence_bounds(set: &CompensatorSet, outer: f64, grid: &FrequencyGrid) -> Result<EquivalenceBounds> {
    let mut outer = outer;
    let mut last = (f64::NAN, f64::NAN);
    for halvings in 0..=MAX_HALVINGS {
        let (lo, hi, at) = w_extremes(set, outer, grid);
        if lo >= EQUIV_FLOOR {
            return Ok(EquivalenceBounds { c_equiv: lo, c_equiv_upper: hi, outer, halvings });
        }
        last = (at, lo);
        outer *= 0.5;
    }
    Err(Error::Certification {
        stage: "equivalence_bounds",
        detail: format!("W stays below {EQUIV_FLOOR} after {MAX_HALVINGS} halvings"),
        worst_xi: last.0,
        margin: last.1,
    })
}

/// Pieces of the rate inequality at one frequency: the dissipation `Herm(WM)`,
/// `W` itself and the congruence weights.
struct RateData {
    xi: f64,
    lam: f64,
    d: CMat,
    w: CMat,
    scale: Vec<f64>,
}

impl RateData {
    fn new(sys: &RelaxationSystem, set: &CompensatorSet, outer: f64, profile: LambdaProfile, xi: f64) -> Self {
        RateData {
            xi,
            lam: profile.eval(xi),
            d: set.dissipation_form(sys, xi, outer, DissipationForm::Identity),
            w: lyapunov_matrix(set, outer, xi),
            scale: set.lambda_weights(xi),
        }
    }

    fn matrix(&self, c: f64) -> CMat {
        &self.d - &self.w * num_complex::Complex64::new(c * self.lam, 0.0)
    }

    fn scaled(&self, c: f64) -> f64 {
        hermitian_extremes(&congruence_scale(&self.matrix(c), &self.scale)).0
    }

    fn margin(&self, c: f64) -> EnergyMargin {
        let (w_min, w_max) = hermitian_extremes(&self.w);
        EnergyMargin {
            xi: self.xi,
            w_min,
            w_max,
            d_margin: hermitian_extremes(&self.matrix(c)).0,
            scaled_margin: self.scaled(c),
        }
    }

    /// Largest `c` with scaled margin `≥ −MARGIN_TOL`; `None` when even `c = 0` fails.
    fn best_rate(&self) -> Option<f64> {
        let ok = |c: f64| self.scaled(c) >= -MARGIN_TOL;
        if !ok(0.0) {
            return None;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while ok(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > RATE_CAP {
                return Some(lo);
            }
        }
        for _ in 0..RATE_STEPS {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    }
}

/// Energy margin at one frequency for a given rate.
pub fn dissipation_margin(
    sys: &RelaxationSystem,
    set: &CompensatorSet,
    outer: f64,
    xi: f64,
    c_rate: f64,
    profile: LambdaProfile,
) -> EnergyMargin {
    RateData::new(sys, set, outer, profile, xi).margin(c_rate)
}

pub fn dissipation_margins(
    sys: &RelaxationSystem,
    set: &CompensatorSet,
    outer: f64,
    grid: &FrequencyGrid,
    c_rate: f64,
    profile: LambdaProfile,
) -> Vec<EnergyMargin> {
    grid.points.par_iter().map(|&xi| dissipation_margin(sys, set, outer, xi, c_rate, profile)).collect()
}

/// Largest global rate and the frequency that limits it. A frequency where
/// the dissipation itself is not nonnegative is reported as a failure.
pub fn certified_rate(
    sys: &RelaxationSystem,
    set: &CompensatorSet,
    outer: f64,
    grid: &FrequencyGrid,
    profile: LambdaProfile,
) -> Result<(f64, f64)> {
    let rates: Vec<(f64, Option<f64>, f64)> = grid
        .points
        .par_iter()
        .map(|&xi| {
            let data = RateData::new(sys, set, outer, profile, xi);
            (xi, data.best_rate(), data.scaled(0.0))
        })
        .collect();
    if let Some(&(xi, _, m0)) = rates.iter().filter(|r| r.1.is_none()).min_by(|a, b| a.2.total_cmp(&b.2)) {
        return Err(Error::Certification {
            stage: "c_rate",
            detail: "dissipation is not nonnegative".into(),
            worst_xi: xi,
            margin: m0,
        });
    }
    let (xi, c) = rates
        .iter()
        .map(|&(xi, c, _)| (xi, c.expect("checked above")))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty grid");
    if !(c > 0.0) {
        return Err(Error::Certification { stage: "c_rate", detail: "rate bisection collapsed to 0".into(), worst_xi: xi, margin: 0.0 });
    }
    Ok((c, xi))
}

/// Tune the compensator schedule, fix the energy-equivalence constants and
/// find the global rate. Schedules that pass coercivity but whose full
/// dissipation admits no positive rate are skipped.
pub fn pointwise_certificate(sys: &RelaxationSystem, grid: &FrequencyGrid) -> Result<LyapunovCertificate> {
    let profile = lambda_profile(sys.model, sys.m)?;
    if sys.m < 6 {
        return Err(Error::Unsupported(format!("construction given for m≥6, got m={}", sys.m)));
    }
    let mut start = 0;
    let mut rate_failure = None;
    loop {
        let (k, sched, _) = match tune_deltas_from(sys, grid, start) {
            Ok(v) => v,
            Err(e) => return Err(rate_failure.unwrap_or(e)),
        };
        start = k + 1;
        let set = compensators_for(sys, &sched)?;
        let eq = equivalence_bounds(&set, sched.outer, grid)?;
        match certified_rate(sys, &set, eq.outer, grid, profile) {
            Ok((c_rate, rate_xi)) => {
                let params = CertificateParams { gamma: sys.gamma.unwrap_or(1.0), a: sys.couplings.clone() };
                return Ok(LyapunovCertificate {
                    model: sys.model,
                    m: sys.m,
                    params,
                    deltas: sched.deltas.clone(),
                    ratio: sched.ratio,
                    outer_delta: eq.outer,
                    s_tilde: set.s_tilde,
                    lambda: profile,
                    c_equiv: eq.c_equiv,
                    c_equiv_upper: eq.c_equiv_upper,
                    c_rate,
                    rate_xi,
                    grid: grid.design.clone(),
                });
            }
            Err(e) => rate_failure = Some(e),
        }
    }
}

/// Margins of a certificate on a grid, evaluated at its own rate.
pub fn certificate_margins(cert: &LyapunovCertificate, grid: &FrequencyGrid) -> Result<Vec<EnergyMargin>> {
    let sys = cert.system()?;
    let set = cert.compensators(&sys)?;
    Ok(dissipation_margins(&sys, &set, cert.outer_delta, grid, cert.c_rate, cert.lambda))
}
