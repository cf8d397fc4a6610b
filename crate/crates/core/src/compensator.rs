//! Frequency-weighted compensating matrices and the coercive dissipation
//! estimate they produce.
//!
//! For each model a constant symmetric matrix `𝒮` (first model) or a
//! ξ-dependent `𝒮′` (second model) and a skew matrix `𝒦_m(ξ)` / `𝒦′(ξ)` are
//! assembled from sparse pieces through short recursions. The Hermitian form
//!
//! ```text
//! H(ξ) = [L]^sy + c_S(ξ) [𝒮L]^sy + c_K(ξ) [𝒦A]^sy
//! ```
//!
//! must dominate a diagonal of component weights `Λ(ξ)` up to a constant;
//! that constant is what [`verify_coercivity`] measures. The second model is
//! checked on the complete dissipation of its energy identity instead, see
//! [`DissipationForm`].

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, hermitian_extremes, null_space, rows_of, skew_pair, sym, sym_pair, symmetric_min_pair, CMat, RMat,
};
use crate::spectral::{mode_matrix, FrequencyGrid};
use crate::sysmodel::{
    kernel_projections, ConditionId, ConditionReport, ModelParamsI, ModelParamsII, ModelTag, RelaxationSystem,
    Witness, CONDITION_TOL, KERNEL_TOL,
};

/// Tolerance on scaled coercivity margins.
pub const MARGIN_TOL: f64 = 1e-10;
/// Bracket and resolution of the coercivity-constant bisection.
pub const C_FLOOR: f64 = 1e-8;
pub const C_CEIL: f64 = 1.0;
pub const BISECTION_STEPS: usize = 40;
/// Smallest ratio tried by [`tune_deltas`] is `2^-MAX_RATIO_EXP`.
pub const MAX_RATIO_EXP: i32 = 20;

/// `ξ^xi_pow / (1+ξ²)^one_plus_xi2_pow`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalWeight {
    pub xi_pow: i32,
    pub one_plus_xi2_pow: i32,
}

impl RationalWeight {
    pub const fn new(xi_pow: i32, one_plus_xi2_pow: i32) -> Self {
        RationalWeight { xi_pow, one_plus_xi2_pow }
    }

    pub fn eval(&self, xi: f64) -> f64 {
        xi.powi(self.xi_pow) / (1.0 + xi * xi).powi(self.one_plus_xi2_pow)
    }
}

fn onep(xi: f64, k: i32) -> f64 {
    (1.0 + xi * xi).powi(k)
}

/// Constant pieces of the first model's construction.
#[derive(Clone, Debug)]
pub struct CompensatorPiecesI {
    pub m: usize,
    pub s1: RMat,
    pub s2: RMat,
    pub s3: RMat,
    pub s4: RMat,
    pub s_tilde: RMat,
    pub cal_s: RMat,
    pub k1: RMat,
    /// `K_4, K_5, …, K_m` in that order.
    pub k_chain: Vec<RMat>,
}

impl CompensatorPiecesI {
    /// `K_ℓ` for `4 ≤ ℓ ≤ m`.
    pub fn k(&self, l: usize) -> &RMat {
        &self.k_chain[l - 4]
    }
}

pub fn model1_pieces(p: &ModelParamsI) -> Result<CompensatorPiecesI> {
    p.validate()?;
    let m = p.m;
    let (a4, a5) = (p.a(4), p.a(5));
    let s1 = sym_pair(m, 1, 4, 1.0);
    let s2 = sym_pair(m, 2, 3, 1.0);
    let s3 = sym_pair(m, 2, 5, 1.0);
    let s_tilde = (&s1 * a5 + &s2 * (a4 * a5) + &s3 * (1.0 - a4 * a4)) * (-a5);
    let s4 = sym_pair(m, 2, 3, -a4);
    let cal_s = &s_tilde + &s4;
    let k1 = skew_pair(m, 1, 2, -1.0);
    let k_chain = (4..=m).map(|l| skew_pair(m, l - 1, l, p.a(l))).collect();
    Ok(CompensatorPiecesI { m, s1, s2, s3, s4, s_tilde, cal_s, k1, k_chain })
}

/// `𝒦_m(ξ)` through `𝒦_4 = δ₁K₁ + (1+ξ²)K₄`, `𝒦_ℓ = δ_{ℓ−3}ξ²𝒦_{ℓ−1} + (1+ξ²)^{ℓ−3}K_ℓ`.
pub fn model1_cal_k(pieces: &CompensatorPiecesI, deltas: &[f64], xi: f64) -> Result<RMat> {
    let m = pieces.m;
    if deltas.len() != m - 3 {
        return Err(Error::InvalidParams(format!("expected {} deltas, got {}", m - 3, deltas.len())));
    }
    let d = |j: usize| deltas[j - 1];
    let mut k = &pieces.k1 * d(1) + pieces.k(4) * onep(xi, 1);
    for l in 5..=m {
        k = k * (d(l - 3) * xi * xi) + pieces.k(l) * onep(xi, l as i32 - 3);
    }
    Ok(k)
}

/// Unrolled form of [`model1_cal_k`], used as an independent cross-check.
pub fn model1_cal_k_closed(pieces: &CompensatorPiecesI, deltas: &[f64], xi: f64) -> RMat {
    let m = pieces.m;
    let d = |j: usize| deltas[j - 1];
    let prod = |a: usize, b: usize| (a..=b).map(d).product::<f64>();
    let x2 = xi * xi;
    let mut k = (&pieces.k1 * d(1) + pieces.k(4) * onep(xi, 1)) * (prod(2, m - 3) * x2.powi(m as i32 - 4));
    k += pieces.k(m) * onep(xi, m as i32 - 3);
    for kk in 3..=m - 3 {
        k += pieces.k(kk + 2) * (prod(kk, m - 3) * x2.powi((m - kk - 2) as i32) * onep(xi, kk as i32 - 1));
    }
    k
}

/// Constant pieces of the second model's construction.
#[derive(Clone, Debug)]
pub struct CompensatorPiecesII {
    pub m: usize,
    pub k1: RMat,
    /// `K_4, K_6, …, K_m`.
    pub k_even: Vec<RMat>,
    /// `S_3, S_5, …, S_{m−1}`.
    pub s_odd: Vec<RMat>,
    /// `S̃_4, S̃_6, …, S̃_{m−2}`.
    pub s_tilde: Vec<RMat>,
    /// Product of the even couplings `a_4 a_6 ⋯ a_m`.
    pub alpha_m: f64,
    a: Vec<f64>,
}

impl CompensatorPiecesII {
    /// `K_ℓ` for even `4 ≤ ℓ ≤ m`.
    pub fn k(&self, l: usize) -> &RMat {
        &self.k_even[l / 2 - 2]
    }
    /// `S_ℓ` for odd `3 ≤ ℓ ≤ m−1`.
    pub fn s(&self, l: usize) -> &RMat {
        &self.s_odd[(l - 3) / 2]
    }
    /// `S̃_ℓ` for even `4 ≤ ℓ ≤ m−2`.
    pub fn s_tilde(&self, l: usize) -> &RMat {
        &self.s_tilde[l / 2 - 2]
    }
    fn a(&self, j: usize) -> f64 {
        self.a[j - 4]
    }
}

pub fn model2_pieces(p: &ModelParamsII) -> Result<CompensatorPiecesII> {
    p.validate()?;
    let m = p.m;
    if m < 6 {
        return Err(Error::Unsupported("construction given for m>=6".into()));
    }
    let k1 = skew_pair(m, 1, 2, 1.0);
    let k_even = (2..=m / 2).map(|k| skew_pair(m, 2 * k - 1, 2 * k, -p.a(2 * k))).collect();
    let mut s_odd = vec![sym_pair(m, 2, 3, 1.0)];
    s_odd.extend((3..=m / 2).map(|k| sym_pair(m, 2 * k - 2, 2 * k - 1, p.a(2 * k - 1))));
    let s_tilde = (2..m / 2).map(|k| sym_pair(m, 1, 2 * k, 1.0)).collect();
    let alpha_m = (2..=m / 2).map(|j| p.a(2 * j)).product();
    Ok(CompensatorPiecesII { m, k1, k_even, s_odd, s_tilde, alpha_m, a: p.a.clone() })
}

fn check_len(deltas: &[f64], want: usize) -> Result<()> {
    if deltas.len() != want {
        return Err(Error::InvalidParams(format!("expected {want} deltas, got {}", deltas.len())));
    }
    Ok(())
}

/// `𝒮̃_{m−2}` by `𝒮̃_4 = S̃_4`, `𝒮̃_{2ℓ} = a_{2ℓ}ξ𝒮̃_{2ℓ−2} + (a_5 a_7 ⋯ a_{2ℓ−1}) S̃_{2ℓ}`.
pub fn model2_s_tilde_rec(pc: &CompensatorPiecesII, xi: f64) -> RMat {
    let mut s = pc.s_tilde(4).clone();
    for l in 3..pc.m / 2 {
        let c: f64 = (2..l).map(|j| pc.a(2 * j + 1)).product();
        s = s * (pc.a(2 * l) * xi) + pc.s_tilde(2 * l) * c;
    }
    s
}

/// Unrolled `𝒮̃_{m−2}`. For `m = 6` the two boundary terms of the general
/// expansion both name `S̃_4`, so it is returned once.
pub fn model2_s_tilde_closed(pc: &CompensatorPiecesII, xi: f64) -> RMat {
    let m = pc.m;
    let h = m / 2;
    if m == 6 {
        return pc.s_tilde(4).clone();
    }
    let odd = |lo: usize, hi: usize| (lo..=hi).map(|j| pc.a(2 * j + 1)).product::<f64>();
    let even = |lo: usize, hi: usize| (lo..=hi).map(|j| pc.a(m - 2 * j)).product::<f64>();
    let mut s = pc.s_tilde(m - 2) * odd(2, h - 2) + pc.s_tilde(4) * (even(1, h - 3) * xi.powi(h as i32 - 3));
    for k in 2..=h.saturating_sub(3) {
        s += pc.s_tilde(m - 2 * k) * (odd(2, h - k - 1) * even(1, k - 1) * xi.powi(k as i32 - 1));
    }
    s
}

/// Coefficient row of `𝒰_m`, from `𝒰_4 = û_4` and
/// `𝒰_{2ℓ} = −iξ a_{2ℓ} 𝒰_{2ℓ−2} + (a_5 a_7 ⋯ a_{2ℓ−1}) û_{2ℓ}` for `3 ≤ ℓ ≤ m/2`.
pub fn model2_u_row(pc: &CompensatorPiecesII, xi: f64) -> Vec<Complex64> {
    let m = pc.m;
    let mut v = vec![Complex64::new(0.0, 0.0); m];
    v[3] = Complex64::new(1.0, 0.0);
    for l in 3..=m / 2 {
        let rot = Complex64::new(0.0, -xi * pc.a(2 * l));
        v.iter_mut().for_each(|z| *z *= rot);
        v[2 * l - 1] += (2..l).map(|j| pc.a(2 * j + 1)).product::<f64>();
    }
    v
}

/// Hermitian replacement for `𝒮̃_{m−2}` whose half-form is `−Re(i^{m/2} 𝒰_m ū₁)`.
///
/// The entries keep the powers of `−i` that the real form drops, and the
/// chain runs through `û_m`. With these phases the `û₁` cross terms from
/// `L` and from `iξA` cancel pairwise; only `û₂` and `û₃` couplings remain.
pub fn model2_s_tilde_phased(pc: &CompensatorPiecesII, xi: f64) -> CMat {
    let m = pc.m;
    let phase = -Complex64::new(0.0, 1.0).powi(m as i32 / 2);
    let v = model2_u_row(pc, xi);
    let mut x = CMat::zeros(m, m);
    for a in 1..m {
        x[(0, a)] = phase * v[a];
        x[(a, 0)] = (phase * v[a]).conj();
    }
    x
}

/// `𝒦_{m−4}` by `𝒦_0 = K_m`, `𝒦_ℓ = δ_{ℓ−1}δ_ℓ ξ² 𝒦_{ℓ−2} + (1+ξ²)^ℓ K_{m−ℓ}` (even `ℓ`).
fn model2_k_inner(pc: &CompensatorPiecesII, d: &dyn Fn(usize) -> f64, xi: f64) -> RMat {
    let m = pc.m;
    let mut k = pc.k(m).clone();
    for l in (2..=m - 4).step_by(2) {
        k = k * (d(l - 1) * d(l) * xi * xi) + pc.k(m - l) * onep(xi, l as i32);
    }
    k
}

/// `𝒮_{m−3}` by `𝒮_1 = S_{m−1}`, `𝒮_ℓ = δ_{ℓ−1}δ_ℓ ξ² 𝒮_{ℓ−2} + (1+ξ²)^{ℓ−1} S_{m−ℓ}` (odd `ℓ`).
fn model2_s_inner(pc: &CompensatorPiecesII, d: &dyn Fn(usize) -> f64, xi: f64) -> RMat {
    let m = pc.m;
    let mut s = pc.s(m - 1).clone();
    for l in (3..=m - 3).step_by(2) {
        s = s * (d(l - 1) * d(l) * xi * xi) + pc.s(m - l) * onep(xi, l as i32 - 1);
    }
    s
}

/// `𝒦′ = δ_{m−2}δ_{m−3}𝒦_{m−4} + (1+ξ²)^{m−3}K_1` via the recursions.
pub fn model2_cal_k(pc: &CompensatorPiecesII, deltas: &[f64], xi: f64) -> Result<RMat> {
    let m = pc.m;
    check_len(deltas, m - 1)?;
    let d = |j: usize| deltas[j - 1];
    Ok(model2_k_inner(pc, &d, xi) * (d(m - 2) * d(m - 3)) + &pc.k1 * onep(xi, m as i32 - 3))
}

/// `𝒮′ = δ_{m−2} α_m ξ^{m/2−2} 𝒮_{m−3} + (1+ξ²)^{m−4} 𝒮̃_{m−2}` via the recursions.
pub fn model2_cal_s(pc: &CompensatorPiecesII, deltas: &[f64], xi: f64) -> Result<RMat> {
    let m = pc.m;
    check_len(deltas, m - 1)?;
    let d = |j: usize| deltas[j - 1];
    let lead = d(m - 2) * pc.alpha_m * xi.powi(m as i32 / 2 - 2);
    Ok(model2_s_inner(pc, &d, xi) * lead + model2_s_tilde_rec(pc, xi) * onep(xi, m as i32 - 4))
}

/// `𝒮′` with the phased `𝒮̃` of [`model2_s_tilde_phased`].
pub fn model2_cal_s_phased(pc: &CompensatorPiecesII, deltas: &[f64], xi: f64) -> Result<CMat> {
    let m = pc.m;
    check_len(deltas, m - 1)?;
    let d = |j: usize| deltas[j - 1];
    let lead = d(m - 2) * pc.alpha_m * xi.powi(m as i32 / 2 - 2);
    let real = model2_s_inner(pc, &d, xi) * lead;
    Ok(linalg::to_complex(&real) + model2_s_tilde_phased(pc, xi) * Complex64::new(onep(xi, m as i32 - 4), 0.0))
}

/// Unrolled `𝒦′`.
pub fn model2_cal_k_closed(pc: &CompensatorPiecesII, deltas: &[f64], xi: f64) -> RMat {
    let m = pc.m;
    let d = |j: usize| deltas[j - 1];
    let lead = d(m - 2) * d(m - 3);
    let mut k = &pc.k1 * onep(xi, m as i32 - 3) + pc.k(4) * (lead * onep(xi, m as i32 - 4));
    for kk in 3..=m / 2 {
        let pr: f64 = (2..kk).map(|j| d(m - 2 * j) * d(m - 2 * j - 1)).product();
        k += pc.k(2 * kk) * (lead * pr * (xi * xi).powi(kk as i32 - 2) * onep(xi, (m - 2 * kk) as i32));
    }
    k
}

/// Unrolled `𝒮′`.
pub fn model2_cal_s_closed(pc: &CompensatorPiecesII, deltas: &[f64], xi: f64) -> RMat {
    let m = pc.m;
    let h = m as i32 / 2;
    let d = |j: usize| deltas[j - 1];
    let am = pc.alpha_m;
    let mut s = pc.s(3) * (d(m - 2) * am * xi.powi(h - 2) * onep(xi, m as i32 - 4));
    for kk in 3..=m / 2 {
        let pr: f64 = d(m - 2) * (2..kk).map(|j| d(m - 2 * j) * d(m - 2 * j + 1)).product::<f64>();
        s += pc.s(2 * kk - 1) * (am * pr * xi.powi(h + 2 * (kk as i32 - 3)) * onep(xi, (m - 2 * kk) as i32));
    }
    s + model2_s_tilde_closed(pc, xi) * onep(xi, m as i32 - 4)
}

/// Small constants of the construction. `outer` multiplies the whole
/// correction; it starts as the last entry of `deltas` and may be reduced on
/// its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaSchedule {
    pub ratio: f64,
    pub deltas: Vec<f64>,
    pub outer: f64,
}

impl DeltaSchedule {
    /// `δ_j = r^j` for `j = 1..=count`, outer equal to the last.
    pub fn geometric(r: f64, count: usize) -> Self {
        let deltas: Vec<f64> = (1..=count).map(|j| r.powi(j as i32)).collect();
        let outer = *deltas.last().expect("at least one delta");
        DeltaSchedule { ratio: r, deltas, outer }
    }

    /// Every δ set to the same value.
    pub fn constant(v: f64, count: usize) -> Self {
        DeltaSchedule { ratio: v, deltas: vec![v; count], outer: v }
    }

    pub fn with_outer(&self, outer: f64) -> Self {
        DeltaSchedule { outer, ..self.clone() }
    }
}

/// Number of δ's each model's construction uses.
pub fn delta_count(model: ModelTag, m: usize) -> Result<usize> {
    match model {
        ModelTag::ModelI => Ok(m - 3),
        ModelTag::ModelII if m >= 6 => Ok(m - 1),
        ModelTag::ModelII => Err(Error::Unsupported("construction given for m>=6".into())),
        ModelTag::Custom => Err(Error::Unsupported("compensators exist only for the two model families".into())),
    }
}

/// Which `𝒮̃_{m−2}` the second model's `𝒮′` is assembled from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum STildeVariant {
    /// Real recursion `a_{2ℓ}ξ𝒮̃_{2ℓ−2} + ⋯` stopping at `S̃_{m−2}`.
    Printed,
    /// Hermitian form of [`model2_s_tilde_phased`].
    Phased,
}

/// Which Hermitian form a coercivity check bounds from below.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DissipationForm {
    /// `[L]^sy + c_S [𝒮L]^sy + c_K [𝒦A]^sy`: only the terms without an odd power of `iξ`.
    Estimate,
    /// Every non-derivative term of the compensated energy identity,
    /// `[L]^sy + Herm((W − I)(A⁰)⁻¹(iξA + L))`.
    Identity,
}

#[derive(Clone, Debug)]
enum Pieces {
    One(CompensatorPiecesI),
    Two(CompensatorPiecesII),
}

/// Final weighted compensators of a model together with the δ-schedule.
///
/// `S(ξ) = w_S(ξ)·𝒮` and `K(ξ) = w_K(ξ)·𝒦(ξ)`; the δ-dependent multipliers
/// enter through [`CompensatorSet::dissipation_form`] and
/// [`CompensatorSet::lyapunov_correction`]. `S(ξ)` is returned as a complex
/// matrix because the phased variant is Hermitian rather than real.
#[derive(Clone, Debug)]
pub struct CompensatorSet {
    pub model: ModelTag,
    pub m: usize,
    pub deltas: DeltaSchedule,
    pub weight_s: RationalWeight,
    pub weight_k: RationalWeight,
    pub s_tilde: STildeVariant,
    pieces: Pieces,
}

pub fn model1_compensators(p: &ModelParamsI, deltas: &DeltaSchedule) -> Result<CompensatorSet> {
    let pieces = model1_pieces(p)?;
    check_len(&deltas.deltas, p.m - 3)?;
    let m = p.m as i32;
    Ok(CompensatorSet {
        model: ModelTag::ModelI,
        m: p.m,
        deltas: deltas.clone(),
        weight_s: RationalWeight::new(2 * (m - 4), m - 3),
        weight_k: RationalWeight::new(2, m - 2),
        s_tilde: STildeVariant::Printed,
        pieces: Pieces::One(pieces),
    })
}

/// Second-model set; uses the phased `𝒮̃` unless switched with
/// [`CompensatorSet::with_s_tilde`].
pub fn model2_compensators(p: &ModelParamsII, deltas: &DeltaSchedule) -> Result<CompensatorSet> {
    let pieces = model2_pieces(p)?;
    check_len(&deltas.deltas, p.m - 1)?;
    let m = p.m as i32;
    Ok(CompensatorSet {
        model: ModelTag::ModelII,
        m: p.m,
        deltas: deltas.clone(),
        weight_s: RationalWeight::new(3 * (m - 4) / 2, 2 * m - 7),
        weight_k: RationalWeight::new(2 * (m - 3), 2 * (m - 3)),
        s_tilde: STildeVariant::Phased,
        pieces: Pieces::Two(pieces),
    })
}

/// Build the compensator set matching a model system.
pub fn compensators_for(sys: &RelaxationSystem, deltas: &DeltaSchedule) -> Result<CompensatorSet> {
    match sys.model {
        ModelTag::ModelI => model1_compensators(&sys.params_one().expect("model system"), deltas),
        ModelTag::ModelII => model2_compensators(&sys.params_two().expect("model system"), deltas),
        ModelTag::Custom => Err(Error::Unsupported("compensators exist only for the two model families".into())),
    }
}

/// The form each model is certified with: the even-term estimate for the
/// first model, the full identity for the second (whose even-term estimate
/// carries an undominated `û₁` cross term near `ξ = 0`).
pub fn default_form(model: ModelTag) -> DissipationForm {
    match model {
        ModelTag::ModelII => DissipationForm::Identity,
        _ => DissipationForm::Estimate,
    }
}

impl CompensatorSet {
    pub fn pieces_one(&self) -> Option<&CompensatorPiecesI> {
        match &self.pieces {
            Pieces::One(p) => Some(p),
            Pieces::Two(_) => None,
        }
    }

    pub fn pieces_two(&self) -> Option<&CompensatorPiecesII> {
        match &self.pieces {
            Pieces::Two(p) => Some(p),
            Pieces::One(_) => None,
        }
    }

    /// Same set with a different `𝒮̃` variant; ignored for the first model.
    pub fn with_s_tilde(mut self, v: STildeVariant) -> Self {
        if self.model == ModelTag::ModelII {
            self.s_tilde = v;
        }
        self
    }

    pub fn with_deltas(&self, deltas: &DeltaSchedule) -> Result<Self> {
        check_len(&deltas.deltas, self.deltas.deltas.len())?;
        Ok(CompensatorSet { deltas: deltas.clone(), ..self.clone() })
    }

    fn d(&self, j: usize) -> f64 {
        self.deltas.deltas[j - 1]
    }

    /// `𝒮` (constant) for the first model, `𝒮′(ξ)` for the second.
    pub fn cal_s(&self, xi: f64) -> CMat {
        match &self.pieces {
            Pieces::One(p) => linalg::to_complex(&p.cal_s),
            Pieces::Two(p) => match self.s_tilde {
                STildeVariant::Printed => linalg::to_complex(
                    &model2_cal_s(p, &self.deltas.deltas, xi).expect("length checked at construction"),
                ),
                STildeVariant::Phased => {
                    model2_cal_s_phased(p, &self.deltas.deltas, xi).expect("length checked at construction")
                }
            },
        }
    }

    /// `𝒦_m(ξ)` for the first model, `𝒦′(ξ)` for the second.
    pub fn cal_k(&self, xi: f64) -> RMat {
        match &self.pieces {
            Pieces::One(p) => model1_cal_k(p, &self.deltas.deltas, xi).expect("length checked at construction"),
            Pieces::Two(p) => model2_cal_k(p, &self.deltas.deltas, xi).expect("length checked at construction"),
        }
    }

    pub fn s_of_xi(&self, xi: f64) -> CMat {
        self.cal_s(xi) * Complex64::new(self.weight_s.eval(xi), 0.0)
    }

    pub fn k_of_xi(&self, xi: f64) -> RMat {
        self.cal_k(xi) * self.weight_k.eval(xi)
    }

    /// Multipliers `(c_S, c_K)` of `[𝒮L]^sy` and `[𝒦A]^sy` for a given outer constant.
    pub fn form_coefficients(&self, xi: f64, outer: f64) -> (f64, f64) {
        match &self.pieces {
            Pieces::One(_) => {
                let c_s: f64 = (2..=self.m - 3).map(|j| self.d(j)).product();
                (outer * c_s * self.weight_s.eval(xi), outer * self.weight_k.eval(xi))
            }
            Pieces::Two(p) => (outer * self.weight_s.eval(xi), outer * p.alpha_m * self.weight_k.eval(xi)),
        }
    }

    /// The Hermitian form bounded below by a coercivity check.
    pub fn dissipation_form(&self, sys: &RelaxationSystem, xi: f64, outer: f64, form: DissipationForm) -> CMat {
        let l_sy = linalg::to_complex(&sym(&sys.l));
        match form {
            DissipationForm::Estimate => {
                let (cs, ck) = self.form_coefficients(xi, outer);
                let sl = linalg::herm(&(self.cal_s(xi) * linalg::to_complex(&sys.l)));
                let ka = linalg::to_complex(&sym(&(self.cal_k(xi) * &sys.a)));
                l_sy + sl * Complex64::new(cs, 0.0) + ka * Complex64::new(ck, 0.0)
            }
            DissipationForm::Identity => {
                let wm = self.lyapunov_correction(xi, outer) * mode_matrix(sys, xi);
                l_sy + linalg::herm(&wm)
            }
        }
    }

    /// Diagonal weights `Λ(ξ)` the dissipation form must dominate.
    pub fn lambda_weights(&self, xi: f64) -> Vec<f64> {
        coercive_weights(self.model, self.m, xi)
    }

    /// `W(ξ) − I`: Hermitian part from `𝒮`, `i`·skew part from `𝒦`.
    pub fn lyapunov_correction(&self, xi: f64, outer: f64) -> CMat {
        let m = self.m as i32;
        let (s_coef, k_coef) = match &self.pieces {
            Pieces::One(_) => {
                let c_s: f64 = (2..=self.m - 3).map(|j| self.d(j)).product();
                let base = outer / onep(xi, m - 2);
                (base * c_s * xi.powi(2 * (m - 4)) * onep(xi, 1), -base * xi)
            }
            Pieces::Two(p) => {
                let base = outer / onep(xi, 2 * (m - 3));
                (base * xi.powi(3 * m / 2 - 6) * onep(xi, 1), -base * p.alpha_m * xi.powi(2 * m - 7))
            }
        };
        self.cal_s(xi) * Complex64::new(s_coef, 0.0) + linalg::times_i(&(self.cal_k(xi) * k_coef))
    }

    /// Serialisable snapshot: constant pieces, weights and constants.
    pub fn to_doc(&self) -> CompensatorDoc {
        let mut pieces = BTreeMap::new();
        match &self.pieces {
            Pieces::One(p) => {
                for (name, x) in [
                    ("S1", &p.s1),
                    ("S2", &p.s2),
                    ("S3", &p.s3),
                    ("S4", &p.s4),
                    ("S_tilde", &p.s_tilde),
                    ("calS", &p.cal_s),
                    ("K1", &p.k1),
                ] {
                    pieces.insert(name.to_string(), rows_of(x));
                }
                for l in 4..=p.m {
                    pieces.insert(format!("K{l}"), rows_of(p.k(l)));
                }
            }
            Pieces::Two(p) => {
                pieces.insert("K1".into(), rows_of(&p.k1));
                for l in (4..=p.m).step_by(2) {
                    pieces.insert(format!("K{l}"), rows_of(p.k(l)));
                }
                for l in (3..p.m).step_by(2) {
                    pieces.insert(format!("S{l}"), rows_of(p.s(l)));
                }
                for l in (4..p.m - 1).step_by(2) {
                    pieces.insert(format!("S_tilde{l}"), rows_of(p.s_tilde(l)));
                }
            }
        }
        CompensatorDoc {
            model: self.model,
            m: self.m,
            deltas: self.deltas.deltas.clone(),
            ratio: self.deltas.ratio,
            outer: self.deltas.outer,
            weight_s: self.weight_s,
            weight_k: self.weight_k,
            s_tilde: self.s_tilde,
            pieces,
        }
    }
}

/// JSON form of a [`CompensatorSet`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompensatorDoc {
    pub model: ModelTag,
    pub m: usize,
    pub deltas: Vec<f64>,
    pub ratio: f64,
    pub outer: f64,
    pub weight_s: RationalWeight,
    pub weight_k: RationalWeight,
    pub s_tilde: STildeVariant,
    pub pieces: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Component weights of the coercive estimate.
///
/// First model: `ξ^{2(m−4)}/(1+ξ²)^{m−3}` on `u₁`, `ξ^{2(m−3)}/(1+ξ²)^{m−2}` on
/// `u₂`, `(ξ²/(1+ξ²))^{m−j}` on `u_j`, `j ≥ 3`. Second model: `ξ^{2(m−3)}/(1+ξ²)^{m−3}`
/// on `u₁`, `1` on `u₂`, and for `j = 2..m/2` the pair
/// `ξ^{2(m+j−6)}/(1+ξ²)^{m+2j−7}` on `u_{2j−1}`, `ξ^{2(m+j−5)}/(1+ξ²)^{m+2j−6}` on `u_{2j}`.
pub fn coercive_weights(model: ModelTag, m: usize, xi: f64) -> Vec<f64> {
    let mi = m as i32;
    let w = |p: i32, q: i32| RationalWeight::new(p, q).eval(xi);
    match model {
        ModelTag::ModelI => {
            let mut v = vec![w(2 * (mi - 4), mi - 3), w(2 * (mi - 3), mi - 2)];
            v.extend((3..=mi).map(|j| w(2 * (mi - j), mi - j)));
            v
        }
        ModelTag::ModelII => {
            let mut v = vec![0.0; m];
            v[0] = w(2 * (mi - 3), mi - 3);
            v[1] = 1.0;
            for j in 2..=mi / 2 {
                v[(2 * j - 2) as usize] = w(2 * (mi + j - 6), mi + 2 * j - 7);
                v[(2 * j - 1) as usize] = w(2 * (mi + j - 5), mi + 2 * j - 6);
            }
            v
        }
        ModelTag::Custom => vec![1.0; m],
    }
}

/// `D^{-1/2} X D^{-1/2}` for a positive diagonal `D`.
pub fn congruence_scale(x: &CMat, d: &[f64]) -> CMat {
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    CMat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] * (s[i] * s[j]))
}

/// Per-frequency coercivity margins and the constant they certify.
///
/// Margins are minimum eigenvalues of `Λ^{-1/2} H Λ^{-1/2} − c_found·I`. By
/// Sylvester's law these have the sign of those of `H − c_found·Λ`, but they
/// stay well scaled where the weights span many decades.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub form: DissipationForm,
    pub xi: Vec<f64>,
    pub margin: Vec<f64>,
    pub c_found: f64,
    pub failures: Vec<f64>,
    /// Smallest scaled eigenvalue over the grid and where it occurs.
    pub min_scaled: f64,
    pub worst_xi: f64,
}

impl CoercivityReport {
    pub fn success(&self) -> bool {
        self.c_found > 0.0 && self.failures.is_empty()
    }

    /// `xi,margin` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi,margin\n");
        for (x, m) in self.xi.iter().zip(&self.margin) {
            s.push_str(&format!("{x:.16e},{m:.16e}\n"));
        }
        s
    }
}

/// Smallest eigenvalue of the scaled form at each grid point.
pub fn scaled_coercivity(
    sys: &RelaxationSystem,
    set: &CompensatorSet,
    outer: f64,
    form: DissipationForm,
    grid: &FrequencyGrid,
) -> Vec<f64> {
    grid.points
        .par_iter()
        .map(|&xi| {
            let h = set.dissipation_form(sys, xi, outer, form);
            hermitian_extremes(&congruence_scale(&h, &set.lambda_weights(xi))).0
        })
        .collect()
}

/// Largest `c ∈ [C_FLOOR, C_CEIL]` (by bisection) with every scaled margin
/// `≥ −MARGIN_TOL`, using the model's default form and the schedule's outer
/// constant. Infeasible floors give `c_found = 0` and a populated failure list.
pub fn verify_coercivity(sys: &RelaxationSystem, set: &CompensatorSet, grid: &FrequencyGrid) -> CoercivityReport {
    verify_coercivity_with(sys, set, set.deltas.outer, default_form(set.model), grid)
}

pub fn verify_coercivity_with(
    sys: &RelaxationSystem,
    set: &CompensatorSet,
    outer: f64,
    form: DissipationForm,
    grid: &FrequencyGrid,
) -> CoercivityReport {
    let mu = scaled_coercivity(sys, set, outer, form, grid);
    coercivity_from_scaled(form, grid, &mu)
}

/// Bisection for the coercivity constant given the scaled minimum eigenvalue
/// at each grid point.
pub fn coercivity_from_scaled(form: DissipationForm, grid: &FrequencyGrid, mu: &[f64]) -> CoercivityReport {
    let (k, &min_scaled) = mu.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty grid");
    let feasible = |c: f64| min_scaled - c >= -MARGIN_TOL;
    let c_found = if !feasible(C_FLOOR) {
        0.0
    } else if feasible(C_CEIL) {
        C_CEIL
    } else {
        let (mut lo, mut hi) = (C_FLOOR, C_CEIL);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let c_ref = if c_found > 0.0 { c_found } else { C_FLOOR };
    let failures = grid.points.iter().zip(mu).filter(|(_, &v)| v - c_ref < -MARGIN_TOL).map(|(&x, _)| x).collect();
    CoercivityReport {
        form,
        xi: grid.points.clone(),
        margin: mu.iter().map(|v| v - c_found).collect(),
        c_found,
        failures,
        min_scaled,
        worst_xi: grid.points[k],
    }
}

/// Ratio ladder of [`tune_deltas`]: `r_k = 2^{-k/4}` down to `2^-MAX_RATIO_EXP`.
pub fn ratio_ladder() -> impl Iterator<Item = f64> {
    (1..=4 * MAX_RATIO_EXP).map(|k| 2f64.powf(-(k as f64) / 4.0))
}

/// Reductions `4^{-i}` of the outer constant tried at each ratio.
pub const OUTER_STEPS: i32 = 8;

/// Every schedule [`tune_deltas`] tries, in order.
pub fn schedule_ladder(count: usize) -> impl Iterator<Item = DeltaSchedule> {
    ratio_ladder().flat_map(move |r| {
        let base = DeltaSchedule::geometric(r, count);
        (0..=OUTER_STEPS).map(move |i| base.with_outer(base.outer * 4f64.powi(-i)))
    })
}

/// Deterministic search over `δ_j = r^j` with `r` descending along
/// [`ratio_ladder`]; at each `r` the outer constant is reduced from `δ_last`
/// by factors of 4 up to [`OUTER_STEPS`] times. The first schedule whose
/// coercivity check succeeds is returned.
pub fn tune_deltas(sys: &RelaxationSystem, grid: &FrequencyGrid) -> Result<(DeltaSchedule, CoercivityReport)> {
    tune_deltas_from(sys, grid, 0).map(|(_, s, r)| (s, r))
}

/// As [`tune_deltas`], skipping the first `start` entries of
/// [`schedule_ladder`]; also returns the position of the success so a caller
/// can resume past it.
pub fn tune_deltas_from(
    sys: &RelaxationSystem,
    grid: &FrequencyGrid,
    start: usize,
) -> Result<(usize, DeltaSchedule, CoercivityReport)> {
    let count = delta_count(sys.model, sys.m)?;
    let set = compensators_for(sys, &DeltaSchedule::geometric(0.5, count))?;
    let mut worst = (f64::NAN, f64::NEG_INFINITY);
    for (k, sched) in schedule_ladder(count).enumerate().skip(start) {
        let rep = verify_coercivity(sys, &set.with_deltas(&sched)?, grid);
        if rep.success() {
            return Ok((k, sched, rep));
        }
        if rep.min_scaled > worst.1 {
            worst = (rep.worst_xi, rep.min_scaled);
        }
    }
    Err(Error::Certification {
        stage: "tune_deltas",
        detail: format!("no ratio down to 2^-{MAX_RATIO_EXP} gives a coercive form"),
        worst_xi: worst.0,
        margin: worst.1,
    })
}

/// Condition (K) for a one-dimensional system: `K A⁰` skew and `[KA]^sy`
/// positive definite on `ker L`.
pub fn check_condition_k(sys: &RelaxationSystem, k: &RMat) -> ConditionReport {
    let mut w = Vec::new();
    let ka0 = k * &sys.a0;
    w.push(Witness { description: "K A0 skew-symmetric (max |X_ij + X_ji|)".into(), margin: -linalg::skew_defect(&ka0) });
    let q = null_space(&sys.l, KERNEL_TOL);
    let mut cex = None;
    if q.ncols() == 0 {
        w.push(Witness { description: "ker L nontrivial".into(), margin: -1.0 });
    } else {
        let restricted = q.transpose() * sym(&(k * &sys.a)) * &q;
        let (lo, v) = symmetric_min_pair(&restricted);
        w.push(Witness { description: "[KA]^sy positive definite on ker L (min eigenvalue)".into(), margin: lo });
        // Strict positivity: a zero eigenvalue is a failure.
        if lo <= CONDITION_TOL {
            let z = &q * v;
            cex = Some(z.iter().map(|&x| Complex64::new(x, 0.0)).collect());
            w.push(Witness { description: "strict positivity on ker L".into(), margin: -1.0 });
        }
    }
    ConditionReport::finish(ConditionId::K, w, cex)
}

/// Condition (S): `S A⁰` symmetric, `[SL]^sy + [L]^sy ⪰ 0` with kernel equal
/// to `ker L`, and `i[SA]^asy ⪰ 0` on `ker [L]^sy`.
pub fn check_condition_s(sys: &RelaxationSystem, s: &RMat) -> ConditionReport {
    let mut w = Vec::new();
    let mut cex = None;
    let (d, _, _) = linalg::asymmetry(&(s * &sys.a0));
    w.push(Witness { description: "S A0 symmetric (max |X_ij - X_ji|)".into(), margin: -d });

    let form = sym(&(s * &sys.l)) + sym(&sys.l);
    let (lo, v) = symmetric_min_pair(&form);
    w.push(Witness { description: "[SL]^sy + [L]^sy nonnegative (min eigenvalue)".into(), margin: lo });
    if lo < -CONDITION_TOL {
        cex = Some(v.iter().map(|&x| Complex64::new(x, 0.0)).collect());
    }
    let proj = kernel_projections(sys);
    let pk = linalg::projector(&null_space(&form, KERNEL_TOL));
    let gap = (&pk - &proj.p).abs().max();
    w.push(Witness { description: "kernel of [SL]^sy + [L]^sy equals ker L (projector distance)".into(), margin: -gap });
    if gap > CONDITION_TOL && cex.is_none() {
        // A vector in one kernel but not the other.
        let diff = &pk - &proj.p;
        let (_, v) = symmetric_min_pair(&(-(&diff * diff.transpose())));
        cex = Some(v.iter().map(|&x| Complex64::new(x, 0.0)).collect());
    }

    let q1 = null_space(&sym(&sys.l), KERNEL_TOL);
    if q1.ncols() > 0 {
        let skew = linalg::asym(&(s * &sys.a));
        let herm = linalg::times_i(&skew);
        let qc = linalg::to_complex(&q1);
        let restricted = qc.adjoint() * herm * &qc;
        let (lo, v) = linalg::hermitian_min_pair(&restricted);
        w.push(Witness { description: "i[SA]^asy nonnegative on ker [L]^sy (min eigenvalue)".into(), margin: lo });
        if lo < -CONDITION_TOL && cex.is_none() {
            cex = Some((&qc * v).iter().cloned().collect());
        }
    }
    ConditionReport::finish(ConditionId::S, w, cex)
}
