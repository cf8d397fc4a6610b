//! Coefficient matrices of the two relaxation models and the structural
//! conditions a symmetric hyperbolic system with relaxation must satisfy.
//!
//! Both models are of the form `A⁰u_t + Au_x + Lu = 0` with `A⁰ = I`, `A`
//! symmetric tridiagonal-like couplings and `L` a sparse relaxation matrix
//! whose symmetric part carries a single damping entry `γ`. All indices in
//! documentation and reports are 1-based (`u₁..u_m`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, null_space, projector, sym, symmetric_min_pair, RMat};

/// Relative singular-value threshold used for all kernel computations.
pub const KERNEL_TOL: f64 = 1e-10;
/// Tolerance on margins of structural conditions.
pub const CONDITION_TOL: f64 = 1e-12;

/// Which family a system belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelTag {
    #[serde(rename = "model1")]
    ModelI,
    #[serde(rename = "model2")]
    ModelII,
    #[serde(rename = "custom")]
    Custom,
}

/// Parameters of the first model: even `m ≥ 6`, damping `γ > 0`, couplings
/// `a_4..a_m` (stored in that order, so `a[0]` is `a_4`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParamsI {
    pub m: usize,
    pub gamma: f64,
    pub a: Vec<f64>,
}

/// Parameters of the second model: even `m ≥ 4`, `γ > 0`, couplings `a_4..a_m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParamsII {
    pub m: usize,
    pub gamma: f64,
    pub a: Vec<f64>,
}

fn check_common(m: usize, min_m: usize, gamma: f64, a: &[f64]) -> Result<()> {
    if !m.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!("m = {m} must be even")));
    }
    if m < min_m {
        return Err(Error::InvalidParams(format!("m = {m} must be at least {min_m}")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParams(format!("gamma = {gamma} must be positive")));
    }
    if a.len() != m - 3 {
        return Err(Error::InvalidParams(format!(
            "expected {} couplings a_4..a_{m}, got {}",
            m - 3,
            a.len()
        )));
    }
    if let Some(k) = a.iter().position(|&v| v == 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParams(format!("coupling a_{} = {} must be finite and nonzero", k + 4, a[k])));
    }
    Ok(())
}

impl ModelParamsI {
    /// Unit couplings and unit damping.
    pub fn defaults(m: usize) -> Self {
        ModelParamsI { m, gamma: 1.0, a: vec![1.0; m.saturating_sub(3)] }
    }

    pub fn validate(&self) -> Result<()> {
        check_common(self.m, 6, self.gamma, &self.a)
    }

    /// Coupling `a_j` for `4 ≤ j ≤ m`.
    pub fn a(&self, j: usize) -> f64 {
        self.a[j - 4]
    }
}

impl ModelParamsII {
    pub fn defaults(m: usize) -> Self {
        ModelParamsII { m, gamma: 1.0, a: vec![1.0; m.saturating_sub(3)] }
    }

    pub fn validate(&self) -> Result<()> {
        check_common(self.m, 4, self.gamma, &self.a)
    }

    /// Coupling `a_j` for `4 ≤ j ≤ m`.
    pub fn a(&self, j: usize) -> f64 {
        self.a[j - 4]
    }
}

/// The triple `(A⁰, A, L)` together with its provenance.
#[derive(Clone, Debug)]
pub struct RelaxationSystem {
    pub m: usize,
    pub a0: RMat,
    pub a: RMat,
    pub l: RMat,
    pub model: ModelTag,
    pub gamma: Option<f64>,
    pub couplings: Vec<f64>,
}

impl RelaxationSystem {
    /// Validate and wrap user-supplied matrices.
    pub fn new(a0: RMat, a: RMat, l: RMat, model: ModelTag) -> Result<Self> {
        let m = a.nrows();
        for (name, x) in [("A0", &a0), ("A", &a), ("L", &l)] {
            if x.nrows() != m || x.ncols() != m {
                return Err(Error::InvalidSystem(format!("{name} must be {m}x{m}")));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSystem(format!("{name} has non-finite entries")));
            }
        }
        let sys = RelaxationSystem { m, a0, a, l, model, gamma: None, couplings: Vec::new() };
        sys.validate()?;
        Ok(sys)
    }

    /// Check the standing assumptions: `A⁰` SPD, `A` exactly symmetric,
    /// `[L]^sy ⪰ 0` and `1 ≤ dim ker L ≤ m − 1`.
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidSystem("empty system".into()));
        }
        let (d, i, j) = linalg::asymmetry(&self.a0);
        if d > 0.0 {
            return Err(Error::InvalidSystem(format!("A0 not symmetric at ({}, {})", i + 1, j + 1)));
        }
        if self.a0.clone().cholesky().is_none() {
            return Err(Error::InvalidSystem("A0 is not positive definite".into()));
        }
        let (d, i, j) = linalg::asymmetry(&self.a);
        if d > 0.0 {
            return Err(Error::InvalidSystem(format!("A not symmetric at ({}, {})", i + 1, j + 1)));
        }
        let (lmin, _) = symmetric_min_pair(&sym(&self.l));
        if lmin < -CONDITION_TOL {
            return Err(Error::InvalidSystem(format!("symmetric part of L has eigenvalue {lmin:e} < 0")));
        }
        let k = self.kernel_dim();
        if k == 0 || k >= self.m {
            return Err(Error::InvalidSystem(format!(
                "dim ker L = {k}, expected between 1 and {}",
                self.m - 1
            )));
        }
        Ok(())
    }

    /// Dimension of `ker L` by singular-value thresholding.
    pub fn kernel_dim(&self) -> usize {
        if self.l.iter().all(|&v| v == 0.0) {
            return self.m;
        }
        null_space(&self.l, KERNEL_TOL).ncols()
    }

    /// Damping constant, if the system came from one of the models.
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// Serialisable view of the system.
    pub fn to_doc(&self) -> SystemDoc {
        SystemDoc {
            model: self.model,
            m: self.m,
            gamma: self.gamma,
            a: self.couplings.clone(),
            a0_rows: linalg::rows_of(&self.a0),
            a_rows: linalg::rows_of(&self.a),
            l_rows: linalg::rows_of(&self.l),
        }
    }

    /// Rebuild a system from its document. Model systems are regenerated from
    /// their parameters and must agree with the stored matrices.
    pub fn from_doc(doc: &SystemDoc) -> Result<Self> {
        let parse = |name: &str, rows: &[Vec<f64>]| {
            linalg::from_rows(rows).ok_or_else(|| Error::InvalidSystem(format!("{name} must be a square list of rows")))
        };
        let a0 = parse("A0", &doc.a0_rows)?;
        let a = parse("A", &doc.a_rows)?;
        let l = parse("L", &doc.l_rows)?;
        if a0.nrows() != doc.m {
            return Err(Error::InvalidSystem(format!("m = {} does not match matrix size {}", doc.m, a0.nrows())));
        }
        let mut sys = RelaxationSystem::new(a0, a, l, doc.model)?;
        sys.gamma = doc.gamma;
        sys.couplings = doc.a.clone();
        if doc.model != ModelTag::Custom {
            let gamma = doc.gamma.ok_or_else(|| Error::InvalidSystem("model systems need gamma".into()))?;
            let rebuilt = match doc.model {
                ModelTag::ModelI => build_model_one(&ModelParamsI { m: doc.m, gamma, a: doc.a.clone() })?,
                _ => build_model_two(&ModelParamsII { m: doc.m, gamma, a: doc.a.clone() })?,
            };
            if rebuilt.a != sys.a || rebuilt.l != sys.l || rebuilt.a0 != sys.a0 {
                return Err(Error::InvalidSystem("stored matrices differ from the model built from the parameters".into()));
            }
        }
        Ok(sys)
    }

    pub fn params_one(&self) -> Option<ModelParamsI> {
        (self.model == ModelTag::ModelI).then(|| ModelParamsI { m: self.m, gamma: self.gamma.unwrap_or(1.0), a: self.couplings.clone() })
    }

    pub fn params_two(&self) -> Option<ModelParamsII> {
        (self.model == ModelTag::ModelII).then(|| ModelParamsII { m: self.m, gamma: self.gamma.unwrap_or(1.0), a: self.couplings.clone() })
    }
}

/// JSON interchange form: `{model, m, gamma, a, A0, A, L}` with row-major matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemDoc {
    pub model: ModelTag,
    pub m: usize,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(rename = "A0")]
    pub a0_rows: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a_rows: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l_rows: Vec<Vec<f64>>,
}

/// First model: Timoshenko-type chain closed by a heat-conduction-like damped tail.
pub fn build_model_one(p: &ModelParamsI) -> Result<RelaxationSystem> {
    p.validate()?;
    let m = p.m;
    let mut a = RMat::zeros(m, m);
    let mut set = |i: usize, j: usize, v: f64| {
        a[(i - 1, j - 1)] = v;
        a[(j - 1, i - 1)] = v;
    };
    set(1, 2, 1.0);
    set(3, 4, p.a(4));
    for j in 4..m {
        set(j, j + 1, p.a(j + 1));
    }
    let mut l = RMat::zeros(m, m);
    l[(0, 3)] = 1.0;
    l[(3, 0)] = -1.0;
    l[(m - 1, m - 1)] = p.gamma;
    Ok(RelaxationSystem {
        m,
        a0: RMat::identity(m, m),
        a,
        l,
        model: ModelTag::ModelI,
        gamma: Some(p.gamma),
        couplings: p.a.clone(),
    })
}

/// Second model: pairs `(u_{2j−1}, u_{2j})` coupled by `A`, consecutive pairs
/// linked through skew entries of `L`, damping on `u₂`.
pub fn build_model_two(p: &ModelParamsII) -> Result<RelaxationSystem> {
    p.validate()?;
    let m = p.m;
    let n = m / 2;
    let mut a = RMat::zeros(m, m);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = 1.0;
    for j in 2..=n {
        let v = p.a(2 * j);
        a[(2 * j - 2, 2 * j - 1)] = v;
        a[(2 * j - 1, 2 * j - 2)] = v;
    }
    let mut l = RMat::zeros(m, m);
    l[(1, 1)] = p.gamma;
    l[(1, 2)] = 1.0;
    l[(2, 1)] = -1.0;
    for j in 2..n {
        let v = p.a(2 * j + 1);
        l[(2 * j - 1, 2 * j)] = v;
        l[(2 * j, 2 * j - 1)] = -v;
    }
    Ok(RelaxationSystem {
        m,
        a0: RMat::identity(m, m),
        a,
        l,
        model: ModelTag::ModelII,
        gamma: Some(p.gamma),
        couplings: p.a.clone(),
    })
}

/// Split a square matrix into symmetric and skew-symmetric parts.
pub fn decompose_sym_asym(x: &RMat) -> (RMat, RMat) {
    linalg::sym_asym(x)
}

/// Orthogonal projections onto `ker L` and `ker [L]^sy`.
#[derive(Clone, Debug)]
pub struct Projections {
    pub p: RMat,
    pub p1: RMat,
}

pub fn kernel_projections(sys: &RelaxationSystem) -> Projections {
    let p = projector(&null_space(&sys.l, KERNEL_TOL));
    let p1 = projector(&null_space(&sym(&sys.l), KERNEL_TOL));
    Projections { p, p1 }
}

/// Structural condition identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionId {
    A0,
    A,
    K,
    S,
}

/// One clause of a condition with its signed margin (negative means violated).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Witness {
    pub description: String,
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition_id: ConditionId,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
    pub counterexample: Option<Vec<Complex64>>,
}

impl ConditionReport {
    pub(crate) fn finish(condition_id: ConditionId, witnesses: Vec<Witness>, counterexample: Option<Vec<Complex64>>) -> Self {
        let passed = witnesses.iter().all(|w| w.margin >= -CONDITION_TOL);
        ConditionReport { condition_id, passed, witnesses, counterexample: if passed { None } else { counterexample } }
    }
}

/// Vector `(e_i + i e_j)/√2`: for real `X` the form `⟨Xz, z⟩` has imaginary
/// part `(X_ji − X_ij)/2`, so it exposes an asymmetric pair.
fn asymmetry_probe(m: usize, i: usize, j: usize) -> Vec<Complex64> {
    let mut z = vec![Complex64::new(0.0, 0.0); m];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    z[i] = Complex64::new(s, 0.0);
    z[j] = Complex64::new(0.0, s);
    z
}

fn real_vec(v: &nalgebra::DVector<f64>) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

/// Clauses shared by the two "(A)" conditions; `strict_l` additionally demands
/// a symmetric `L`.
fn condition_a_family(sys: &RelaxationSystem, strict_l: bool) -> (Vec<Witness>, Option<Vec<Complex64>>) {
    let mut w = Vec::new();
    let mut cex = None;
    let (a0min, a0vec) = symmetric_min_pair(&sym(&sys.a0));
    let (a0asym, _, _) = linalg::asymmetry(&sys.a0);
    w.push(Witness { description: "A0 symmetric (max |A0_ij - A0_ji|)".into(), margin: -a0asym });
    w.push(Witness { description: "A0 positive definite (min eigenvalue)".into(), margin: a0min });
    if a0min < -CONDITION_TOL {
        cex.get_or_insert_with(|| real_vec(&a0vec));
    }
    let (d, i, j) = linalg::asymmetry(&sys.a);
    w.push(Witness { description: format!("A symmetric (worst entry ({}, {}))", i + 1, j + 1), margin: -d });
    if d > CONDITION_TOL {
        cex.get_or_insert_with(|| asymmetry_probe(sys.m, i, j));
    }
    if strict_l {
        let (d, i, j) = linalg::asymmetry(&sys.l);
        w.push(Witness { description: format!("L symmetric (worst entry ({}, {}))", i + 1, j + 1), margin: -d });
        if d > CONDITION_TOL {
            cex.get_or_insert_with(|| asymmetry_probe(sys.m, i, j));
        }
    }
    let (lmin, lvec) = symmetric_min_pair(&sym(&sys.l));
    w.push(Witness { description: "symmetric part of L nonnegative (min eigenvalue)".into(), margin: lmin });
    if lmin < -CONDITION_TOL {
        cex.get_or_insert_with(|| real_vec(&lvec));
    }
    let k = sys.kernel_dim();
    w.push(Witness { description: format!("ker L nontrivial (dim ker L - 1, dim = {k})"), margin: k as f64 - 1.0 });
    (w, cex)
}

/// Condition (A)₀: `A⁰` SPD, `A` and `L` real symmetric, `L ⪰ 0` with a nontrivial kernel.
pub fn check_condition_a0(sys: &RelaxationSystem) -> ConditionReport {
    let (w, cex) = condition_a_family(sys, true);
    ConditionReport::finish(ConditionId::A0, w, cex)
}

/// Condition (A): as (A)₀ but `L` only needs a nonnegative symmetric part.
pub fn check_condition_a(sys: &RelaxationSystem) -> ConditionReport {
    let (w, cex) = condition_a_family(sys, false);
    ConditionReport::finish(ConditionId::A, w, cex)
}
