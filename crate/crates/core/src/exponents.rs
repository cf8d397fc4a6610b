//! Exponent bookkeeping for the weighted energy method.
//!
//! Each frequency-weighted identity is multiplied by `|ξ|^{α_j}/(1+|ξ|)^{α_j+β_j}`
//! and the resulting cross terms must be absorbed by dissipation. Absorption
//! at low and high frequency reduces to linear inequalities in the exponents,
//! which are kept here as ledgers with stable ids and evaluated in exact
//! rational arithmetic. A feasible choice yields a rate function `η(ξ)`, the
//! pointwise minimum of the dissipated component weights.
//!
//! Indexing follows the components: `α_j` belongs to the identity for `u_j`.
//! The first model uses `α_1..α_{m−1}` with `α_m = 0` and `β_m = 2` (the last
//! component is damped at order one, which is exponent `2 − β_m`). The second
//! model uses `α_2..α_m` with `α_1 = β_1 = 0`.

use std::fmt;

use num_complex::Complex64;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensator::{coercivity_from_scaled, congruence_scale, ratio_ladder, CoercivityReport, DissipationForm};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_extremes, herm, sym, to_complex, CMat};
use crate::lyapunov::{LambdaProfile, EQUIV_FLOOR, MAX_HALVINGS};
use crate::spectral::{mode_matrix, FrequencyGrid};
use crate::sysmodel::{ModelTag, RelaxationSystem};

/// Exponents of the first model, `alpha[j−1] = α_j` for `j = 1..m−1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentVectorsI {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Exponents of the second model, `alpha[j−2] = α_j` for `j = 2..m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentVectorsII {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ExponentVectors {
    #[serde(rename = "model1")]
    I(ExponentVectorsI),
    #[serde(rename = "model2")]
    II(ExponentVectorsII),
}

impl ExponentVectors {
    pub fn model(&self) -> ModelTag {
        match self {
            ExponentVectors::I(_) => ModelTag::ModelI,
            ExponentVectors::II(_) => ModelTag::ModelII,
        }
    }

    /// Number of components of the system these exponents are for.
    pub fn m(&self) -> usize {
        match self {
            ExponentVectors::I(v) => v.alpha.len() + 1,
            ExponentVectors::II(v) => v.alpha.len() + 1,
        }
    }

    /// Both ledgers of the model, merged.
    pub fn feasibility(&self) -> Result<FeasibilityReport> {
        let m = self.m();
        match self {
            ExponentVectors::I(v) => {
                let a = model1_alpha_constraints(m, &v.alpha)?;
                let b = model1_beta_constraints(m, &v.beta)?;
                Ok(a.merge(b))
            }
            ExponentVectors::II(v) => {
                let a = model2_constraints(m, &v.alpha, Side::Alpha)?;
                let b = model2_constraints(m, &v.beta, Side::Beta)?;
                Ok(a.merge(b))
            }
        }
    }
}

/// Which exponent family a ledger constrains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Alpha,
    Beta,
}

impl Side {
    fn symbol(self) -> &'static str {
        match self {
            Side::Alpha => "α",
            Side::Beta => "β",
        }
    }
}

/// `Σ coef·x_j + constant` over exponent indices `j`.
#[derive(Clone, Debug, PartialEq)]
struct Affine {
    terms: Vec<(usize, f64)>,
    constant: f64,
}

impl Affine {
    fn constant(c: f64) -> Self {
        Affine { terms: vec![], constant: c }
    }

    fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    fn add(mut self, other: Affine) -> Self {
        for (j, c) in other.terms {
            match self.terms.iter_mut().find(|t| t.0 == j) {
                Some(t) => t.1 += c,
                None => self.terms.push((j, c)),
            }
        }
        self.terms.retain(|t| t.1 != 0.0);
        self.constant += other.constant;
        self
    }

    fn scale(mut self, k: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= k;
        }
        self.constant *= k;
        self
    }

    fn eval_f64(&self, x: &dyn Fn(usize) -> f64) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x(j)).sum::<f64>() + self.constant
    }

    fn eval_exact(&self, x: &dyn Fn(usize) -> f64) -> Option<BigRational> {
        let mut acc = BigRational::from_float(self.constant)?;
        for &(j, c) in &self.terms {
            acc += BigRational::from_float(c)? * BigRational::from_float(x(j))?;
        }
        Some(acc)
    }

    fn render(&self, sym: &str) -> String {
        let mut s = String::new();
        for (k, &(j, c)) in self.terms.iter().enumerate() {
            let sign = if c < 0.0 { "−" } else if k > 0 { "+" } else { "" };
            let mag = c.abs();
            let coef = if mag == 1.0 { String::new() } else { format!("{mag}·") };
            if k > 0 {
                s.push(' ');
                s.push_str(sign);
                s.push(' ');
            } else {
                s.push_str(sign);
            }
            s.push_str(&format!("{coef}{sym}{j}"));
        }
        if self.constant != 0.0 || self.terms.is_empty() {
            if self.terms.is_empty() {
                s.push_str(&format!("{}", self.constant));
            } else if self.constant < 0.0 {
                s.push_str(&format!(" − {}", -self.constant));
            } else {
                s.push_str(&format!(" + {}", self.constant));
            }
        }
        s
    }
}

/// One inequality `lhs ≥ rhs` of a ledger.
#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub id: String,
    /// True for inequalities that follow from others in the same ledger.
    pub implied: bool,
    lhs: Affine,
    rhs: Affine,
    side: Side,
}

impl Constraint {
    /// The inequality as text, e.g. `2·α4 + 4 ≥ α3 + α5 + 4`.
    pub fn text(&self) -> String {
        format!("{} ≥ {}", self.lhs.render(self.side.symbol()), self.rhs.render(self.side.symbol()))
    }

    /// Id with any per-index family number replaced by `{j}`.
    pub fn template(&self) -> String {
        let parts: Vec<&str> = self.id.split('.').collect();
        match parts.as_slice() {
            ["I", fam, j, k] if fam.ends_with('j') => format!("I.{fam}.{{j}}.{k}"),
            ["II", side, k, j] if *j != "0" => format!("II.{side}.{k}.{{j}}"),
            _ => self.id.clone(),
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.id, self.text())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub satisfied: bool,
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn merge(mut self, other: FeasibilityReport) -> Self {
        self.satisfied &= other.satisfied;
        self.checked += other.checked;
        self.violations.extend(other.violations);
        self
    }

    pub fn violated(&self, id: &str) -> bool {
        self.violations.iter().any(|v| v.id == id)
    }
}

/// Check every constraint exactly. `first` is the exponent index stored at
/// `values[0]` (1 for the first model, 2 for the second).
pub fn evaluate(ledger: &[Constraint], values: &[f64], first: usize) -> Result<FeasibilityReport> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("exponent {v} is not finite")));
    }
    let span = first..first + values.len();
    if let Some(c) = ledger.iter().find(|c| c.lhs.terms.iter().chain(&c.rhs.terms).any(|t| !span.contains(&t.0))) {
        return Err(Error::InvalidParams(format!("{} refers to an exponent outside {span:?}", c.id)));
    }
    let x = |j: usize| values[j - first];
    let mut violations = Vec::new();
    for c in ledger {
        let (l, r) = match (c.lhs.eval_exact(&x), c.rhs.eval_exact(&x)) {
            (Some(l), Some(r)) => (l, r),
            _ => return Err(Error::Numerical(format!("{}: exact evaluation failed", c.id))),
        };
        if l < r {
            violations.push(Violation {
                id: c.id.clone(),
                inequality: c.text(),
                lhs: c.lhs.eval_f64(&x),
                rhs: c.rhs.eval_f64(&x),
            });
        }
    }
    Ok(FeasibilityReport { satisfied: violations.is_empty(), checked: ledger.len(), violations })
}

/// Ledger builder: resolves conventional indices to constants.
struct Ledger {
    side: Side,
    /// Indices that are fixed by convention, with their value.
    fixed: Vec<(usize, f64)>,
    out: Vec<Constraint>,
}

impl Ledger {
    fn new(side: Side, fixed: Vec<(usize, f64)>) -> Self {
        Ledger { side, fixed, out: vec![] }
    }

    fn x(&self, j: usize) -> Affine {
        match self.fixed.iter().find(|f| f.0 == j) {
            Some(&(_, v)) => Affine::constant(v),
            None => Affine { terms: vec![(j, 1.0)], constant: 0.0 },
        }
    }

    fn push(&mut self, id: String, lhs: Affine, rhs: Affine) {
        self.out.push(Constraint { id, implied: false, lhs, rhs, side: self.side });
    }

    fn push_implied(&mut self, id: String, lhs: Affine, rhs: Affine) {
        self.out.push(Constraint { id, implied: true, lhs, rhs, side: self.side });
    }
}

fn require_model1(m: usize) -> Result<()> {
    if m < 6 {
        return Err(Error::Unsupported(format!("first-model exponent ledgers need m ≥ 6, got {m}")));
    }
    Ok(())
}

fn require_model2(m: usize) -> Result<()> {
    if m < 6 || !m.is_multiple_of(2) {
        return Err(Error::Unsupported(format!("second-model exponent ledgers need even m ≥ 6, got {m}")));
    }
    Ok(())
}

fn check_len(values: &[f64], want: usize, what: &str) -> Result<()> {
    if values.len() != want {
        return Err(Error::InvalidParams(format!("{what} has {} entries, expected {want}", values.len())));
    }
    Ok(())
}

/// High-frequency ledger of the first model over `β_1..β_{m−1}`.
pub fn model1_beta_ledger(m: usize) -> Result<Vec<Constraint>> {
    require_model1(m)?;
    let mut l = Ledger::new(Side::Beta, vec![(m, 2.0)]);
    let b = |l: &Ledger, j| l.x(j);
    let k = |c: f64| Affine::constant(c);
    let id = |f: &str, k: usize| format!("I.b{f}.{k}");

    let rows = vec![
        (id("1", 1), b(&l, 1).plus(-1.0), k(0.0)),
        (id("1", 2), b(&l, 1).plus(-2.0), k(0.0)),
        (id("1", 3), b(&l, 1).plus(-1.0).scale(2.0), b(&l, 1).plus(-2.0).add(b(&l, 4).plus(-2.0))),
        (id("1", 4), b(&l, 1).plus(-2.0), b(&l, 2)),
        (id("2", 1), b(&l, 2), k(0.0)),
        (id("2", 2), b(&l, 2), b(&l, 4).plus(-2.0)),
        (id("2", 3), b(&l, 2).plus(-1.0).scale(2.0), b(&l, 1).plus(-2.0).add(b(&l, 4).plus(-2.0))),
        (id("2", 4), b(&l, 2), b(&l, 3)),
        (id("2", 5), b(&l, 2), b(&l, 5)),
        (id("3", 1), b(&l, 3).plus(-1.0), k(0.0)),
        (id("3", 2), b(&l, 3), k(0.0)),
        (id("3", 3), b(&l, 3).plus(-2.0), k(0.0)),
        (id("3", 4), b(&l, 3).plus(-2.0), b(&l, 4).plus(-2.0)),
        (id("3", 5), b(&l, 3), b(&l, 5)),
        (id("3", 6), b(&l, 3).plus(-1.0).scale(2.0), b(&l, 3).plus(-2.0).add(b(&l, 4).plus(-2.0))),
        (id("4", 1), b(&l, 4), k(1.0)),
        (id("4", 2), b(&l, 4), k(2.0)),
        (id("4", 3), b(&l, 4), b(&l, 6)),
        (id("4", 4), b(&l, 4), b(&l, 5)),
        (id("4", 5), b(&l, 4).plus(-2.0).scale(2.0), b(&l, 3).plus(-2.0).add(b(&l, 5).plus(-2.0))),
        (id("4", 6), b(&l, 4).plus(-1.0).scale(2.0), b(&l, 2).add(b(&l, 5).plus(-2.0))),
    ];
    for (i, lhs, rhs) in rows {
        l.push(i, lhs, rhs);
    }
    for j in 6..m {
        let (p, q, r, s) = (b(&l, j - 1), b(&l, j - 2), b(&l, j), b(&l, j + 1));
        let f = format!("j.{j}");
        l.push(id(&f, 1), p.clone(), k(1.0));
        l.push(id(&f, 2), p.clone(), k(2.0));
        l.push(id(&f, 3), p.clone(), s);
        l.push(id(&f, 4), p.clone(), r.clone());
        l.push(id(&f, 5), p.plus(-2.0).scale(2.0), q.plus(-2.0).add(r.plus(-2.0)));
    }
    let (last, prev) = (b(&l, m - 1), b(&l, m - 2));
    l.push(id("m", 1), last.clone(), k(1.0));
    l.push(id("m", 2), last.clone(), k(2.0));
    l.push_implied(id("m", 3), last.clone().plus(-1.0).scale(2.0), last.clone().plus(-2.0));
    l.push(id("m", 4), last.clone().plus(-2.0), k(0.0));
    l.push(id("m", 5), last.plus(-2.0).scale(2.0), prev.plus(-2.0));
    Ok(l.out)
}

/// Low-frequency ledger of the first model over `α_1..α_{m−1}`.
pub fn model1_alpha_ledger(m: usize) -> Result<Vec<Constraint>> {
    require_model1(m)?;
    let mut l = Ledger::new(Side::Alpha, vec![(m, 0.0)]);
    let a = |l: &Ledger, j| l.x(j);
    let id = |f: &str, k: usize| format!("I.a{f}.{k}");
    let zero = Affine::constant(0.0);

    let rows = vec![
        (id("1", 1), a(&l, 1).plus(1.0), zero.clone()),
        (id("1", 2), a(&l, 1).plus(1.0).scale(2.0), a(&l, 1).plus(2.0).add(a(&l, 4).plus(2.0))),
        (id("1", 3), a(&l, 1).plus(2.0), a(&l, 2)),
        (id("2", 1), a(&l, 2), a(&l, 4).plus(2.0)),
        (id("2", 2), a(&l, 2).plus(1.0).scale(2.0), a(&l, 1).plus(2.0).add(a(&l, 4).plus(2.0))),
        (id("2", 3), a(&l, 2), a(&l, 3)),
        (id("2", 4), a(&l, 2), a(&l, 5)),
        (id("3", 1), a(&l, 3), a(&l, 4)),
        (id("3", 2), a(&l, 3), a(&l, 5)),
        (id("3", 3), a(&l, 3).plus(1.0).scale(2.0), a(&l, 4).plus(2.0).add(a(&l, 1).plus(2.0))),
        (id("4", 1), a(&l, 4), a(&l, 6)),
        (id("4", 2), a(&l, 4), a(&l, 5)),
        (id("4", 3), a(&l, 4).plus(2.0).scale(2.0), a(&l, 3).plus(2.0).add(a(&l, 5).plus(2.0))),
        (id("4", 4), a(&l, 4).plus(1.0).scale(2.0), a(&l, 2).add(a(&l, 5).plus(2.0))),
    ];
    for (i, lhs, rhs) in rows {
        l.push(i, lhs, rhs);
    }
    for j in 6..m {
        let f = format!("j.{j}");
        let p = a(&l, j - 1);
        l.push(id(&f, 1), p.clone(), a(&l, j + 1));
        l.push(id(&f, 2), p.clone(), a(&l, j));
        l.push(id(&f, 3), p.plus(2.0).scale(2.0), a(&l, j - 2).plus(2.0).add(a(&l, j).plus(2.0)));
    }
    let last = a(&l, m - 1);
    l.push(id("m", 1), last.clone(), zero.clone());
    l.push(id("m", 2), last.clone().plus(2.0), zero);
    l.push(id("m", 3), last.plus(2.0).scale(2.0), a(&l, m - 2).plus(2.0));
    Ok(l.out)
}

/// Consequences of the first-model low-frequency ledger: monotone decrease,
/// a gap of two below the first three exponents, and nonincreasing gaps
/// `α_{j−1} − α_j ≤ α_j − α_{j+1}` for `4 ≤ j ≤ m−2`.
pub fn model1_alpha_chain(m: usize) -> Result<Vec<Constraint>> {
    require_model1(m)?;
    let mut l = Ledger::new(Side::Alpha, vec![(m, 0.0)]);
    let id = |k: usize| format!("I.ac.{k}");
    let mut k = 0;
    let mut next = || {
        k += 1;
        id(k)
    };
    for j in 1..m - 1 {
        let (lhs, rhs) = (l.x(j), l.x(j + 1));
        let i = next();
        l.push_implied(i, lhs, rhs);
    }
    let i = next();
    let last = l.x(m - 1);
    l.push_implied(i, last, Affine::constant(0.0));
    for j in 1..=3 {
        let (lhs, rhs) = (l.x(j), l.x(4).plus(2.0));
        let i = next();
        l.push_implied(i, lhs, rhs);
    }
    for j in 4..=m - 2 {
        // α_j − α_{j+1} ≥ α_{j−1} − α_j, written as 2α_j ≥ α_{j−1} + α_{j+1}.
        let (lhs, rhs) = (l.x(j).scale(2.0), l.x(j - 1).add(l.x(j + 1)));
        let i = next();
        l.push_implied(i, lhs, rhs);
    }
    Ok(l.out)
}

/// Check `β_1..β_{m−1}` against the first model's high-frequency ledger.
pub fn model1_beta_constraints(m: usize, beta: &[f64]) -> Result<FeasibilityReport> {
    let ledger = model1_beta_ledger(m)?;
    check_len(beta, m - 1, "beta")?;
    evaluate(&ledger, beta, 1)
}

/// Check `α_1..α_{m−1}` against the first model's low-frequency ledger and
/// its consequence chain.
pub fn model1_alpha_constraints(m: usize, alpha: &[f64]) -> Result<FeasibilityReport> {
    let mut ledger = model1_alpha_ledger(m)?;
    ledger.extend(model1_alpha_chain(m)?);
    check_len(alpha, m - 1, "alpha")?;
    evaluate(&ledger, alpha, 1)
}

/// Ledger of the second model for one exponent family over indices `2..m`.
pub fn model2_ledger(m: usize, side: Side) -> Result<Vec<Constraint>> {
    require_model2(m)?;
    let n = m / 2;
    let mut l = Ledger::new(side, vec![(1, 0.0)]);
    let k = |c: f64| Affine::constant(c);
    let tag = match side {
        Side::Alpha => "a",
        Side::Beta => "b",
    };
    // Family `f` of index `j`; singletons use j = 0.
    let id = |f: usize, j: usize| format!("II.{tag}.{f}.{j}");
    let x = |l: &Ledger, j| l.x(j);
    match side {
        Side::Alpha => {
            for j in 2..=n {
                l.push(id(1, j), x(&l, 2).plus(2.0 - j as f64), k(0.0));
            }
            let rows = vec![
                (id(2, 0), x(&l, 2), k(0.0)),
                (id(3, 0), x(&l, 2).plus(2.0), k(0.0)),
                (id(4, 0), x(&l, 3), k(0.0)),
                (id(5, 0), x(&l, 3).plus(2.0), x(&l, 2).plus(2.0)),
                (id(6, 0), x(&l, 4), k(0.0)),
                (id(7, 0), x(&l, 4).plus(2.0), x(&l, 3)),
            ];
            for (i, lhs, rhs) in rows {
                l.push(i, lhs, rhs);
            }
            for j in 3..=n {
                l.push(id(8, j), x(&l, 2 * j), x(&l, 2 * j - 2).plus(2.0));
                l.push(id(9, j), x(&l, 2 * j).plus(2.0), x(&l, 2 * j - 1));
                l.push(id(10, j), x(&l, 2 * j - 1), x(&l, 2 * j - 2).plus(2.0));
                l.push(id(11, j), x(&l, 2 * j - 1).plus(2.0), x(&l, 2 * j - 3));
            }
            for j in 2..=n {
                l.push(id(12, j), x(&l, 2).plus(3.0 - j as f64).scale(2.0), x(&l, 2 * j).plus(2.0));
            }
            l.push(id(13, 0), x(&l, 3).plus(1.0), x(&l, 4).plus(2.0).scale(0.5));
            for j in 2..n {
                l.push(id(14, j), x(&l, 2 * j), x(&l, 2 * j + 1).add(x(&l, 2 * j - 1)).scale(0.5).plus(-1.0));
                l.push(id(15, j), x(&l, 2 * j + 1), x(&l, 2 * j + 2).add(x(&l, 2 * j)).scale(0.5).plus(-1.0));
            }
        }
        Side::Beta => {
            let rows = vec![
                (id(1, 0), x(&l, 2).plus(-2.0), k(0.0)),
                (id(2, 0), x(&l, 3), k(0.0)),
                (id(3, 0), x(&l, 3).plus(-2.0), x(&l, 2).plus(-2.0)),
                (id(4, 0), x(&l, 4), k(0.0)),
                (id(5, 0), x(&l, 4).plus(-2.0), x(&l, 3)),
            ];
            for (i, lhs, rhs) in rows {
                l.push(i, lhs, rhs);
            }
            for j in 3..=n {
                l.push(id(6, j), x(&l, 2 * j), x(&l, 2 * j - 2));
                l.push(id(7, j), x(&l, 2 * j).plus(-2.0), x(&l, 2 * j - 1));
                l.push(id(8, j), x(&l, 2 * j - 1), x(&l, 2 * j - 2).plus(-2.0));
                l.push(id(9, j), x(&l, 2 * j - 1).plus(-2.0), x(&l, 2 * j - 3));
            }
            l.push(id(10, 0), x(&l, 3).plus(-1.0).scale(2.0), x(&l, 4).plus(-2.0));
            for j in 2..=n {
                l.push(id(11, j), x(&l, 2).plus(j as f64 - 2.0), k(0.0));
                l.push(id(12, j), x(&l, 2).plus(j as f64 - 3.0).scale(2.0), x(&l, 2 * j).plus(-2.0));
            }
            for j in 2..n {
                l.push(id(13, j), x(&l, 2 * j).plus(-1.0).scale(2.0), x(&l, 2 * j + 1).add(x(&l, 2 * j - 1)));
                l.push(
                    id(14, j),
                    x(&l, 2 * j + 1).plus(-1.0).scale(2.0),
                    x(&l, 2 * j + 2).plus(-2.0).add(x(&l, 2 * j).plus(-2.0)),
                );
            }
        }
    }
    Ok(l.out)
}

/// Check one exponent family of the second model, `values[j−2]` for `j = 2..m`.
pub fn model2_constraints(m: usize, values: &[f64], side: Side) -> Result<FeasibilityReport> {
    let ledger = model2_ledger(m, side)?;
    check_len(values, m - 1, side.symbol())?;
    evaluate(&ledger, values, 2)
}

/// Best choice for the first model: `α_1 = α_2 = α_3 = 2(m−4)`,
/// `α_j = 2(m−j−1)` beyond, and `β = (4, 2, …, 2)`.
pub fn model1_best_exponents(m: usize) -> Result<ExponentVectorsI> {
    require_model1(m)?;
    let alpha = (1..m).map(|j| if j <= 3 { 2.0 * (m as f64 - 4.0) } else { 2.0 * (m - j - 1) as f64 }).collect();
    let mut beta = vec![2.0; m - 1];
    beta[0] = 4.0;
    Ok(ExponentVectorsI { alpha, beta })
}

/// Best choice for the second model, `n = m/2`: `α_2 = 4(n−2)`,
/// `α_{2j−1} = α_{2j} = 4(n−2) + 2(j−2)` and `β_{2j} = β_{2j+1} = 2j`.
pub fn model2_best_exponents(m: usize) -> Result<ExponentVectorsII> {
    require_model2(m)?;
    let n = (m / 2) as f64;
    let alpha = (2..=m)
        .map(|i| if i == 2 { 4.0 * (n - 2.0) } else { 4.0 * (n - 2.0) + 2.0 * (i.div_ceil(2) as f64 - 2.0) })
        .collect();
    let beta = (2..=m).map(|i| (2 * (i / 2)) as f64).collect();
    Ok(ExponentVectorsII { alpha, beta })
}

/// `|ξ|^xi_pow / (1+|ξ|)^one_plus_pow`, the weight dissipated on one component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaTerm {
    pub component: usize,
    pub xi_pow: f64,
    pub one_plus_pow: f64,
}

impl EtaTerm {
    pub fn ln_eval(&self, xi: f64) -> f64 {
        let x = xi.abs();
        let lx = if self.xi_pow == 0.0 { 0.0 } else { self.xi_pow * x.ln() };
        lx - self.one_plus_pow * x.ln_1p()
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.ln_eval(xi).exp()
    }

    /// `self ≤ other` for every `ξ`: at least as flat at zero and at least
    /// as steep at infinity.
    pub fn below(&self, other: &EtaTerm) -> bool {
        self.xi_pow >= other.xi_pow && self.one_plus_pow - self.xi_pow >= other.one_plus_pow - other.xi_pow
    }
}

/// `η(ξ) = min_k` of the component weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaFunction {
    pub terms: Vec<EtaTerm>,
}

impl EtaFunction {
    pub fn ln_eval(&self, xi: f64) -> f64 {
        self.terms.iter().map(|t| t.ln_eval(xi)).fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.ln_eval(xi).exp()
    }

    /// A term that is the minimum for every `ξ`, if there is one.
    pub fn dominant(&self) -> Option<EtaTerm> {
        self.terms.iter().copied().find(|t| self.terms.iter().all(|o| t.below(o)))
    }

    /// Low-frequency order `p` and high-frequency decay order `q − p` of the
    /// minimum, which behaves like `ξ^p` near zero and `ξ^{−(q−p)}` at infinity.
    pub fn orders(&self) -> (f64, f64) {
        let low = self.terms.iter().map(|t| t.xi_pow).fold(f64::NEG_INFINITY, f64::max);
        let high = self.terms.iter().map(|t| t.one_plus_pow - t.xi_pow).fold(f64::NEG_INFINITY, f64::max);
        (low, high)
    }

    pub fn weights(&self, xi: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.terms.len()];
        for t in &self.terms {
            w[t.component - 1] = t.eval(xi);
        }
        w
    }
}

fn term(component: usize, xi_pow: f64, one_plus_pow: f64) -> EtaTerm {
    EtaTerm { component, xi_pow, one_plus_pow }
}

fn eta_terms(vectors: &ExponentVectors) -> Vec<EtaTerm> {
    let m = vectors.m();
    match vectors {
        ExponentVectors::I(v) => {
            let (a, b) = (|j: usize| v.alpha[j - 1], |j: usize| v.beta[j - 1]);
            let mut t = vec![term(1, a(2), a(2) + b(2)), term(2, 2.0 + a(1), a(1) + b(1))];
            t.extend((3..m).map(|k| term(k, 2.0 + a(k), a(k) + b(k))));
            t.push(term(m, 0.0, 0.0));
            t
        }
        ExponentVectors::II(v) => {
            let a = |j: usize| if j == 1 { 0.0 } else { v.alpha[j - 2] };
            let b = |j: usize| if j == 1 { 0.0 } else { v.beta[j - 2] };
            let mut t = vec![term(1, 2.0 + a(2), a(2) + b(2)), term(2, 0.0, 0.0)];
            for j in 2..=m / 2 {
                let (o, e) = (2 * j - 1, 2 * j);
                t.push(term(o, a(o), a(o) + b(o)));
                t.push(term(e, 2.0 + a(e), a(e) + b(e)));
            }
            t
        }
    }
}

fn feasible_or_err(vectors: &ExponentVectors) -> Result<()> {
    let (a, b) = match vectors {
        ExponentVectors::I(v) => (&v.alpha, &v.beta),
        ExponentVectors::II(v) => (&v.alpha, &v.beta),
    };
    if a.len() != b.len() {
        return Err(Error::InvalidParams("alpha and beta differ in length".into()));
    }
    if let Some(x) = a.iter().chain(b).find(|x| !(**x >= 0.0)) {
        return Err(Error::InvalidParams(format!("exponent {x} is negative")));
    }
    let rep = vectors.feasibility()?;
    if !rep.satisfied {
        return Err(Error::Infeasible(rep.violations.len()));
    }
    Ok(())
}

/// Rate function of a feasible exponent choice. Infeasible choices are
/// rejected with the number of violated inequalities.
pub fn lambda_from_exponents(vectors: &ExponentVectors) -> Result<EtaFunction> {
    feasible_or_err(vectors)?;
    Ok(EtaFunction { terms: eta_terms(vectors) })
}

/// A positive rate function evaluated in log form.
pub trait RateFunction {
    fn ln_rate(&self, xi: f64) -> f64;
}

impl RateFunction for LambdaProfile {
    fn ln_rate(&self, xi: f64) -> f64 {
        self.p2 as f64 * xi.abs().ln() - self.q as f64 * xi.mul_add(xi, 1.0).ln()
    }
}

impl RateFunction for EtaFunction {
    fn ln_rate(&self, xi: f64) -> f64 {
        self.ln_eval(xi)
    }
}

/// Smallest and largest `η(ξ)/λ(ξ)` over the grid.
pub fn reconcile_rates(lambda: &impl RateFunction, eta: &impl RateFunction, grid: &FrequencyGrid) -> (f64, f64) {
    grid.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &xi| {
        let r = (eta.ln_rate(xi) - lambda.ln_rate(xi)).exp();
        (lo.min(r), hi.max(r))
    })
}

/// Interaction functional `E^int = u* N u` for identity constants `c`
/// (`c[k−1]` for component `k`). Entry `(r, s)` pairs `u_s` with `conj(u_r)`.
pub fn interaction_matrix(sys: &RelaxationSystem, vectors: &ExponentVectors, c: &[f64], xi: f64) -> CMat {
    let m = sys.m;
    let mut n = CMat::zeros(m, m);
    let x = xi.abs();
    let ix = Complex64::new(0.0, xi);
    // coef·⟨u_first, u_second⟩ with 1-based components.
    let mut pair = |first: usize, second: usize, coef: Complex64| n[(second - 1, first - 1)] += coef;
    let w = |a: f64, b: f64| EtaTerm { component: 0, xi_pow: a, one_plus_pow: a + b }.eval(x);
    // Coupling between u_k and u_{k+1}.
    let link = |k: usize| sys.a[(k - 1, k)];
    match vectors {
        ExponentVectors::I(v) => {
            let (a, b) = (|j: usize| v.alpha[j - 1], |j: usize| v.beta[j - 1]);
            let cw = |k: usize| c[k - 1] * w(a(k), b(k));
            pair(2, 1, ix * cw(1));
            pair(1, 4, Complex64::new(-cw(2), 0.0));
            pair(3, 4, ix * (cw(3) * link(3)));
            pair(3, 2, Complex64::new(-cw(3) * link(3), 0.0));
            for k in 4..m {
                pair(k, k + 1, ix * (cw(k) * link(k)));
            }
        }
        ExponentVectors::II(v) => {
            let (a, b) = (|j: usize| v.alpha[j - 2], |j: usize| v.beta[j - 2]);
            let scale = |k: usize| c[k - 1] / (1.0 + x).powf(a(k) + b(k));
            // Coupling inside block j, between u_{2j−1} and u_{2j}.
            let block = |j: usize| sys.a[(2 * j - 2, 2 * j - 1)];
            let mut p = 1.0;
            for j in 1..=m / 2 {
                if j >= 2 {
                    p *= block(j);
                }
                // i^{2−j} ξ^{α_2+2−j} a_1 / P_j, with odd powers of ξ carrying its sign.
                let e = a(2) + 2.0 - j as f64;
                let mag = x.powf(e) * block(1) / p;
                let sign = if xi < 0.0 && (2 - j as i64).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
                let phase = Complex64::i().powi(2 - j as i32);
                pair(1, 2 * j, phase * (sign * mag * scale(2)));
            }
            for j in 2..=m / 2 {
                let (o, e) = (2 * j - 1, 2 * j);
                pair(o, o - 1, Complex64::new(scale(o) * x.powf(a(o)), 0.0));
                pair(e, o, ix * (scale(e) * x.powf(a(e)) * block(j)));
            }
        }
    }
    n
}

/// Outcome of the energy check built from an exponent choice.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AltDissipationReport {
    /// Identity constants, one per component.
    pub constants: Vec<f64>,
    pub ratio: f64,
    pub halvings: usize,
    /// Extreme eigenvalues of the energy matrix over the grid.
    pub equivalence: (f64, f64),
    pub coercivity: CoercivityReport,
}

/// Identity constants `c_k` (index `k−1`) for ratio `r` and common factor
/// `s`: first model `c_1 = r^{m−2}`, `c_2 = c_3 = r^{m−3}`, `c_k = r^{m−k}`;
/// second model `c_2 = r^{m−1}`, `c_k = r^{m+k−3}` for `k ≥ 3`.
pub fn identity_constants(model: ModelTag, m: usize, r: f64, s: f64) -> Vec<f64> {
    let mi = m as i32;
    (1..=mi)
        .map(|k| {
            s * match model {
                // The second and third identities share one constant so that
                // their u1-u3 cross terms cancel.
                ModelTag::ModelI if k == 1 => r.powi(mi - 2),
                ModelTag::ModelI if k == 2 => r.powi(mi - 3),
                ModelTag::ModelI if k < mi => r.powi(mi - k),
                // c_2² must stay below c_m, while c_3 ≫ … ≫ c_m sit below c_2.
                ModelTag::ModelII if k == 2 => r.powi(mi - 1),
                ModelTag::ModelII if k > 2 => r.powi(mi + k - 3),
                _ => 0.0,
            }
        })
        .collect()
}

/// Extreme eigenvalues of `I + Herm(N)` over the grid.
pub fn energy_equivalence(sys: &RelaxationSystem, vectors: &ExponentVectors, c: &[f64], grid: &FrequencyGrid) -> (f64, f64) {
    let id = CMat::identity(sys.m, sys.m);
    grid.points
        .par_iter()
        .map(|&xi| hermitian_extremes(&(&id + herm(&interaction_matrix(sys, vectors, c, xi)))))
        .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

/// Smallest eigenvalue of `Λ^{-1/2} ([L]^sy + Herm(Herm(N) M)) Λ^{-1/2}` at
/// each grid point, with `Λ` the component weights of `eta`.
pub fn scaled_energy_dissipation(
    sys: &RelaxationSystem,
    vectors: &ExponentVectors,
    eta: &EtaFunction,
    c: &[f64],
    grid: &FrequencyGrid,
) -> Vec<f64> {
    let ls = to_complex(&sym(&sys.l));
    grid.points
        .par_iter()
        .map(|&xi| {
            let pn = herm(&interaction_matrix(sys, vectors, c, xi));
            let h = &ls + herm(&(pn * mode_matrix(sys, xi)));
            hermitian_extremes(&congruence_scale(&h, &eta.weights(xi))).0
        })
        .collect()
}

/// Weighted energy check: `P = I + Herm(N)` must stay within `[1/2, 3/2]`
/// and `[L]^sy + Herm((P−I)M)` must dominate the component weights of `η`.
/// Constants follow [`identity_constants`] with `r` walked down the ratio
/// ladder and a common factor halved until the energy is equivalent to `|u|²`.
pub fn alt_dissipation_check(
    sys: &RelaxationSystem,
    vectors: &ExponentVectors,
    grid: &FrequencyGrid,
) -> Result<AltDissipationReport> {
    if sys.model != vectors.model() || sys.m != vectors.m() {
        return Err(Error::InvalidParams(format!(
            "exponents for {:?} m={} do not match the system ({:?} m={})",
            vectors.model(),
            vectors.m(),
            sys.model,
            sys.m
        )));
    }
    let eta = lambda_from_exponents(vectors)?;
    let m = sys.m;
    let mut last = None;
    for r in ratio_ladder() {
        let mut s = 1.0;
        let mut found = None;
        for h in 0..=MAX_HALVINGS {
            let c = identity_constants(sys.model, m, r, s);
            let (lo, hi) = energy_equivalence(sys, vectors, &c, grid);
            if lo >= EQUIV_FLOOR && hi <= 2.0 - EQUIV_FLOOR {
                found = Some((c, h, (lo, hi)));
                break;
            }
            s *= 0.5;
        }
        let Some((c, halvings, equivalence)) = found else { continue };
        let mu = scaled_energy_dissipation(sys, vectors, &eta, &c, grid);
        let coercivity = coercivity_from_scaled(DissipationForm::Identity, grid, &mu);
        let done = coercivity.success();
        let report = AltDissipationReport { constants: c, ratio: r, halvings, equivalence, coercivity };
        if done {
            return Ok(report);
        }
        last = Some(report);
    }
    let detail = "no identity constants on the ratio ladder give a coercive dissipation".to_string();
    let (worst_xi, margin) = last.map(|r| (r.coercivity.worst_xi, r.coercivity.min_scaled)).unwrap_or((f64::NAN, f64::NAN));
    Err(Error::Certification { stage: "alt_dissipation", detail, worst_xi, margin })
}
