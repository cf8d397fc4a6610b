//! Real scalars of selectable precision and a complex type built on them.
//!
//! The eigensolver is written once against [`Real`] and instantiated both with
//! `f64` and with [`Mp`], a binary floating-point number whose mantissa width
//! is chosen at run time. Spectral abscissae of the relaxation models shrink
//! like a high power of the frequency near both ends of the grid, far below
//! the resolution of double precision, so the wide type is not optional.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, RoundingMode, Sign};
use num_complex::Complex64;

/// Arithmetic needed by the dense eigensolver.
///
/// Constants are produced through [`Real::lift`] so that a wide value can
/// hand its precision to the literals it is combined with.
pub trait Real:
    Clone
    + fmt::Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    /// `x` represented with the same precision as `self`.
    fn lift(&self, x: f64) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn to_f64(&self) -> f64;
    /// Machine epsilon of this precision, `2^(1-p)` for a `p`-bit mantissa.
    fn epsilon(&self) -> Self;
    fn is_zero(&self) -> bool;

    fn zero_like(&self) -> Self {
        self.lift(0.0)
    }
}

impl Real for f64 {
    fn lift(&self, x: f64) -> Self {
        x
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn epsilon(&self) -> Self {
        f64::EPSILON
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
}

const RM: RoundingMode = RoundingMode::ToEven;

/// Binary float with a fixed mantissa width in bits.
#[derive(Clone)]
pub struct Mp {
    v: BigFloat,
    bits: usize,
}

impl Mp {
    pub fn from_f64(x: f64, bits: usize) -> Self {
        Mp {
            v: BigFloat::from_f64(x, bits),
            bits,
        }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    fn wrap(v: BigFloat, bits: usize) -> Self {
        Mp { v, bits }
    }
}

impl fmt::Debug for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mp({:e}; {} bits)", self.to_f64(), self.bits)
    }
}

impl PartialEq for Mp {
    fn eq(&self, other: &Self) -> bool {
        self.v == other.v
    }
}

impl PartialOrd for Mp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.v.partial_cmp(&other.v)
    }
}

macro_rules! mp_binop {
    ($tr:ident, $method:ident) => {
        impl $tr for Mp {
            type Output = Mp;
            fn $method(self, rhs: Mp) -> Mp {
                let bits = self.bits.max(rhs.bits);
                Mp::wrap(self.v.$method(&rhs.v, bits, RM), bits)
            }
        }
    };
}

mp_binop!(Add, add);
mp_binop!(Sub, sub);
mp_binop!(Mul, mul);
mp_binop!(Div, div);

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp::wrap(self.v.neg(), self.bits)
    }
}

impl Real for Mp {
    fn lift(&self, x: f64) -> Self {
        Mp::from_f64(x, self.bits)
    }
    fn sqrt(&self) -> Self {
        Mp::wrap(self.v.sqrt(self.bits, RM), self.bits)
    }
    fn abs(&self) -> Self {
        Mp::wrap(self.v.abs(), self.bits)
    }
    fn to_f64(&self) -> f64 {
        bigfloat_to_f64(&self.v)
    }
    fn epsilon(&self) -> Self {
        let mut u = Mp::from_f64(1.0, self.bits);
        let mut left = self.bits as i32 - 1;
        while left > 0 {
            let step = left.min(1000);
            u = u * Mp::from_f64(2f64.powi(-step), self.bits);
            left -= step;
        }
        u
    }
    fn is_zero(&self) -> bool {
        self.v.is_zero()
    }
}

fn bigfloat_to_f64(v: &BigFloat) -> f64 {
    if v.is_nan() {
        return f64::NAN;
    }
    if v.is_inf_pos() {
        return f64::INFINITY;
    }
    if v.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    let Some((words, _, sign, exp, _)) = v.as_raw_parts() else {
        return f64::NAN;
    };
    let Some(&top) = words.last() else {
        return 0.0;
    };
    if top == 0 {
        return 0.0;
    }
    // Mantissa is a fraction in [1/2, 1) spread over 64-bit words, most
    // significant word last. Two words carry more than enough bits for f64.
    let next = if words.len() >= 2 {
        words[words.len() - 2]
    } else {
        0
    };
    let frac = top as f64 / 2f64.powi(64) + next as f64 / 2f64.powi(128);
    let mag = ldexp(frac, exp);
    if sign == Sign::Neg {
        -mag
    } else {
        mag
    }
}

fn ldexp(x: f64, e: i32) -> f64 {
    // Split the power so that intermediate factors stay finite.
    let mut x = x;
    let mut e = e;
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

/// Complex number over a [`Real`] scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Cx<R> {
    pub re: R,
    pub im: R,
}

impl<R: Real> Cx<R> {
    pub fn new(re: R, im: R) -> Self {
        Cx { re, im }
    }

    pub fn lift(proto: &R, z: Complex64) -> Self {
        Cx::new(proto.lift(z.re), proto.lift(z.im))
    }

    pub fn zero(proto: &R) -> Self {
        Cx::new(proto.zero_like(), proto.zero_like())
    }

    pub fn conj(&self) -> Self {
        Cx::new(self.re.clone(), -self.im.clone())
    }

    pub fn norm_sqr(&self) -> R {
        self.re.clone() * self.re.clone() + self.im.clone() * self.im.clone()
    }

    pub fn abs(&self) -> R {
        self.norm_sqr().sqrt()
    }

    /// |re| + |im|, a cheap magnitude for deflation tests.
    pub fn abs1(&self) -> R {
        self.re.abs() + self.im.abs()
    }

    pub fn scale(&self, s: &R) -> Self {
        Cx::new(self.re.clone() * s.clone(), self.im.clone() * s.clone())
    }

    pub fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }

    pub fn to_c64(&self) -> Complex64 {
        Complex64::new(self.re.to_f64(), self.im.to_f64())
    }
}

impl<R: Real> Add for Cx<R> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Cx::new(self.re + o.re, self.im + o.im)
    }
}

impl<R: Real> Sub for Cx<R> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Cx::new(self.re - o.re, self.im - o.im)
    }
}

impl<R: Real> Mul for Cx<R> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let re = self.re.clone() * o.re.clone() - self.im.clone() * o.im.clone();
        let im = self.re * o.im + self.im * o.re;
        Cx::new(re, im)
    }
}

impl<R: Real> Div for Cx<R> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // Scale by the larger component of the divisor to keep the
        // denominator away from underflow.
        let (a, b) = (o.re.abs(), o.im.abs());
        let s = if a > b { a } else { b };
        let cr = o.re / s.clone();
        let ci = o.im / s.clone();
        let den = cr.clone() * cr.clone() + ci.clone() * ci.clone();
        let re = (self.re.clone() * cr.clone() + self.im.clone() * ci.clone()) / den.clone();
        let im = (self.im * cr - self.re * ci) / den;
        Cx::new(re / s.clone(), im / s)
    }
}

impl<R: Real> Neg for Cx<R> {
    type Output = Self;
    fn neg(self) -> Self {
        Cx::new(-self.re, -self.im)
    }
}
