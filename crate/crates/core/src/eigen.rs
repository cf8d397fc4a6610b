//! Dense nonsymmetric complex eigensolver.
//!
//! Pipeline: diagonal balancing by powers of two, Householder reduction to
//! upper Hessenberg form, then single-shift complex QR with Wilkinson shifts
//! and Givens rotations. When eigenvectors are requested the rotations are
//! accumulated and the triangular Schur factor is back-substituted.
//!
//! [`eig_adaptive`] runs the pipeline in double precision first and repeats it
//! with wider mantissas until the eigenvalue closest to the imaginary axis is
//! resolved well above the roundoff floor of the working precision.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::{Cx, Mp, Real};

/// Eigenvalues (and optionally eigenvectors, as columns) of a complex matrix.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: Option<DMatrix<Complex64>>,
    /// Mantissa width used for the accepted solve (53 for plain doubles).
    pub bits: usize,
}

/// Row-major square matrix over `Cx<R>`.
struct Square<R> {
    n: usize,
    d: Vec<Cx<R>>,
}

impl<R: Real> Square<R> {
    fn from_c64(m: &DMatrix<Complex64>, proto: &R) -> Self {
        let n = m.nrows();
        let mut d = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                d.push(Cx::lift(proto, m[(i, j)]));
            }
        }
        Square { n, d }
    }

    fn identity(n: usize, proto: &R) -> Self {
        let mut d = vec![Cx::zero(proto); n * n];
        for i in 0..n {
            d[i * n + i] = Cx::new(proto.lift(1.0), proto.zero_like());
        }
        Square { n, d }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> &Cx<R> {
        &self.d[i * self.n + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Cx<R>) {
        self.d[i * self.n + j] = v;
    }
}

/// Balancing by powers of two (no permutations). Returns the balanced matrix
/// `D⁻¹ M D` and the diagonal of `D`.
pub fn balance(m: &DMatrix<Complex64>) -> (DMatrix<Complex64>, Vec<f64>) {
    let n = m.nrows();
    let mut b = m.clone();
    let mut scale = vec![1.0f64; n];
    let radix = 2.0f64;
    let mut converged = false;
    let mut sweeps = 0;
    while !converged && sweeps < 100 {
        converged = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].l1_norm();
                    r += b[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut cc = c;
            let rr = r;
            while cc < rr / radix {
                cc *= radix * radix;
                f *= radix;
            }
            while cc >= rr * radix {
                cc /= radix * radix;
                f /= radix;
            }
            if (c * f + r / f) < 0.95 * s {
                converged = false;
                scale[i] *= f;
                for j in 0..n {
                    b[(i, j)] /= f;
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, scale)
}

/// Householder reduction to upper Hessenberg form; accumulates `Q` when given.
fn hessenberg<R: Real>(h: &mut Square<R>, mut q: Option<&mut Square<R>>, proto: &R) {
    let n = h.n;
    if n < 3 {
        return;
    }
    for k in 0..n - 2 {
        let mut norm2 = proto.zero_like();
        for i in k + 1..n {
            norm2 = norm2 + h.at(i, k).norm_sqr();
        }
        if norm2.is_zero() {
            continue;
        }
        let norm = norm2.sqrt();
        let x0 = h.at(k + 1, k).clone();
        let x0abs = x0.abs();
        // alpha = -e^{i arg x0} |x|
        let phase = if x0abs.is_zero() {
            Cx::new(proto.lift(1.0), proto.zero_like())
        } else {
            Cx::new(x0.re.clone() / x0abs.clone(), x0.im.clone() / x0abs.clone())
        };
        let alpha = -phase.scale(&norm);
        let mut v: Vec<Cx<R>> = (k + 1..n).map(|i| h.at(i, k).clone()).collect();
        v[0] = v[0].clone() - alpha;
        let mut vnorm2 = proto.zero_like();
        for vi in &v {
            vnorm2 = vnorm2 + vi.norm_sqr();
        }
        if vnorm2.is_zero() {
            continue;
        }
        let two_over = proto.lift(2.0) / vnorm2;
        // H <- (I - 2vv*/v*v) H
        for j in 0..n {
            let mut s = Cx::zero(proto);
            for (t, vi) in v.iter().enumerate() {
                s = s + vi.conj() * h.at(k + 1 + t, j).clone();
            }
            let s = s.scale(&two_over);
            for (t, vi) in v.iter().enumerate() {
                let cur = h.at(k + 1 + t, j).clone();
                h.set(k + 1 + t, j, cur - vi.clone() * s.clone());
            }
        }
        // H <- H (I - 2vv*/v*v)
        for i in 0..n {
            let mut s = Cx::zero(proto);
            for (t, vi) in v.iter().enumerate() {
                s = s + h.at(i, k + 1 + t).clone() * vi.clone();
            }
            let s = s.scale(&two_over);
            for (t, vi) in v.iter().enumerate() {
                let cur = h.at(i, k + 1 + t).clone();
                h.set(i, k + 1 + t, cur - s.clone() * vi.conj());
            }
        }
        if let Some(q) = q.as_deref_mut() {
            for i in 0..n {
                let mut s = Cx::zero(proto);
                for (t, vi) in v.iter().enumerate() {
                    s = s + q.at(i, k + 1 + t).clone() * vi.clone();
                }
                let s = s.scale(&two_over);
                for (t, vi) in v.iter().enumerate() {
                    let cur = q.at(i, k + 1 + t).clone();
                    q.set(i, k + 1 + t, cur - s.clone() * vi.conj());
                }
            }
        }
        for i in k + 2..n {
            h.set(i, k, Cx::zero(proto));
        }
    }
}

/// Givens pair (c real, s complex) with [c s; -conj(s) c]·[a; b] = [r; 0].
fn givens<R: Real>(a: &Cx<R>, b: &Cx<R>, proto: &R) -> (R, Cx<R>) {
    let aa = a.abs();
    let bb = b.abs();
    if bb.is_zero() {
        return (proto.lift(1.0), Cx::zero(proto));
    }
    if aa.is_zero() {
        let s = b.conj().scale(&(proto.lift(1.0) / bb));
        return (proto.zero_like(), s);
    }
    let norm = (aa.clone() * aa.clone() + bb.clone() * bb).sqrt();
    let c = aa.clone() / norm.clone();
    let unit_a = a.scale(&(proto.lift(1.0) / aa));
    let s = (unit_a * b.conj()).scale(&(proto.lift(1.0) / norm));
    (c, s)
}

/// Eigenvalue of the 2×2 block [[a, b], [c, d]] closest to `d`.
fn wilkinson_shift<R: Real>(a: &Cx<R>, b: &Cx<R>, c: &Cx<R>, d: &Cx<R>, proto: &R) -> Cx<R> {
    let half = proto.lift(0.5);
    let tr_half = (a.clone() + d.clone()).scale(&half);
    let diff_half = (a.clone() - d.clone()).scale(&half);
    let disc = diff_half.clone() * diff_half + b.clone() * c.clone();
    let root = csqrt(&disc, proto);
    let l1 = tr_half.clone() + root.clone();
    let l2 = tr_half - root;
    if (l1.clone() - d.clone()).abs1() < (l2.clone() - d.clone()).abs1() {
        l1
    } else {
        l2
    }
}

fn csqrt<R: Real>(z: &Cx<R>, proto: &R) -> Cx<R> {
    let r = z.abs();
    if r.is_zero() {
        return Cx::zero(proto);
    }
    let half = proto.lift(0.5);
    let re = ((r.clone() + z.re.clone()) * half.clone()).sqrt();
    let im_mag = ((r - z.re.clone()) * half).sqrt();
    let im = if z.im < proto.zero_like() { -im_mag } else { im_mag };
    Cx::new(re, im)
}

/// Schur form by shifted QR. `h` must be Hessenberg; on return it is upper
/// triangular when `z` is supplied (full updates), otherwise only the
/// diagonal is meaningful.
fn schur<R: Real>(h: &mut Square<R>, mut z: Option<&mut Square<R>>, proto: &R) -> std::result::Result<(), usize> {
    let n = h.n;
    if n == 0 {
        return Ok(());
    }
    let full = z.is_some();
    let eps = proto.epsilon();
    let tiny = proto.lift(f64::MIN_POSITIVE);
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let max_total = 60 * n.max(1);
    while hi > 0 {
        // Locate the start of the active unreduced block.
        let mut l = hi;
        while l > 0 {
            let sub = h.at(l, l - 1).abs1();
            let diag = h.at(l, l).abs1() + h.at(l - 1, l - 1).abs1();
            let thresh = if diag.is_zero() { tiny.clone() } else { eps.clone() * diag };
            if sub <= thresh {
                h.set(l, l - 1, Cx::zero(proto));
                break;
            }
            l -= 1;
        }
        if l == hi {
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if total > max_total {
            return Err(hi);
        }
        let mu = if iter % 11 == 10 {
            // Exceptional shift to break rare cycles.
            let s = h.at(hi, hi - 1).abs1();
            h.at(hi, hi).clone() + Cx::new(s.clone() * proto.lift(0.75), s * proto.lift(-0.4375))
        } else {
            wilkinson_shift(
                h.at(hi - 1, hi - 1),
                h.at(hi - 1, hi),
                h.at(hi, hi - 1),
                h.at(hi, hi),
                proto,
            )
        };
        let (row_end, col_start) = if full { (n, 0) } else { (hi + 1, l) };
        for k in l..=hi {
            let cur = h.at(k, k).clone();
            h.set(k, k, cur - mu.clone());
        }
        let mut rots: Vec<(R, Cx<R>)> = Vec::with_capacity(hi - l);
        for k in l..hi {
            let (c, s) = givens(h.at(k, k), h.at(k + 1, k), proto);
            for j in k..row_end {
                let x = h.at(k, j).clone();
                let y = h.at(k + 1, j).clone();
                h.set(k, j, x.scale(&c) + s.clone() * y.clone());
                h.set(k + 1, j, y.scale(&c) - s.conj() * x);
            }
            rots.push((c, s));
        }
        for (idx, (c, s)) in rots.iter().enumerate() {
            let k = l + idx;
            let last = (k + 2).min(hi);
            for i in col_start..=last {
                let x = h.at(i, k).clone();
                let y = h.at(i, k + 1).clone();
                h.set(i, k, x.scale(c) + y.clone() * s.conj());
                h.set(i, k + 1, y.scale(c) - x * s.clone());
            }
            if let Some(z) = z.as_deref_mut() {
                for i in 0..n {
                    let x = z.at(i, k).clone();
                    let y = z.at(i, k + 1).clone();
                    z.set(i, k, x.scale(c) + y.clone() * s.conj());
                    z.set(i, k + 1, y.scale(c) - x * s.clone());
                }
            }
        }
        for k in l..=hi {
            let cur = h.at(k, k).clone();
            h.set(k, k, cur + mu.clone());
        }
    }
    Ok(())
}

/// Eigenvectors of an upper triangular `t`, mapped through the Schur basis `z`.
fn triangular_eigenvectors<R: Real>(t: &Square<R>, z: &Square<R>, proto: &R) -> Vec<Vec<Cx<R>>> {
    let n = t.n;
    let eps = proto.epsilon();
    let mut tnorm = proto.zero_like();
    for v in &t.d {
        let a = v.abs1();
        if a > tnorm {
            tnorm = a;
        }
    }
    let floor = if tnorm.is_zero() {
        proto.lift(f64::MIN_POSITIVE)
    } else {
        eps * tnorm
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let lam = t.at(k, k).clone();
        let mut x = vec![Cx::zero(proto); n];
        x[k] = Cx::new(proto.lift(1.0), proto.zero_like());
        for i in (0..k).rev() {
            let mut s = Cx::zero(proto);
            for j in i + 1..=k {
                s = s + t.at(i, j).clone() * x[j].clone();
            }
            let mut den = t.at(i, i).clone() - lam.clone();
            if den.abs1() < floor {
                den = Cx::new(floor.clone(), proto.zero_like());
            }
            x[i] = -(s / den);
        }
        let mut v = vec![Cx::zero(proto); n];
        for (i, vi) in v.iter_mut().enumerate() {
            let mut s = Cx::zero(proto);
            for j in 0..=k {
                s = s + z.at(i, j).clone() * x[j].clone();
            }
            *vi = s;
        }
        out.push(v);
    }
    out
}

fn solve_with<R: Real>(
    balanced: &DMatrix<Complex64>,
    scale: &[f64],
    proto: R,
    want_vectors: bool,
) -> std::result::Result<(Vec<Complex64>, Option<DMatrix<Complex64>>), usize> {
    let n = balanced.nrows();
    let mut h = Square::from_c64(balanced, &proto);
    let mut q = if want_vectors {
        Some(Square::identity(n, &proto))
    } else {
        None
    };
    hessenberg(&mut h, q.as_mut(), &proto);
    schur(&mut h, q.as_mut(), &proto)?;
    let values: Vec<Complex64> = (0..n).map(|i| h.at(i, i).to_c64()).collect();
    let vectors = q.map(|q| {
        let vecs = triangular_eigenvectors(&h, &q, &proto);
        let mut v = DMatrix::<Complex64>::zeros(n, n);
        for (k, col) in vecs.iter().enumerate() {
            let mut norm2 = 0.0;
            for (i, c) in col.iter().enumerate() {
                let e = c.to_c64() * scale[i];
                v[(i, k)] = e;
                norm2 += e.norm_sqr();
            }
            let norm = norm2.sqrt();
            if norm > 0.0 {
                for i in 0..n {
                    v[(i, k)] /= norm;
                }
            }
        }
        v
    });
    Ok((values, vectors))
}

/// Eigen-decomposition at a fixed working precision (`bits == 53` means f64).
pub fn eig_at_precision(m: &DMatrix<Complex64>, bits: usize, want_vectors: bool) -> Result<EigenDecomposition> {
    assert!(m.is_square(), "eigensolver needs a square matrix");
    let (b, scale) = balance(m);
    let res = if bits <= 53 {
        solve_with(&b, &scale, 0.0f64, want_vectors)
    } else {
        solve_with(&b, &scale, Mp::from_f64(0.0, bits), want_vectors)
    };
    match res {
        Ok((values, vectors)) => Ok(EigenDecomposition { values, vectors, bits }),
        Err(row) => Err(Error::EigenNoConvergence { row, bits }),
    }
}

/// Largest mantissa width tried by [`eig_adaptive`].
pub const MAX_BITS: usize = 2048;

/// Eigen-decomposition whose precision is raised until the eigenvalue of
/// largest real part is resolved.
///
/// A solve at `b` bits is accepted when every eigenvalue has a strictly
/// negative real part of magnitude at least `‖B‖·2^{-b/2}`, `B` being the
/// balanced matrix. The half-width margin leaves room for eigenvalue
/// condition numbers up to `2^{b/2}`. If the matrix genuinely has eigenvalues
/// on or right of the imaginary axis, the widest solve is returned.
pub fn eig_adaptive(m: &DMatrix<Complex64>, want_vectors: bool) -> Result<EigenDecomposition> {
    let (b, _) = balance(m);
    let norm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut bits = 53usize;
    loop {
        let dec = eig_at_precision(m, bits, want_vectors)?;
        if norm == 0.0 || bits >= MAX_BITS {
            return Ok(dec);
        }
        let floor = norm * 2f64.powf(-(bits as f64) / 2.0);
        let resolved = dec.values.iter().all(|z| z.re < 0.0 && -z.re >= floor);
        if resolved {
            return Ok(dec);
        }
        // A nonnegative real part may simply be unresolved; give it one more
        // chance at very high precision before reporting it.
        bits = if bits == 53 { 128 } else { bits * 2 };
    }
}
