//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `ndarray::Array2<Complex64>` in standard (row-major)
//! layout. Multi-site systems order tensor factors so that site 0 is the
//! most significant index digit: `kron(a, b)` puts `a` on the earlier
//! sites. All kernels are pure functions; matrices are never mutated
//! through shared references.

mod eig;
mod multicopy;
mod random;

pub use eig::{hermitian_eig, HermitianEigen};
pub use multicopy::{cyclic_permutation_operator, general_permutation_operator, partial_trace};
pub use random::{cue_sample, unitarity_defect};

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Array2<C64>;

/// Hard cap on dense matrix dimension (rows), matching the largest systems
/// exercised by the experiments (d = 2^N with N ≤ 12, or d = N+1).
pub const DIM_CAP: usize = 4096;

/// Tolerance on max-abs Hermiticity defect accepted by [`hermitian_eig`]
/// and the state/observable constructors.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Max-abs unitarity defect guaranteed by [`cue_sample`].
pub const UNITARITY_TOL: f64 = 1e-12;

pub fn identity(dim: usize) -> CMat {
    Array2::eye(dim)
}

/// Conjugate transpose, materialized in standard layout.
pub fn dagger(m: &CMat) -> CMat {
    let (r, c) = m.dim();
    Array2::from_shape_fn((c, r), |(i, j)| m[[j, i]].conj())
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn all_finite(m: &CMat) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Max-abs deviation of `m` from its conjugate transpose.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    let (r, c) = m.dim();
    if r != c {
        return f64::INFINITY;
    }
    let mut defect = 0.0f64;
    for i in 0..r {
        for j in i..r {
            defect = defect.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    defect
}

pub(crate) fn check_square(m: &CMat, what: &str) -> Result<usize> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::validation(format!("{what} must be square, got {r}x{c}")));
    }
    Ok(r)
}

/// Checked matrix product.
pub fn matmul(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.ncols() != b.nrows() {
        return Err(Error::validation(format!(
            "matmul shape mismatch: {:?} x {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.dot(b))
}

pub fn trace(m: &CMat) -> C64 {
    m.diag().sum()
}

/// Tr(a·b) without forming the product.
pub fn trace_of_product(a: &CMat, b: &CMat) -> C64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let row = a.row(i);
        let col = b.column(i);
        for (x, y) in row.iter().zip(col.iter()) {
            acc += x * y;
        }
    }
    acc
}

/// Commutator `a·b − b·a`.
pub fn commutator(a: &CMat, b: &CMat) -> Result<CMat> {
    let n = check_square(a, "commutator lhs")?;
    if b.dim() != (n, n) {
        return Err(Error::validation(format!(
            "commutator shape mismatch: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.dot(b) - b.dot(a))
}

/// `m^j` by repeated multiplication; `j = 0` gives the identity.
pub fn matrix_power(m: &CMat, j: u32) -> Result<CMat> {
    let n = check_square(m, "matrix_power input")?;
    let mut acc = identity(n);
    for _ in 0..j {
        acc = acc.dot(m);
    }
    Ok(acc)
}

/// Kronecker product with `a` on the more significant index digits.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

/// 2×2 complex matrix, row-major `[m00, m01, m10, m11]`. Used for per-site
/// factors of product states, shadows, and single-site observable terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([C64::new(0.0, 0.0); 4]);

    pub fn identity() -> Mat2 {
        Mat2([
            C64::new(1.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(1.0, 0.0),
        ])
    }

    pub fn from_rows(m00: C64, m01: C64, m10: C64, m11: C64) -> Mat2 {
        Mat2([m00, m01, m10, m11])
    }

    pub fn mul(&self, o: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &o.0;
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }

    pub fn add(&self, o: &Mat2) -> Mat2 {
        let mut out = *self;
        for (x, y) in out.0.iter_mut().zip(o.0.iter()) {
            *x += y;
        }
        out
    }

    pub fn scale(&self, s: C64) -> Mat2 {
        let mut out = *self;
        for x in out.0.iter_mut() {
            *x *= s;
        }
        out
    }

    pub fn dagger(&self) -> Mat2 {
        Mat2([
            self.0[0].conj(),
            self.0[2].conj(),
            self.0[1].conj(),
            self.0[3].conj(),
        ])
    }

    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    pub fn to_mat(&self) -> CMat {
        Array2::from_shape_vec((2, 2), self.0.to_vec()).expect("2x2 shape")
    }
}

/// Dense matrix of `⊗_l factors[l]` (site 0 most significant).
pub fn materialize_factors(factors: &[Mat2]) -> CMat {
    let mut acc = identity(1);
    for f in factors {
        acc = kron(&acc, &f.to_mat());
    }
    acc
}

/// In-place `(⊗_l factors[l]) · m` for an `m` on 2^N-dimensional site space.
pub fn apply_factored_left(factors: &[Mat2], m: &mut CMat) {
    let d = m.nrows();
    let cols = m.ncols();
    debug_assert_eq!(d, 1usize << factors.len());
    let buf = m.as_slice_mut().expect("standard layout");
    let n = factors.len();
    for (l, f) in factors.iter().enumerate() {
        let mask = 1usize << (n - 1 - l);
        let [f00, f01, f10, f11] = f.0;
        for i0 in 0..d {
            if i0 & mask != 0 {
                continue;
            }
            let i1 = i0 | mask;
            let (r0, r1) = (i0 * cols, i1 * cols);
            for j in 0..cols {
                let x = buf[r0 + j];
                let y = buf[r1 + j];
                buf[r0 + j] = f00 * x + f01 * y;
                buf[r1 + j] = f10 * x + f11 * y;
            }
        }
    }
}

/// In-place `m · (⊗_l factors[l])`.
pub fn apply_factored_right(m: &mut CMat, factors: &[Mat2]) {
    let rows = m.nrows();
    let d = m.ncols();
    debug_assert_eq!(d, 1usize << factors.len());
    let buf = m.as_slice_mut().expect("standard layout");
    let n = factors.len();
    for (l, f) in factors.iter().enumerate() {
        let mask = 1usize << (n - 1 - l);
        let [f00, f01, f10, f11] = f.0;
        for i in 0..rows {
            let base = i * d;
            for j0 in 0..d {
                if j0 & mask != 0 {
                    continue;
                }
                let j1 = j0 | mask;
                let x = buf[base + j0];
                let y = buf[base + j1];
                buf[base + j0] = x * f00 + y * f10;
                buf[base + j1] = x * f01 + y * f11;
            }
        }
    }
}

/// Kahan-compensated scalar accumulator for long Monte-Carlo sums.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Standard-Gaussian complex matrix; test fixture shared across modules.
#[cfg(test)]
pub(crate) fn random_matrix(d: usize, stream: &crate::stream::SeededStream) -> CMat {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut rng = stream.rng();
    Array2::from_shape_fn((d, d), |_| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::SeededStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn commutator_of_matrix_with_itself_vanishes() {
        let m = random_matrix(6, &SeededStream::new(1));
        let c = commutator(&m, &m).unwrap();
        assert!(max_abs(&c) < 1e-12);
    }

    #[test]
    fn trace_of_kron_factorizes() {
        let s = SeededStream::new(2);
        let x = random_matrix(3, &s.fork(0));
        let y = random_matrix(4, &s.fork(1));
        let lhs = trace(&kron(&x, &y));
        let rhs = trace(&x) * trace(&y);
        assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-12);
        assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-12);
    }

    #[test]
    fn matrix_power_matches_repeated_multiplication() {
        let m = random_matrix(8, &SeededStream::new(3));
        let cubed = matrix_power(&m, 3).unwrap();
        let manual = m.dot(&m).dot(&m);
        assert!(max_abs(&(cubed - manual)) < 1e-10);
    }

    #[test]
    fn shape_mismatch_is_validation_error() {
        let a = identity(2);
        let b = identity(3);
        assert!(matches!(matmul(&a, &b), Err(Error::Validation(_))));
        assert!(matches!(commutator(&a, &b), Err(Error::Validation(_))));
    }

    #[test]
    fn factored_application_agrees_with_dense_kron() {
        let s = SeededStream::new(4);
        let factors: Vec<Mat2> = (0..3)
            .map(|i| {
                let m = random_matrix(2, &s.fork(i));
                Mat2([m[[0, 0]], m[[0, 1]], m[[1, 0]], m[[1, 1]]])
            })
            .collect();
        let big = materialize_factors(&factors);
        let target = random_matrix(8, &s.fork(10));

        let mut left = target.clone();
        apply_factored_left(&factors, &mut left);
        assert!(max_abs(&(&left - &big.dot(&target))) < 1e-12);

        let mut right = target.clone();
        apply_factored_right(&mut right, &factors);
        assert!(max_abs(&(&right - &target.dot(&big))) < 1e-12);
    }

    #[test]
    fn trace_of_product_matches_dense() {
        let s = SeededStream::new(5);
        let a = random_matrix(5, &s.fork(0));
        let b = random_matrix(5, &s.fork(1));
        let direct = trace(&a.dot(&b));
        let fused = trace_of_product(&a, &b);
        assert_abs_diff_eq!(direct.re, fused.re, epsilon = 1e-12);
        assert_abs_diff_eq!(direct.im, fused.im, epsilon = 1e-12);
    }
}
