//! Haar-random unitaries from the circular unitary ensemble.

use ndarray::Array2;
use ndarray_linalg::QRSquare;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{dagger, identity, max_abs, CMat, DIM_CAP, UNITARITY_TOL};
use crate::error::{Error, Result};
use crate::stream::SeededStream;

/// Max-abs entry of `U†U − 1`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let d = u.nrows();
    max_abs(&(dagger(u).dot(u) - identity(d)))
}

/// Draw a Haar-distributed `dim × dim` unitary.
///
/// A complex standard-Gaussian matrix is QR-factorized and the triangular
/// factor's diagonal phases are divided out (`U = Q · diag(r_jj/|r_jj|)`),
/// which makes the distribution exactly Haar rather than merely
/// QR-convention dependent.
pub fn cue_sample(dim: usize, stream: &SeededStream) -> Result<CMat> {
    if dim == 0 {
        return Err(Error::validation("cue_sample needs dim >= 1"));
    }
    if dim > DIM_CAP {
        return Err(Error::capacity(format!(
            "cue_sample dim {dim} exceeds cap {DIM_CAP}"
        )));
    }
    let mut rng = stream.rng();
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let gauss = Array2::from_shape_fn((dim, dim), |_| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal) * inv_sqrt2,
            rng.sample::<f64, _>(StandardNormal) * inv_sqrt2,
        )
    });
    let (q, r) = gauss
        .qr_square()
        .map_err(|e| Error::numerical(format!("QR factorization failed: {e}")))?;
    let mut u = q;
    for (j, mut col) in u.columns_mut().into_iter().enumerate() {
        let rjj = r[[j, j]];
        let norm = rjj.norm();
        // A zero diagonal has probability zero; keep the column as-is then.
        if norm > 0.0 {
            let phase = rjj / norm;
            col.mapv_inplace(|z| z * phase);
        }
    }
    let defect = unitarity_defect(&u);
    if defect > UNITARITY_TOL {
        return Err(Error::numerical(format!(
            "sampled unitary defect {defect:.3e} exceeds {UNITARITY_TOL:.1e}"
        )));
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_by_one_is_unit_modulus() {
        let u = cue_sample(1, &SeededStream::new(5)).unwrap();
        assert_abs_diff_eq!(u[[0, 0]].norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn unitary_within_tolerance() {
        for (dim, seed) in [(2usize, 0u64), (3, 1), (8, 2), (17, 3)] {
            let u = cue_sample(dim, &SeededStream::new(seed)).unwrap();
            assert!(unitarity_defect(&u) <= UNITARITY_TOL);
        }
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(matches!(
            cue_sample(0, &SeededStream::new(0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn reproducible_from_stream() {
        let s = SeededStream::new(99).fork(4);
        let a = cue_sample(6, &s).unwrap();
        let b = cue_sample(6, &s).unwrap();
        assert_eq!(a, b);
    }

    /// CUE moment oracle: E|Tr U|² = 1.
    #[test]
    fn trace_second_moment_matches_cue() {
        let root = SeededStream::new(123);
        let samples = 100_000u64;
        let mut acc = 0.0f64;
        for i in 0..samples {
            let u = cue_sample(2, &root.fork(i)).unwrap();
            acc += super::super::trace(&u).norm_sqr();
        }
        let mean = acc / samples as f64;
        assert!(
            (mean - 1.0).abs() < 0.02,
            "E|Tr U|^2 = {mean}, expected 1.00 ± 0.02"
        );
    }
}
