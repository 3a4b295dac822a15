//! Hermitian eigendecomposition on top of LAPACK `zheev`.

use ndarray::Array1;
use ndarray_linalg::{Eigh, UPLO};

use super::{all_finite, check_square, hermiticity_defect, CMat, HERMITICITY_TOL};
use crate::error::{Error, Result};

/// Spectral decomposition `H = V Λ V†` with eigenvalues ascending and
/// eigenvectors as the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Array1<f64>,
    pub vectors: CMat,
}

/// Eigendecompose a Hermitian matrix.
///
/// The input is accepted when its max-abs Hermiticity defect is at most
/// [`HERMITICITY_TOL`] and is symmetrized as `(H + H†)/2` before the solve,
/// absorbing roundoff from repeated products upstream. Inputs beyond the
/// tolerance are rejected with the offending defect in the message.
pub fn hermitian_eig(h: &CMat) -> Result<HermitianEigen> {
    let d = check_square(h, "hermitian_eig input")?;
    if d == 0 {
        return Err(Error::validation("hermitian_eig input is empty"));
    }
    if !all_finite(h) {
        return Err(Error::numerical("hermitian_eig input has non-finite entries"));
    }
    let defect = hermiticity_defect(h);
    if defect > HERMITICITY_TOL {
        return Err(Error::validation(format!(
            "matrix is not Hermitian: max-abs defect {defect:.3e} exceeds {HERMITICITY_TOL:.1e}"
        )));
    }
    let sym = (h + &super::dagger(h)).mapv(|z| z * 0.5);
    let (values, raw) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e}")))?;
    // LAPACK sees the transpose of our row-major buffer, i.e. the complex
    // conjugate of the Hermitian input, so the returned columns are the
    // conjugates of the eigenvectors.
    let vectors = raw.mapv(|z| z.conj());

    // Cheap residual spot check on a few columns; the full reconstruction
    // invariant is exercised in tests.
    let scale = super::max_abs(&sym).max(1.0);
    for idx in [0usize, d / 2, d - 1] {
        let v = vectors.column(idx);
        let hv = sym.dot(&v);
        let mut resid = 0.0f64;
        for i in 0..d {
            resid = resid.max((hv[i] - v[i] * values[idx]).norm());
        }
        if resid > 1e-7 * scale {
            return Err(Error::numerical(format!(
                "eigenvector residual {resid:.3e} out of tolerance for column {idx}"
            )));
        }
    }
    Ok(HermitianEigen { values, vectors })
}

impl HermitianEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `V Λ V†`, for reconstruction checks.
    pub fn reconstruct(&self) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
            let w = self.values[j];
            col.mapv_inplace(|z| z * w);
        }
        scaled.dot(&super::dagger(&self.vectors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dagger, identity, max_abs};
    use crate::stream::SeededStream;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use num_complex::Complex64 as C64;

    fn random_hermitian(d: usize, seed: u64) -> CMat {
        let m = crate::linalg::random_matrix(d, &SeededStream::new(seed));
        (&m + &dagger(&m)).mapv(|z| z * 0.5)
    }

    #[test]
    fn diagonal_input_sorted_ascending() {
        let h = array![
            [C64::new(3.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(2.0, 0.0)],
        ];
        let eig = hermitian_eig(&h).unwrap();
        assert_abs_diff_eq!(eig.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn pauli_x_spectrum() {
        let h = array![
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        ];
        let eig = hermitian_eig(&h).unwrap();
        assert_abs_diff_eq!(eig.values[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig.values[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let h = random_hermitian(16, 11);
        let eig = hermitian_eig(&h).unwrap();
        let err = max_abs(&(eig.reconstruct() - &h));
        assert!(err < 1e-10 * max_abs(&h).max(1.0), "reconstruction error {err:.3e}");
    }

    #[test]
    fn eigenvectors_orthonormal() {
        let h = random_hermitian(12, 12);
        let eig = hermitian_eig(&h).unwrap();
        let gram = dagger(&eig.vectors).dot(&eig.vectors);
        assert!(max_abs(&(gram - identity(12))) < 1e-10);
    }

    #[test]
    fn non_hermitian_rejected_with_defect() {
        let mut h = random_hermitian(4, 13);
        h[[0, 1]] += C64::new(1e-3, 0.0);
        let err = hermitian_eig(&h).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("not Hermitian"), "{msg}");
        assert!(matches!(err, crate::Error::Validation(_)));
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let h = random_hermitian(10, 14);
        let a = hermitian_eig(&h).unwrap();
        let b = hermitian_eig(&h).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }
}
