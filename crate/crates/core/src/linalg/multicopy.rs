//! Permutation operators and partial traces over tensor copies of one
//! Hilbert space.
//!
//! Indices over `q` copies of a `local_dim`-dimensional space are mixed-radix
//! digits with copy 0 most significant, matching [`super::kron`].

use ndarray::Array2;
use num_complex::Complex64 as C64;

use super::{CMat, DIM_CAP};
use crate::error::{Error, Result};

fn copies_dim(q: u32, local_dim: usize, what: &str) -> Result<usize> {
    if local_dim == 0 {
        return Err(Error::validation(format!("{what}: local_dim must be >= 1")));
    }
    let mut total: usize = 1;
    for _ in 0..q {
        total = total
            .checked_mul(local_dim)
            .filter(|&t| t <= DIM_CAP)
            .ok_or_else(|| {
                Error::capacity(format!(
                    "{what}: local_dim^q = {local_dim}^{q} exceeds cap {DIM_CAP}"
                ))
            })?;
    }
    Ok(total)
}

fn digits(mut index: usize, q: u32, local_dim: usize) -> Vec<usize> {
    let mut out = vec![0usize; q as usize];
    for slot in (0..q as usize).rev() {
        out[slot] = index % local_dim;
        index /= local_dim;
    }
    out
}

fn index_of(digits: &[usize], local_dim: usize) -> usize {
    digits.iter().fold(0usize, |acc, &d| acc * local_dim + d)
}

/// Operator of the permutation `π` on `q` copies:
/// `π |i_1,…,i_q⟩ = |i_{π(1)},…,i_{π(q)}⟩` with `perm[k] = π(k+1) − 1`
/// zero-based. Entries are 0/1; `π†π = 1`.
pub fn general_permutation_operator(perm: &[usize], local_dim: usize) -> Result<CMat> {
    let q = perm.len() as u32;
    if q == 0 || q > 4 {
        return Err(Error::validation(format!(
            "general_permutation_operator supports 1 <= q <= 4 copies, got {q}"
        )));
    }
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return Err(Error::validation(format!(
                "{perm:?} is not a permutation of 0..{}",
                perm.len()
            )));
        }
        seen[p] = true;
    }
    let total = copies_dim(q, local_dim, "general_permutation_operator")?;
    let mut op = Array2::zeros((total, total));
    let one = C64::new(1.0, 0.0);
    for col in 0..total {
        let col_digits = digits(col, q, local_dim);
        let row_digits: Vec<usize> = perm.iter().map(|&p| col_digits[p]).collect();
        op[[index_of(&row_digits, local_dim), col]] = one;
    }
    Ok(op)
}

/// Cyclic shift `Π_(q) |i_1,…,i_q⟩ = |i_2,…,i_q,i_1⟩`.
pub fn cyclic_permutation_operator(q: u32, local_dim: usize) -> Result<CMat> {
    if q == 0 {
        return Err(Error::validation("cyclic_permutation_operator needs q >= 1"));
    }
    let total = copies_dim(q, local_dim, "cyclic_permutation_operator")?;
    let mut op = Array2::zeros((total, total));
    let one = C64::new(1.0, 0.0);
    let qs = q as usize;
    for col in 0..total {
        let col_digits = digits(col, q, local_dim);
        let mut row_digits = vec![0usize; qs];
        for k in 0..qs {
            row_digits[k] = col_digits[(k + 1) % qs];
        }
        op[[index_of(&row_digits, local_dim), col]] = one;
    }
    Ok(op)
}

/// Trace out every copy not listed in `keep` (zero-based, strictly
/// ascending). `keep = []` reduces to the scalar trace as a 1×1 matrix.
pub fn partial_trace(m: &CMat, keep: &[usize], local_dim: usize) -> Result<CMat> {
    let total = super::check_square(m, "partial_trace input")?;
    let mut q = 0u32;
    let mut acc = 1usize;
    while acc < total {
        acc = acc.checked_mul(local_dim).ok_or_else(|| {
            Error::validation(format!(
                "dimension {total} is not a power of local_dim {local_dim}"
            ))
        })?;
        q += 1;
        if local_dim == 1 {
            break;
        }
    }
    if acc != total || (local_dim == 1 && total != 1) {
        return Err(Error::validation(format!(
            "dimension {total} is not a power of local_dim {local_dim}"
        )));
    }
    for w in keep.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::validation("keep indices must be strictly ascending"));
        }
    }
    if let Some(&max) = keep.last() {
        if max >= q as usize {
            return Err(Error::validation(format!(
                "keep index {max} out of range for {q} copies"
            )));
        }
    }

    let kept_dim = local_dim.pow(keep.len() as u32);
    let mut out: CMat = Array2::zeros((kept_dim, kept_dim));
    for row in 0..total {
        let rd = digits(row, q, local_dim);
        'col: for col in 0..total {
            let cd = digits(col, q, local_dim);
            for c in 0..q as usize {
                if !keep.contains(&c) && rd[c] != cd[c] {
                    continue 'col;
                }
            }
            let ri = index_of(&keep.iter().map(|&c| rd[c]).collect::<Vec<_>>(), local_dim);
            let ci = index_of(&keep.iter().map(|&c| cd[c]).collect::<Vec<_>>(), local_dim);
            out[[ri, ci]] += m[[row, col]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, kron, matmul, max_abs, random_matrix, trace};
    use crate::stream::SeededStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn swap_is_involution_with_01_entries() {
        let s = cyclic_permutation_operator(2, 2).unwrap();
        assert!(s.iter().all(|z| (z.re == 0.0 || z.re == 1.0) && z.im == 0.0));
        assert!(max_abs(&(s.dot(&s) - identity(4))) == 0.0);
    }

    #[test]
    fn cyclic_order_three() {
        for local_dim in [2usize, 3] {
            let p = cyclic_permutation_operator(3, local_dim).unwrap();
            let p3 = p.dot(&p).dot(&p);
            assert!(max_abs(&(p3 - identity(local_dim.pow(3)))) == 0.0);
        }
    }

    #[test]
    fn swap_trace_identity() {
        let s = SeededStream::new(21);
        let x = random_matrix(2, &s.fork(0));
        let y = random_matrix(2, &s.fork(1));
        let swap = cyclic_permutation_operator(2, 2).unwrap();
        let lhs = trace(&swap.dot(&kron(&x, &y)));
        let rhs = trace(&x.dot(&y));
        assert_abs_diff_eq!(lhs.re, rhs.re, epsilon = 1e-12);
        assert_abs_diff_eq!(lhs.im, rhs.im, epsilon = 1e-12);
    }

    #[test]
    fn identity_permutation_and_transposition() {
        let id = general_permutation_operator(&[0, 1, 2], 2).unwrap();
        assert!(max_abs(&(id - identity(8))) == 0.0);
        let transposition = general_permutation_operator(&[1, 0], 3).unwrap();
        let cyclic = cyclic_permutation_operator(2, 3).unwrap();
        assert!(max_abs(&(transposition - cyclic)) == 0.0);
    }

    /// Average of `π† Π_(3) π` over the six 3-copy permutations equals
    /// `(Π_(3) + Π_(3)²)/2`.
    #[test]
    fn scrambled_cyclic_three_copies() {
        let local_dim = 2usize;
        let cyc = cyclic_permutation_operator(3, local_dim).unwrap();
        let perms: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut acc: CMat = Array2::zeros((8, 8));
        for perm in perms {
            let p = general_permutation_operator(&perm, local_dim).unwrap();
            acc = acc + crate::linalg::dagger(&p).dot(&cyc).dot(&p);
        }
        acc.mapv_inplace(|z| z / 6.0);
        let expected = (&cyc + &cyc.dot(&cyc)).mapv(|z| z * 0.5);
        assert!(max_abs(&(acc - expected)) < 1e-14);
    }

    #[test]
    fn partial_trace_all_copies_is_scalar_trace() {
        let s = SeededStream::new(22);
        let m = random_matrix(8, &s);
        let t = partial_trace(&m, &[], 2).unwrap();
        assert_eq!(t.dim(), (1, 1));
        let full = trace(&m);
        assert_abs_diff_eq!(t[[0, 0]].re, full.re, epsilon = 1e-12);
        assert_abs_diff_eq!(t[[0, 0]].im, full.im, epsilon = 1e-12);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let s = SeededStream::new(23);
        let x = random_matrix(3, &s.fork(0));
        let y = random_matrix(3, &s.fork(1));
        let reduced = partial_trace(&kron(&x, &y), &[0], 3).unwrap();
        let expected = x.mapv(|v| v * trace(&y));
        assert!(max_abs(&(reduced - expected)) < 1e-12);
    }

    /// Independent index-summation oracle on a random two-copy matrix.
    #[test]
    fn partial_trace_matches_double_sum_oracle() {
        let d = 2usize;
        let m = random_matrix(d * d, &SeededStream::new(24));
        let got = partial_trace(&m, &[0], d).unwrap();
        let mut oracle: CMat = Array2::zeros((d, d));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    oracle[[i, j]] += m[[i * d + k, j * d + k]];
                }
            }
        }
        assert!(max_abs(&(got - oracle)) < 1e-12);
    }

    #[test]
    fn caps_and_validation() {
        assert!(matches!(
            cyclic_permutation_operator(7, 4),
            Err(crate::Error::Capacity(_))
        ));
        assert!(matches!(
            general_permutation_operator(&[0, 0], 2),
            Err(crate::Error::Validation(_))
        ));
        let m = identity(6);
        assert!(matches!(
            partial_trace(&m, &[0], 2),
            Err(crate::Error::Validation(_))
        ));
        let m8 = identity(8);
        assert!(matches!(
            partial_trace(&m8, &[3], 2),
            Err(crate::Error::Validation(_))
        ));
    }

    #[test]
    fn matmul_checked_helper() {
        let a = identity(2);
        assert!(matmul(&a, &a).is_ok());
    }
}
