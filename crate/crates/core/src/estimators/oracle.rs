//! Brute-force tuple enumeration. This path is the correctness reference
//! for the inclusion–exclusion implementations and the only route for the
//! generic `X̂_q`; costs grow as `M!/(M−q)!` trace evaluations.

use itertools::Itertools;
use num_complex::Complex64 as C64;

use super::fast::RawSums;
use crate::error::Result;
use crate::linalg::{kron, trace_of_product, CMat};
use crate::protocol::ShadowSnapshot;
use crate::states::Observable;

/// `Σ_{r1≠r2} Tr(ρ̂₁ρ̂₂A²) − Tr(ρ̂₁Aρ̂₂A)` and its three-index analogue by
/// literal loops over ordered tuples of distinct indices.
pub(super) fn pair_triple_sums(
    shadows: &[ShadowSnapshot],
    a: &Observable,
    want_triple: bool,
) -> Result<RawSums> {
    let m = shadows.len();
    let dense: Vec<CMat> = shadows.iter().map(|s| s.dense()).collect();
    let a2 = a.mat().dot(a.mat());
    // per-round products reused across tuples
    let da: Vec<CMat> = dense.iter().map(|d| d.dot(a.mat())).collect();
    let da2: Vec<CMat> = dense.iter().map(|d| d.dot(&a2)).collect();
    let ada: Vec<CMat> = da.iter().map(|x| a.mat().dot(x)).collect();

    let mut pair = C64::new(0.0, 0.0);
    for r1 in 0..m {
        for r2 in 0..m {
            if r1 == r2 {
                continue;
            }
            pair += trace_of_product(&dense[r1], &da2[r2]);
            pair -= trace_of_product(&da[r1], &da[r2]);
        }
    }

    let triple = if want_triple {
        let mut acc = C64::new(0.0, 0.0);
        for r1 in 0..m {
            for r2 in 0..m {
                if r1 == r2 {
                    continue;
                }
                let left = dense[r1].dot(&dense[r2]);
                for r3 in 0..m {
                    if r3 == r1 || r3 == r2 {
                        continue;
                    }
                    acc += trace_of_product(&left, &da2[r3]);
                    acc -= trace_of_product(&left, &ada[r3]);
                }
            }
        }
        Some(acc.re)
    } else {
        None
    };

    Ok(RawSums {
        pair: pair.re,
        triple,
    })
}

/// `X̂_q = (M−q)!/M! Σ_{ordered distinct tuples} Tr(O^{(q)} ⊗_i ρ̂^{(r_i)})`.
pub(super) fn xq_enumeration(shadows: &[ShadowSnapshot], operator: &CMat, q: u32) -> Result<f64> {
    let m = shadows.len();
    let dense: Vec<CMat> = shadows.iter().map(|s| s.dense()).collect();
    let mut acc = C64::new(0.0, 0.0);
    let mut count = 0u64;
    for tuple in (0..m).permutations(q as usize) {
        let mut product = dense[tuple[0]].clone();
        for &r in &tuple[1..] {
            product = kron(&product, &dense[r]);
        }
        acc += trace_of_product(operator, &product);
        count += 1;
    }
    Ok(acc.re / count as f64)
}
