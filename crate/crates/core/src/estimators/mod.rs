//! Unbiased U-statistics estimators of the QFI lower bounds from classical
//! shadows.
//!
//! With `M` shadows `ρ̂^(r)`, the estimators average a kernel over ordered
//! tuples of distinct round indices:
//!
//! ```text
//! F̂_0 = (4/2!) C(M,2)⁻¹ Σ_{r1≠r2}      Tr(ρ̂^(r1) [ρ̂^(r2), A] A)
//! F̂_1 = 2 F̂_0 − (4/3!) C(M,3)⁻¹ Σ_{r1≠r2≠r3} Tr(ρ̂^(r1) ρ̂^(r2) [ρ̂^(r3), A] A)
//! X̂_q = (1/q!) C(M,q)⁻¹ Σ_{r1≠…≠rq}   Tr(O^(q) ρ̂^(r1) ⊗ … ⊗ ρ̂^(rq))
//! F̂_n = 2 Σ_{q=0}^n C(n+1, q+1) (−1)^q X̂_{q+2}
//! ```
//!
//! Three evaluation paths produce identical values: literal tuple
//! enumeration (`oracle`), inclusion–exclusion on running sums over dense
//! shadows (`fast`, `O(M d³)` instead of `O(M² d³)`/`O(M³ d³)`), and the
//! same inclusion–exclusion with per-site factored shadows and a
//! single-site-sum observable (`factored-fast`). Tuple enumeration for the
//! generic `X̂_q` has no fast path; orders above one fall back to it.

mod fast;
mod oracle;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fisher::multicopy_operator;
use crate::linalg::CMat;
use crate::protocol::ShadowSnapshot;
use crate::states::Observable;

/// Which evaluation path produced an estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Oracle,
    Fast,
    FactoredFast,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Oracle => "oracle",
            Method::Fast => "fast",
            Method::FactoredFast => "factored-fast",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EstimateResult {
    pub value: f64,
    /// Bound order `n` for `F̂_n`; copy order `q` for `X̂_q`.
    pub order: u32,
    /// Number of shadows used.
    pub rounds: usize,
    pub method: Method,
}

/// Intermediate ordered-tuple sums shared by `F̂_0` and `F̂_1`:
/// `pair_sum = Σ_{r1≠r2} Tr(ρ̂₁[ρ̂₂,A]A)` and
/// `triple_sum = Σ_{r1≠r2≠r3} Tr(ρ̂₁ρ̂₂[ρ̂₃,A]A)` (present for `M ≥ 3`).
#[derive(Clone, Copy, Debug)]
pub struct PairTripleSums {
    pub pair_sum: f64,
    pub triple_sum: Option<f64>,
    pub rounds: usize,
    pub method: Method,
}

fn check_input(shadows: &[ShadowSnapshot], a: &Observable, min_rounds: usize) -> Result<()> {
    if shadows.len() < min_rounds {
        return Err(Error::insufficient(format!(
            "estimator needs at least {min_rounds} shadows, got {}",
            shadows.len()
        )));
    }
    let d = a.dim();
    if let Some(bad) = shadows.iter().find(|s| s.dim() != d) {
        return Err(Error::validation(format!(
            "shadow dimension {} does not match observable dimension {d}",
            bad.dim()
        )));
    }
    Ok(())
}

fn pick_method(shadows: &[ShadowSnapshot], a: &Observable) -> Method {
    let all_factored = shadows.iter().all(|s| s.factors().is_some());
    if all_factored && a.site_terms().is_some() {
        Method::FactoredFast
    } else {
        Method::Fast
    }
}

fn sums_with(
    shadows: &[ShadowSnapshot],
    a: &Observable,
    method: Method,
    want_triple: bool,
) -> Result<PairTripleSums> {
    let sums = match method {
        Method::Oracle => oracle::pair_triple_sums(shadows, a, want_triple)?,
        Method::Fast => fast::dense_sums(shadows, a, want_triple)?,
        Method::FactoredFast => fast::factored_sums(shadows, a, want_triple)?,
    };
    Ok(PairTripleSums {
        pair_sum: sums.pair,
        triple_sum: sums.triple,
        rounds: shadows.len(),
        method,
    })
}

/// The inclusion–exclusion intermediate sums with the best applicable
/// method (factored when shadows and observable both factorize).
pub fn fast_pair_triple_sums(shadows: &[ShadowSnapshot], a: &Observable) -> Result<PairTripleSums> {
    check_input(shadows, a, 2)?;
    sums_with(shadows, a, pick_method(shadows, a), shadows.len() >= 3)
}

fn f0_from(sums: &PairTripleSums) -> f64 {
    let m = sums.rounds as f64;
    4.0 * sums.pair_sum / (m * (m - 1.0))
}

fn f1_from(sums: &PairTripleSums) -> Result<f64> {
    let m = sums.rounds as f64;
    let triple = sums
        .triple_sum
        .ok_or_else(|| Error::insufficient("triple sum needs at least 3 shadows"))?;
    Ok(2.0 * f0_from(sums) - 4.0 * triple / (m * (m - 1.0) * (m - 2.0)))
}

pub fn estimate_f0_with(
    shadows: &[ShadowSnapshot],
    a: &Observable,
    method: Method,
) -> Result<EstimateResult> {
    check_input(shadows, a, 2)?;
    let sums = sums_with(shadows, a, method, false)?;
    Ok(EstimateResult {
        value: f0_from(&sums),
        order: 0,
        rounds: shadows.len(),
        method,
    })
}

/// `F̂_0` with the best applicable method.
pub fn estimate_f0(shadows: &[ShadowSnapshot], a: &Observable) -> Result<EstimateResult> {
    estimate_f0_with(shadows, a, pick_method(shadows, a))
}

pub fn estimate_f1_with(
    shadows: &[ShadowSnapshot],
    a: &Observable,
    method: Method,
) -> Result<EstimateResult> {
    check_input(shadows, a, 3)?;
    let sums = sums_with(shadows, a, method, true)?;
    Ok(EstimateResult {
        value: f1_from(&sums)?,
        order: 1,
        rounds: shadows.len(),
        method,
    })
}

/// `F̂_1` with the best applicable method.
pub fn estimate_f1(shadows: &[ShadowSnapshot], a: &Observable) -> Result<EstimateResult> {
    estimate_f1_with(shadows, a, pick_method(shadows, a))
}

/// `F̂_0` and `F̂_1` from one pass over the shadows (they share the running
/// sums, so this is cheaper than two separate estimates).
pub fn estimate_f0_f1(
    shadows: &[ShadowSnapshot],
    a: &Observable,
) -> Result<(EstimateResult, EstimateResult)> {
    check_input(shadows, a, 3)?;
    let method = pick_method(shadows, a);
    let sums = sums_with(shadows, a, method, true)?;
    let f0 = EstimateResult {
        value: f0_from(&sums),
        order: 0,
        rounds: shadows.len(),
        method,
    };
    let f1 = EstimateResult {
        value: f1_from(&sums)?,
        order: 1,
        rounds: shadows.len(),
        method,
    };
    Ok((f0, f1))
}

/// Generic `X̂_q` for an explicit `q`-copy operator, by full ordered-tuple
/// enumeration. The tuple count is `M!/(M−q)!`, so `q ≥ 4` is capped at
/// `M ≤ 12`; use the dedicated `F̂_0`/`F̂_1` fast paths for production.
pub fn estimate_xq(shadows: &[ShadowSnapshot], operator: &CMat, q: u32) -> Result<EstimateResult> {
    if q == 0 {
        return Err(Error::validation("X̂_q needs q >= 1"));
    }
    let m = shadows.len();
    if m < q as usize {
        return Err(Error::insufficient(format!(
            "X̂_{q} needs at least {q} shadows, got {m}"
        )));
    }
    if q >= 4 && m > 12 {
        return Err(Error::capacity(format!(
            "oracle X̂_q enumeration for q = {q} is capped at M <= 12 (got M = {m}); \
             use the dedicated F̂_0/F̂_1 fast paths"
        )));
    }
    let d = shadows[0].dim();
    let expected = d.checked_pow(q).filter(|&t| t == operator.nrows());
    if expected.is_none() || operator.nrows() != operator.ncols() {
        return Err(Error::validation(format!(
            "operator dimension {:?} does not match d^q = {d}^{q}",
            operator.dim()
        )));
    }
    let value = oracle::xq_enumeration(shadows, operator, q)?;
    Ok(EstimateResult {
        value,
        order: q,
        rounds: m,
        method: Method::Oracle,
    })
}

/// `F̂_n`: delegates to the dedicated `F̂_0`/`F̂_1` estimators for `n ≤ 1`
/// and combines oracle `X̂_{q+2}` values with hockey-stick coefficients for
/// higher orders.
pub fn estimate_fn(shadows: &[ShadowSnapshot], a: &Observable, n: u32) -> Result<EstimateResult> {
    match n {
        0 => estimate_f0(shadows, a),
        1 => estimate_f1(shadows, a),
        _ => {
            check_input(shadows, a, n as usize + 2)?;
            let mut value = 0.0f64;
            for q in 0..=n {
                let op = multicopy_operator(a, q)?;
                let xq = estimate_xq(shadows, &op, q + 2)?;
                let sign = if q % 2 == 0 { 1.0 } else { -1.0 };
                value += binom_f64(n + 1, q + 1) * sign * xq.value;
            }
            Ok(EstimateResult {
                value: 2.0 * value,
                order: n,
                rounds: shadows.len(),
                method: Method::Oracle,
            })
        }
    }
}

fn binom_f64(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::{bounds_polynomial, multicopy_operator};
    use crate::linalg::cyclic_permutation_operator;
    use crate::protocol::{acquire, MeasurementScheme, ShadowSnapshot, UnitarySource};
    use crate::states::{
        collective_spin_observable, depolarize, ghz_state, random_density_matrix,
        random_observable, Axis, DensityMatrix, HilbertSpec,
    };
    use crate::stream::SeededStream;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        let scale = a.abs().max(b.abs());
        if scale < 1e-13 {
            return (a - b).abs() < 1e-13;
        }
        (a - b).abs() <= tol * scale
    }

    fn qubit_shadows(rho: &DensityMatrix, m: usize, seed: u64) -> Vec<ShadowSnapshot> {
        let scheme = MeasurementScheme::local_qubit(rho.space()).unwrap();
        acquire(rho, &scheme, m, &SeededStream::new(seed)).unwrap()
    }

    fn exact_shadows(rho: &DensityMatrix, m: usize) -> Vec<ShadowSnapshot> {
        (0..m).map(|_| ShadowSnapshot::synthetic_dense(rho.mat().clone())).collect()
    }

    #[test]
    fn exact_shadows_reproduce_f0_f1() {
        let space = HilbertSpec::qubits(2).unwrap();
        let rho = random_density_matrix(space, 3, &SeededStream::new(1)).unwrap();
        let a = random_observable(space, &SeededStream::new(2));
        let series = bounds_polynomial(&rho, &a, 1).unwrap();

        let shadows = exact_shadows(&rho, 5);
        let f0 = estimate_f0(&shadows, &a).unwrap();
        let f1 = estimate_f1(&shadows, &a).unwrap();
        assert!(rel_close(f0.value, series.orders[0], 1e-10), "{} vs {}", f0.value, series.orders[0]);
        assert!(rel_close(f1.value, series.orders[1], 1e-10), "{} vs {}", f1.value, series.orders[1]);
        assert_eq!(f0.method, Method::Fast);
    }

    #[test]
    fn minimum_round_counts_enforced() {
        let space = HilbertSpec::qubits(1).unwrap();
        let rho = random_density_matrix(space, 2, &SeededStream::new(3)).unwrap();
        let a = random_observable(space, &SeededStream::new(4));
        let one = exact_shadows(&rho, 1);
        assert!(matches!(
            estimate_f0(&one, &a),
            Err(Error::InsufficientData(_))
        ));
        let two = exact_shadows(&rho, 2);
        assert!(estimate_f0(&two, &a).is_ok());
        assert!(matches!(
            estimate_f1(&two, &a),
            Err(Error::InsufficientData(_))
        ));
    }

    /// M = 2: the estimator is the average over the two ordered pairs.
    #[test]
    fn two_rounds_single_pair_average() {
        let rho = depolarize(&ghz_state(2).unwrap(), 0.3).unwrap();
        let a = collective_spin_observable(2, Axis::Z).unwrap();
        let shadows = qubit_shadows(&rho, 2, 50);
        let fast = estimate_f0(&shadows, &a).unwrap();
        let oracle = estimate_f0_with(&shadows, &a, Method::Oracle).unwrap();
        assert!(rel_close(fast.value, oracle.value, 1e-12));
    }

    /// M = 3: F̂_1 equals the literal average over the six ordered triples.
    #[test]
    fn three_rounds_triple_average() {
        let rho = depolarize(&ghz_state(2).unwrap(), 0.2).unwrap();
        let a = collective_spin_observable(2, Axis::Z).unwrap();
        let shadows = qubit_shadows(&rho, 3, 51);
        let fast = estimate_f1(&shadows, &a).unwrap();
        let oracle = estimate_f1_with(&shadows, &a, Method::Oracle).unwrap();
        assert!(rel_close(fast.value, oracle.value, 1e-12));
        assert_eq!(fast.method, Method::FactoredFast);
    }

    #[test]
    fn all_methods_agree_on_random_inputs() {
        for seed in 0..6u64 {
            let n = 2 + (seed % 2) as u32;
            let rho = depolarize(&ghz_state(n).unwrap(), 0.25).unwrap();
            let axis = if seed % 3 == 0 {
                Axis::Direction([0.3, -0.8, 0.6])
            } else {
                Axis::Z
            };
            let a = collective_spin_observable(n, axis).unwrap();
            let shadows = qubit_shadows(&rho, 7, 600 + seed);
            let f0_oracle = estimate_f0_with(&shadows, &a, Method::Oracle).unwrap().value;
            let f0_fast = estimate_f0_with(&shadows, &a, Method::Fast).unwrap().value;
            let f0_fac = estimate_f0_with(&shadows, &a, Method::FactoredFast).unwrap().value;
            assert!(rel_close(f0_oracle, f0_fast, 1e-10), "{f0_oracle} {f0_fast}");
            assert!(rel_close(f0_oracle, f0_fac, 1e-10), "{f0_oracle} {f0_fac}");

            let f1_oracle = estimate_f1_with(&shadows, &a, Method::Oracle).unwrap().value;
            let f1_fast = estimate_f1_with(&shadows, &a, Method::Fast).unwrap().value;
            let f1_fac = estimate_f1_with(&shadows, &a, Method::FactoredFast).unwrap().value;
            assert!(rel_close(f1_oracle, f1_fast, 1e-10), "{f1_oracle} {f1_fast}");
            assert!(rel_close(f1_oracle, f1_fac, 1e-10), "{f1_oracle} {f1_fac}");
        }
    }

    #[test]
    fn estimates_invariant_under_shadow_permutation() {
        let rho = depolarize(&ghz_state(2).unwrap(), 0.25).unwrap();
        let a = collective_spin_observable(2, Axis::Z).unwrap();
        let mut shadows = qubit_shadows(&rho, 8, 52);
        let before0 = estimate_f0(&shadows, &a).unwrap().value;
        let before1 = estimate_f1(&shadows, &a).unwrap().value;
        shadows.rotate_left(3);
        shadows.swap(0, 5);
        let after0 = estimate_f0(&shadows, &a).unwrap().value;
        let after1 = estimate_f1(&shadows, &a).unwrap().value;
        assert!((before0 - after0).abs() <= 1e-12 * before0.abs().max(1.0));
        assert!((before1 - after1).abs() <= 1e-12 * before1.abs().max(1.0));
    }

    /// Definitional consistency: 2·X̂_2 with the two-copy operator equals
    /// F̂_0.
    #[test]
    fn xq_consistency_with_f0() {
        let rho = depolarize(&ghz_state(2).unwrap(), 0.3).unwrap();
        let a = collective_spin_observable(2, Axis::Z).unwrap();
        let shadows = qubit_shadows(&rho, 5, 53);
        let op = multicopy_operator(&a, 0).unwrap();
        let x2 = estimate_xq(&shadows, &op, 2).unwrap();
        let f0 = estimate_f0_with(&shadows, &a, Method::Oracle).unwrap();
        assert!(rel_close(2.0 * x2.value, f0.value, 1e-10));
    }

    /// Purity kernel: exact shadows with the swap operator give Tr(ρ²).
    #[test]
    fn xq_swap_gives_purity() {
        let space = HilbertSpec::qubits(1).unwrap();
        let rho = random_density_matrix(space, 2, &SeededStream::new(5)).unwrap();
        let shadows = exact_shadows(&rho, 4);
        let swap = cyclic_permutation_operator(2, 2).unwrap();
        let x2 = estimate_xq(&shadows, &swap, 2).unwrap();
        assert!(rel_close(x2.value, rho.purity(), 1e-12));
    }

    #[test]
    fn estimate_fn_delegates_and_extends() {
        let rho = depolarize(&ghz_state(2).unwrap(), 0.25).unwrap();
        let a = collective_spin_observable(2, Axis::Z).unwrap();
        let shadows = qubit_shadows(&rho, 6, 54);
        let f0 = estimate_f0(&shadows, &a).unwrap();
        let f1 = estimate_f1(&shadows, &a).unwrap();
        let fn0 = estimate_fn(&shadows, &a, 0).unwrap();
        let fn1 = estimate_fn(&shadows, &a, 1).unwrap();
        assert_eq!(f0.value.to_bits(), fn0.value.to_bits());
        assert_eq!(f1.value.to_bits(), fn1.value.to_bits());
        assert_eq!(f0.method, fn0.method);
    }

    /// Exact-shadow degeneracy at higher order: F̂_3 equals the polynomial
    /// route F_3.
    #[test]
    fn estimate_fn_exact_shadow_degeneracy() {
        let space = HilbertSpec::qubits(2).unwrap();
        let rho = random_density_matrix(space, 4, &SeededStream::new(6)).unwrap();
        let a = random_observable(space, &SeededStream::new(7));
        let series = bounds_polynomial(&rho, &a, 3).unwrap();
        let shadows = exact_shadows(&rho, 5);
        let f3 = estimate_fn(&shadows, &a, 3).unwrap();
        assert!(
            rel_close(f3.value, series.orders[3], 1e-9),
            "{} vs {}",
            f3.value,
            series.orders[3]
        );
    }

    #[test]
    fn xq_capacity_cap() {
        let rho = depolarize(&ghz_state(1).unwrap(), 0.5).unwrap();
        let shadows = exact_shadows(&rho, 13);
        let op = crate::linalg::identity(16);
        assert!(matches!(
            estimate_xq(&shadows, &op, 4),
            Err(Error::Capacity(_))
        ));
    }

    /// Monte-Carlo unbiasedness of F̂_0 (small version; the acceptance
    /// suite runs the full protocol check).
    #[test]
    fn f0_unbiased_over_repeated_acquisitions() {
        let rho = depolarize(&ghz_state(2).unwrap(), 0.3).unwrap();
        let a = collective_spin_observable(2, Axis::Z).unwrap();
        let exact = bounds_polynomial(&rho, &a, 0).unwrap().orders[0];
        let scheme = MeasurementScheme::local_qubit(rho.space()).unwrap();
        let reps = 600usize;
        let m = 12usize;
        let root = SeededStream::new(777);
        let mut values = Vec::with_capacity(reps);
        for rep in 0..reps {
            let shadows = acquire(&rho, &scheme, m, &root.fork(rep as u64)).unwrap();
            values.push(estimate_f0(&shadows, &a).unwrap().value);
        }
        let mean = values.iter().sum::<f64>() / reps as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let stderr = (var / reps as f64).sqrt();
        assert!(
            (mean - exact).abs() < 4.0 * stderr,
            "mean {mean} vs exact {exact} (4σ = {})",
            4.0 * stderr
        );
    }

    /// Global-scheme shadows go through the dense path.
    #[test]
    fn collective_shadows_use_dense_path() {
        let rho = depolarize(&crate::states::noon_state(3).unwrap(), 0.25).unwrap();
        let a = crate::states::number_difference_observable(3).unwrap();
        let scheme =
            MeasurementScheme::global_collective(rho.space(), UnitarySource::Cue).unwrap();
        let shadows = acquire(&rho, &scheme, 6, &SeededStream::new(55)).unwrap();
        let fast = estimate_f1(&shadows, &a).unwrap();
        assert_eq!(fast.method, Method::Fast);
        let oracle = estimate_f1_with(&shadows, &a, Method::Oracle).unwrap();
        assert!(rel_close(fast.value, oracle.value, 1e-10));
    }
}
