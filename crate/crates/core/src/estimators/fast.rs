//! Inclusion–exclusion evaluation of the pair and triple U-statistic sums.
//!
//! With `S = Σ_r ρ̂^(r)` the ordered-distinct sums reduce to full sums plus
//! per-round coincidence corrections:
//!
//! ```text
//! Σ_{r1≠r2} f(r1,r2) = f(S,S) − Σ_r f(r,r)
//! Σ_{r1≠r2≠r3} g = g(S,S,S) − Σ_{a=b} − Σ_{a=c} − Σ_{b=c} + 2 Σ_{a=b=c}
//! ```
//!
//! which costs `O(M d³ + d³)` on dense shadows instead of `O(M² d³)` and
//! `O(M³ d³)`. For factored shadows with a single-site-sum observable the
//! coincidence terms collapse further: products over sites cancel between
//! the two kernel traces except at the insertion site, leaving `O(N)`
//! per-round corrections, and the `a = c` pattern is handled with per-site
//! applications of the factors to `S` in `O(N d²)` per round. A diagonal
//! observable (the collective-spin z component, the two-mode population
//! difference) turns every remaining contraction into an `O(d²)` pass.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{
    apply_factored_left, apply_factored_right, materialize_factors, trace_of_product, CMat,
    KahanSum, Mat2,
};
use crate::protocol::ShadowSnapshot;
use crate::states::Observable;

pub(super) struct RawSums {
    pub pair: f64,
    pub triple: Option<f64>,
}

#[derive(Default)]
struct KahanComplex {
    re: KahanSum,
    im: KahanSum,
}

impl KahanComplex {
    fn add(&mut self, z: C64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    fn value(&self) -> C64 {
        C64::new(self.re.value(), self.im.value())
    }
}

/// Right/left multiplication by `A`, specialized when `A` is diagonal.
enum AMul<'a> {
    Dense(&'a CMat),
    Diag(Vec<f64>),
}

impl AMul<'_> {
    fn right(&self, x: &CMat) -> CMat {
        match self {
            AMul::Dense(a) => x.dot(*a),
            AMul::Diag(w) => {
                let mut out = x.clone();
                for mut row in out.rows_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v *= w[j];
                    }
                }
                out
            }
        }
    }

    fn left(&self, x: &CMat) -> CMat {
        match self {
            AMul::Dense(a) => a.dot(x),
            AMul::Diag(w) => {
                let mut out = x.clone();
                for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                    for v in row.iter_mut() {
                        *v *= w[i];
                    }
                }
                out
            }
        }
    }
}

/// Full-sum contractions shared by both lanes. All traces that mix `S`
/// with the accumulators are single `O(d³)` products per acquisition.
struct FullSums {
    s: CMat,
    ss: CMat,
    a2: CMat,
    amul: AMulKind,
}

enum AMulKind {
    Dense {
        sa: CMat,
        sa2: CMat,
        asa: CMat,
        a2s: CMat,
        a_s: CMat,
    },
    Diag {
        alpha: Vec<f64>,
        alpha2: Vec<f64>,
    },
}

/// `Tr(X·Y·diag(w)) = Σ_ij X_ij Y_ji w_i`.
fn tr_prod_diag(x: &CMat, y: &CMat, w: &[f64]) -> C64 {
    let n = x.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let row = x.row(i);
        let col = y.column(i);
        let mut inner = C64::new(0.0, 0.0);
        for (xv, yv) in row.iter().zip(col.iter()) {
            inner += xv * yv;
        }
        acc += inner * w[i];
    }
    acc
}

/// `Tr(X·diag(w)·Y·diag(w)) = Σ_ij X_ij w_j Y_ji w_i`.
fn tr_sandwich_diag(x: &CMat, y: &CMat, w: &[f64]) -> C64 {
    let n = x.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let row = x.row(i);
        let col = y.column(i);
        let mut inner = C64::new(0.0, 0.0);
        for (j, (xv, yv)) in row.iter().zip(col.iter()).enumerate() {
            inner += xv * yv * w[j];
        }
        acc += inner * w[i];
    }
    acc
}

impl FullSums {
    fn new(s: CMat, a: &Observable) -> FullSums {
        let a2 = a.mat().dot(a.mat());
        let ss = s.dot(&s);
        let amul = match a.strict_diagonal() {
            Some(alpha) => {
                let alpha2: Vec<f64> = alpha.iter().map(|x| x * x).collect();
                AMulKind::Diag { alpha, alpha2 }
            }
            None => {
                let sa = s.dot(a.mat());
                let sa2 = s.dot(&a2);
                let asa = a.mat().dot(&sa);
                let a2s = a2.dot(&s);
                let a_s = a.mat().dot(&s);
                AMulKind::Dense {
                    sa,
                    sa2,
                    asa,
                    a2s,
                    a_s,
                }
            }
        };
        FullSums { s, ss, a2, amul }
    }

    /// `Tr(S S A²) − Tr(S A S A)`.
    fn pair_full(&self) -> C64 {
        match &self.amul {
            AMulKind::Dense { sa, .. } => {
                trace_of_product(&self.ss, &self.a2) - trace_of_product(sa, sa)
            }
            AMulKind::Diag { alpha, alpha2 } => {
                tr_prod_diag(&self.s, &self.s, alpha2) - tr_sandwich_diag(&self.s, &self.s, alpha)
            }
        }
    }

    /// `Tr(S S S A²) − Tr(S S A S A)`.
    fn triple_full(&self) -> C64 {
        match &self.amul {
            AMulKind::Dense { sa2, asa, .. } => {
                trace_of_product(&self.ss, sa2) - trace_of_product(&self.ss, asa)
            }
            AMulKind::Diag { alpha, alpha2 } => {
                tr_prod_diag(&self.ss, &self.s, alpha2) - tr_sandwich_diag(&self.ss, &self.s, alpha)
            }
        }
    }

    /// `Σ_{a=b}: Tr(Q2 S A²) − Tr(Q2 A S A)`.
    fn coincide_ab(&self, q2: &CMat) -> C64 {
        match &self.amul {
            AMulKind::Dense { sa2, asa, .. } => {
                trace_of_product(q2, sa2) - trace_of_product(q2, asa)
            }
            AMulKind::Diag { alpha, alpha2 } => {
                tr_prod_diag(q2, &self.s, alpha2) - tr_sandwich_diag(q2, &self.s, alpha)
            }
        }
    }

    /// `Σ_{b=c}: Tr(S Q2 A²) − Tr(S K' A)` with `K' = Σ_r ρ̂ A ρ̂`.
    fn coincide_bc(&self, q2: &CMat, kprime: &CMat) -> C64 {
        match &self.amul {
            AMulKind::Dense { a2s, a_s, .. } => {
                trace_of_product(q2, a2s) - trace_of_product(kprime, a_s)
            }
            AMulKind::Diag { alpha, alpha2 } => {
                tr_prod_diag(&self.s, q2, alpha2) - tr_prod_diag(&self.s, kprime, alpha)
            }
        }
    }
}

/// Dense-shadow lane: every per-round quantity is a handful of `O(d³)`
/// products, so the whole estimate costs `O(M d³)`.
pub(super) fn dense_sums(
    shadows: &[ShadowSnapshot],
    a: &Observable,
    want_triple: bool,
) -> Result<RawSums> {
    let d = a.dim();
    let amul = match a.strict_diagonal() {
        Some(w) => AMul::Diag(w),
        None => AMul::Dense(a.mat()),
    };
    let a2 = a.mat().dot(a.mat());
    let a2mul = match &amul {
        AMul::Diag(w) => AMul::Diag(w.iter().map(|x| x * x).collect()),
        AMul::Dense(_) => AMul::Dense(&a2),
    };

    let mut s = CMat::zeros((d, d));
    let dense: Vec<CMat> = shadows.iter().map(|sh| sh.dense()).collect();
    for m in &dense {
        s = s + m;
    }

    let mut pair_corr = KahanComplex::default();
    let mut q2 = CMat::zeros((d, d));
    let mut kprime = CMat::zeros((d, d));
    let mut aaa_corr = KahanComplex::default();
    let mut ac_sum = KahanComplex::default();

    for m in &dense {
        let d2 = m.dot(m);
        let da = amul.right(m);
        pair_corr.add(trace_of_product(&d2, &a2) - trace_of_product(&da, &da));
        if want_triple {
            let ada = amul.left(&da);
            let da2 = a2mul.right(m);
            q2 = q2 + &d2;
            kprime = kprime + da.dot(m);
            aaa_corr.add(trace_of_product(&d2, &da2) - trace_of_product(&d2, &ada));
            let ds = m.dot(&s);
            let w = ds.dot(m);
            ac_sum.add(trace_of_product(&w, &a2) - trace_of_product(&ds, &ada));
        }
    }

    let full = FullSums::new(s, a);
    let pair = (full.pair_full() - pair_corr.value()).re;
    let triple = want_triple.then(|| {
        let all = full.triple_full();
        let ab = full.coincide_ab(&q2);
        let bc = full.coincide_bc(&q2, &kprime);
        (all - ab - ac_sum.value() - bc + 2.0 * aaa_corr.value()).re
    });
    Ok(RawSums { pair, triple })
}

/// Same-site coincidence correction `Σ_l [tr(L_l) − tr(R_l)] Π_{k≠l} tr(base_k)`
/// built with prefix/suffix products (no divisions).
fn site_correction(base: &[C64], deltas: &[C64]) -> C64 {
    let n = base.len();
    let mut prefix = vec![C64::new(1.0, 0.0); n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * base[i];
    }
    let mut suffix = vec![C64::new(1.0, 0.0); n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * base[i];
    }
    let mut acc = C64::new(0.0, 0.0);
    for l in 0..n {
        acc += deltas[l] * prefix[l] * suffix[l + 1];
    }
    acc
}

/// Factored-shadow lane. Requires per-site factors on every shadow and a
/// single-site-sum observable.
pub(super) fn factored_sums(
    shadows: &[ShadowSnapshot],
    a: &Observable,
    want_triple: bool,
) -> Result<RawSums> {
    let site_terms = a.site_terms().ok_or_else(|| {
        Error::validation("factored-fast path needs a single-site-sum observable")
    })?;
    let n_sites = site_terms.len();
    let d = a.dim();
    let alpha = a.strict_diagonal();
    let a2 = a.mat().dot(a.mat());

    let factor_lists: Vec<&[Mat2]> = shadows
        .iter()
        .map(|sh| {
            sh.factors().ok_or_else(|| {
                Error::validation("factored-fast path needs factored shadows on every round")
            })
        })
        .collect::<Result<_>>()?;
    if factor_lists.iter().any(|f| f.len() != n_sites) {
        return Err(Error::validation(
            "shadow site count does not match observable site terms",
        ));
    }

    // pass 1: running sum S, per-round same-site corrections, Q2 and K'
    let mut s = CMat::zeros((d, d));
    let mut pair_corr = KahanComplex::default();
    let mut aaa_corr = KahanComplex::default();
    let mut q2 = CMat::zeros((d, d));
    let mut kprime = CMat::zeros((d, d));
    let mut base2 = vec![C64::new(0.0, 0.0); n_sites];
    let mut base3 = vec![C64::new(0.0, 0.0); n_sites];
    let mut deltas2 = vec![C64::new(0.0, 0.0); n_sites];
    let mut deltas3 = vec![C64::new(0.0, 0.0); n_sites];
    let mut squares: Vec<Mat2> = vec![Mat2::ZERO; n_sites];

    for factors in &factor_lists {
        for l in 0..n_sites {
            let tau = factors[l];
            let al = site_terms[l];
            let tau2 = tau.mul(&tau);
            let taua = tau.mul(&al);
            squares[l] = tau2;
            base2[l] = tau2.trace();
            // tr(τ²a²) − tr(τaτa)
            deltas2[l] = tau2.mul(&al).mul(&al).trace() - taua.mul(&taua).trace();
            if want_triple {
                let tau3 = tau2.mul(&tau);
                base3[l] = tau3.trace();
                // tr(τ³a²) − tr(τ²aτa)
                deltas3[l] = tau3.mul(&al).mul(&al).trace() - tau2.mul(&al).mul(&taua).trace();
            }
        }
        pair_corr.add(site_correction(&base2, &deltas2));
        s = s + materialize_factors(factors);
        if want_triple {
            aaa_corr.add(site_correction(&base3, &deltas3));
            q2 = q2 + materialize_factors(&squares);
            // ρ̂ A ρ̂ = Σ_l (⊗_{k≠l} τ_k²) with τ_l a_l τ_l at site l
            let mut sandwich = squares.clone();
            for l in 0..n_sites {
                let saved = sandwich[l];
                sandwich[l] = factors[l].mul(&site_terms[l]).mul(&factors[l]);
                kprime = kprime + materialize_factors(&sandwich);
                sandwich[l] = saved;
            }
        }
    }

    // pass 2: the a = c coincidence needs ρ̂ S ρ̂ per round
    let mut ac_sum = KahanComplex::default();
    if want_triple {
        for factors in &factor_lists {
            let mut v = s.clone();
            apply_factored_left(factors, &mut v); // ρ̂ S
            let term2 = match &alpha {
                Some(w) => {
                    let dense = materialize_factors(factors);
                    tr_sandwich_diag(&v, &dense, w)
                }
                None => {
                    // Σ_{l,m} Tr(V a_l ρ̂ a_m): compose per-site products
                    let mut acc = C64::new(0.0, 0.0);
                    let mut glm: Vec<Mat2> = factors.to_vec();
                    for l in 0..n_sites {
                        for m in 0..n_sites {
                            for k in 0..n_sites {
                                let mut g = factors[k];
                                if k == l {
                                    g = site_terms[k].mul(&g);
                                }
                                if k == m {
                                    g = g.mul(&site_terms[k]);
                                }
                                glm[k] = g;
                            }
                            acc += trace_of_product(&v, &materialize_factors(&glm));
                        }
                    }
                    acc
                }
            };
            apply_factored_right(&mut v, factors); // ρ̂ S ρ̂
            let term1 = match &alpha {
                Some(w) => {
                    let mut acc = C64::new(0.0, 0.0);
                    for (i, z) in v.diag().iter().enumerate() {
                        acc += z * w[i] * w[i];
                    }
                    acc
                }
                None => trace_of_product(&v, &a2),
            };
            ac_sum.add(term1 - term2);
        }
    }

    let full = FullSums::new(s, a);
    let pair = (full.pair_full() - pair_corr.value()).re;
    let triple = want_triple.then(|| {
        let all = full.triple_full();
        let ab = full.coincide_ab(&q2);
        let bc = full.coincide_bc(&q2, &kprime);
        (all - ab - ac_sum.value() - bc + 2.0 * aaa_corr.value()).re
    });
    Ok(RawSums { pair, triple })
}
