//! Experiment harness: convergence tables, noise-threshold curves, and
//! Monte-Carlo error-scaling studies with exponent fits.
//!
//! Every run is driven by an [`ExperimentConfig`] and a master seed;
//! repetitions and grid points consume disjoint substreams, so each emitted
//! row is reproducible bit-for-bit from the config alone regardless of
//! worker scheduling.

mod fit;

pub use fit::{find_m_at_error, fit_exponent, linear_fit, loglog_slope, ExponentFit, FitModel};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::estimate_f0_f1;
use crate::fisher::{
    bounds_spectral, pstar, BoundOrder, BoundSeries, PstarResult, StateFamily,
    DEFAULT_EIG_CUTOFF,
};
use crate::protocol::{acquire, MeasurementScheme, UnitarySource};
use crate::states::{
    collective_spin_observable, depolarize, ghz_state, noon_state, number_difference_observable,
    Axis, DensityMatrix, Observable,
};
use crate::stream::SeededStream;

/// State family under study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    NoisyGhz,
    NoisyNoon,
}

impl Family {
    fn state_family(self) -> StateFamily {
        match self {
            Family::NoisyGhz => StateFamily::NoisyGhz,
            Family::NoisyNoon => StateFamily::NoisyNoon,
        }
    }
}

/// One experiment description. Field defaults mirror the reference
/// numerical studies: depolarization `p = 0.25`, `R = 50` repetitions,
/// target mean relative error `0.1`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    pub n_list: Vec<u32>,
    /// Depolarization strength for state preparation.
    pub p: f64,
    /// Noise strengths for convergence tables (defaults to `[p]`).
    pub p_list: Option<Vec<f64>>,
    /// Bound orders to estimate or tabulate.
    pub orders: Vec<u32>,
    /// Measurement-round grid, strictly increasing.
    pub m_grid: Vec<usize>,
    pub repetitions: u32,
    pub seed: u64,
    /// Target mean relative error for `M_at_target` interpolation.
    pub target_error: f64,
    /// Producibility orders for threshold curves (defaults to `[1]`).
    pub k_list: Option<Vec<u32>>,
    /// Bisection tolerance for threshold curves.
    pub pstar_tol: f64,
    /// Refusal threshold for the estimated sampling work, in units of
    /// `rounds × d²` summed over the whole run.
    pub max_work: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: Family::NoisyGhz,
            n_list: vec![2, 3, 4, 5, 6],
            p: 0.25,
            p_list: None,
            orders: vec![0, 1],
            m_grid: vec![6, 12, 25, 50, 100, 200, 400, 800, 1600],
            repetitions: 50,
            seed: 7,
            target_error: 0.1,
            k_list: None,
            pstar_tol: 1e-8,
            max_work: 5e13,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::validation("n_list must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::validation(format!("p must lie in [0, 1], got {}", self.p)));
        }
        if let Some(ps) = &self.p_list {
            if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::validation("p_list entries must lie in [0, 1]"));
            }
        }
        if self.repetitions == 0 {
            return Err(Error::validation("repetitions must be >= 1"));
        }
        if self.m_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("m_grid must be strictly increasing"));
        }
        if !(self.target_error.is_finite() && self.target_error > 0.0) {
            return Err(Error::validation("target_error must be positive"));
        }
        Ok(())
    }

    fn p_values(&self) -> Vec<f64> {
        self.p_list.clone().unwrap_or_else(|| vec![self.p])
    }
}

/// State, observable, and measurement scheme for one family member.
pub struct FamilyInstance {
    pub rho: DensityMatrix,
    pub observable: Observable,
    pub scheme: MeasurementScheme,
}

/// Build the noisy state and its natural observable and scheme.
pub fn instantiate(family: Family, n: u32, p: f64) -> Result<FamilyInstance> {
    match family {
        Family::NoisyGhz => {
            let rho = depolarize(&ghz_state(n)?, p)?;
            let observable = collective_spin_observable(n, Axis::Z)?;
            let scheme = MeasurementScheme::local_qubit(rho.space())?;
            Ok(FamilyInstance {
                rho,
                observable,
                scheme,
            })
        }
        Family::NoisyNoon => {
            let rho = depolarize(&noon_state(n)?, p)?;
            let observable = number_difference_observable(n)?;
            let scheme = MeasurementScheme::global_collective(rho.space(), UnitarySource::Cue)?;
            Ok(FamilyInstance {
                rho,
                observable,
                scheme,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceRow {
    pub n_particles: u32,
    pub order: u32,
    pub p: f64,
    pub f_n: f64,
    pub f_q: f64,
    pub gap: f64,
}

/// Exact convergence table `(order, p) → (F_n, F_Q, ξ_n)`, no sampling.
pub fn run_convergence(config: &ExperimentConfig) -> Result<Vec<ConvergenceRow>> {
    config.validate()?;
    let max_order = config.orders.iter().copied().max().unwrap_or(0);
    let mut rows = Vec::new();
    for &n in &config.n_list {
        for &p in &config.p_values() {
            let inst = instantiate(config.family, n, p)?;
            let series: BoundSeries =
                bounds_spectral(&inst.rho, &inst.observable, max_order, DEFAULT_EIG_CUTOFF)?;
            for &order in &config.orders {
                rows.push(ConvergenceRow {
                    n_particles: n,
                    order,
                    p,
                    f_n: series.orders[order as usize],
                    f_q: series.qfi,
                    gap: series.gaps[order as usize],
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct PstarRow {
    pub n_particles: u32,
    pub k: u32,
    /// `"f<order>"` or `"qfi"`.
    pub order: String,
    pub detectable: bool,
    pub pstar: Option<f64>,
}

/// Noise-threshold curves `p*(N, k)` for the configured bound orders plus
/// the exact QFI. Combinations whose bound never exceeds `Γ(N,k)` produce
/// sentinel rows with `detectable = false`.
pub fn run_pstar_curves(config: &ExperimentConfig) -> Result<Vec<PstarRow>> {
    config.validate()?;
    let family = config.family.state_family();
    let ks = config.k_list.clone().unwrap_or_else(|| vec![1]);
    let mut rows = Vec::new();
    for &n in &config.n_list {
        for &k in &ks {
            if k == 0 || k > n {
                continue;
            }
            let mut orders: Vec<(String, BoundOrder)> = config
                .orders
                .iter()
                .map(|&o| (format!("f{o}"), BoundOrder::Order(o)))
                .collect();
            orders.push(("qfi".to_string(), BoundOrder::Qfi));
            for (label, order) in orders {
                let result = pstar(family, n, k, order, config.pstar_tol)?;
                let (detectable, value) = match result {
                    PstarResult::Threshold(p) => (true, Some(p)),
                    PstarResult::NotDetectable => (false, None),
                };
                rows.push(PstarRow {
                    n_particles: n,
                    k,
                    order: label,
                    detectable,
                    pstar: value,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScalingRow {
    pub n_particles: u32,
    pub order: u32,
    pub m: usize,
    /// Mean over repetitions of the relative error |F̂_n − F_n|/F_n.
    pub mean_err: f64,
    /// Standard error of that mean.
    pub std_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MAtTarget {
    pub n_particles: u32,
    pub order: u32,
    pub m: Option<f64>,
    /// Interpolation crossed a non-monotone stretch of the error curve.
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderFit {
    pub order: u32,
    pub fit: ExponentFit,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    pub m_at_target: Vec<MAtTarget>,
    pub fits: Vec<OrderFit>,
    pub target_error: f64,
}

/// Estimated sampling work for a config, in `rounds × d²` units (round
/// simulation and estimation are both quadratic in `d` per round up to
/// small factors).
pub fn estimated_work(config: &ExperimentConfig) -> Result<f64> {
    let mut work = 0.0f64;
    let rounds_per_rep: f64 = config.m_grid.iter().map(|&m| m as f64).sum();
    for &n in &config.n_list {
        let d = instantiate(config.family, n, 0.0)?.rho.dim() as f64;
        work += config.repetitions as f64 * rounds_per_rep * d * d * (n as f64 + 4.0);
    }
    Ok(work)
}

/// Monte-Carlo error scaling: for each `(N, M)` run `R` independent
/// acquisitions, estimate `F̂_0`/`F̂_1`, record the mean relative error,
/// then interpolate `M` at the target error and fit the scaling exponent.
/// Only orders 0 and 1 are supported (the higher-order estimators have no
/// fast path).
pub fn run_error_scaling(config: &ExperimentConfig) -> Result<ScalingResult> {
    config.validate()?;
    if config.orders.iter().any(|&o| o > 1) {
        return Err(Error::validation(
            "error scaling supports bound orders 0 and 1 only",
        ));
    }
    if config.m_grid.is_empty() {
        return Err(Error::validation("m_grid must not be empty"));
    }
    let work = estimated_work(config)?;
    if work > config.max_work {
        return Err(Error::validation(format!(
            "estimated sampling work {work:.3e} (rounds × d² units) exceeds the limit {:.3e}; \
             shrink the grid, repetitions, or system sizes, or raise max_work",
            config.max_work
        )));
    }
    let want_f1 = config.orders.contains(&1);
    let min_m = if want_f1 { 3 } else { 2 };
    if config.m_grid[0] < min_m {
        return Err(Error::validation(format!(
            "m_grid must start at {min_m} or above for the requested orders"
        )));
    }

    let root = SeededStream::new(config.seed);
    let mut rows = Vec::new();
    let mut m_at_target = Vec::new();
    let mut fit_points: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 2];

    for (ni, &n) in config.n_list.iter().enumerate() {
        let inst = instantiate(config.family, n, config.p)?;
        let exact = bounds_spectral(&inst.rho, &inst.observable, 1, DEFAULT_EIG_CUTOFF)?;
        for &order in &config.orders {
            let f_exact = exact.orders[order as usize];
            if f_exact.abs() < 1e-9 {
                return Err(Error::validation(format!(
                    "relative error undefined: exact F_{order} vanishes for N = {n}"
                )));
            }
        }
        let n_stream = root.fork(ni as u64);
        for (mi, &m) in config.m_grid.iter().enumerate() {
            let m_stream = n_stream.fork(mi as u64);
            // each repetition is one simulated experiment; both orders are
            // estimated from the same acquisition
            let errors: Vec<(f64, f64)> = (0..config.repetitions)
                .into_par_iter()
                .map(|rep| -> Result<(f64, f64)> {
                    let shadows =
                        acquire(&inst.rho, &inst.scheme, m, &m_stream.fork(rep as u64))?;
                    let (f0, f1) = estimate_f0_f1(&shadows, &inst.observable)?;
                    let e0 = (f0.value - exact.orders[0]).abs() / exact.orders[0].abs();
                    let e1 = (f1.value - exact.orders[1]).abs() / exact.orders[1].abs();
                    Ok((e0, e1))
                })
                .collect::<Result<_>>()?;
            for &order in &config.orders {
                let vals: Vec<f64> = errors
                    .iter()
                    .map(|&(e0, e1)| if order == 0 { e0 } else { e1 })
                    .collect();
                let reps = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / reps;
                let var = if vals.len() > 1 {
                    vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1.0)
                } else {
                    0.0
                };
                rows.push(ScalingRow {
                    n_particles: n,
                    order,
                    m,
                    mean_err: mean,
                    std_err: (var / reps).sqrt(),
                });
            }
        }
        for &order in &config.orders {
            let curve: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.n_particles == n && r.order == order)
                .map(|r| (r.m as f64, r.mean_err))
                .collect();
            let found = find_m_at_error(&curve, config.target_error);
            if let Some((m_val, _)) = found {
                fit_points[order as usize].push((n as f64, m_val));
            }
            m_at_target.push(MAtTarget {
                n_particles: n,
                order,
                m: found.map(|(m, _)| m),
                flagged: found.map(|(_, f)| f).unwrap_or(false),
            });
        }
    }

    let model = match config.family {
        Family::NoisyGhz => FitModel::Exponential2,
        Family::NoisyNoon => FitModel::PowerLaw,
    };
    let mut fits = Vec::new();
    for &order in &config.orders {
        let points = &fit_points[order as usize];
        if points.len() >= 3 {
            fits.push(OrderFit {
                order,
                fit: fit_exponent(points, model)?,
            });
        }
    }
    Ok(ScalingResult {
        rows,
        m_at_target,
        fits,
        target_error: config.target_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn convergence_endpoints() {
        let config = ExperimentConfig {
            n_list: vec![3],
            orders: (0..=4).collect(),
            p_list: Some(vec![0.0, 0.5, 1.0]),
            ..Default::default()
        };
        let rows = run_convergence(&config).unwrap();
        for row in &rows {
            if row.p == 0.0 {
                assert_abs_diff_eq!(row.f_n, row.f_q, epsilon = 1e-9);
                assert_abs_diff_eq!(row.f_q, 9.0, epsilon = 1e-9);
            }
            if row.p == 1.0 {
                assert_abs_diff_eq!(row.f_n, 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(row.f_q, 0.0, epsilon = 1e-12);
            }
        }
    }

    /// Gap ratio is constant across orders for the depolarized family:
    /// ξ_n/ξ_{n+1} = 1/((1−2/d)p).
    #[test]
    fn convergence_gap_ratio() {
        let config = ExperimentConfig {
            n_list: vec![4],
            orders: (0..=5).collect(),
            p_list: Some(vec![0.5]),
            ..Default::default()
        };
        let rows = run_convergence(&config).unwrap();
        let expected = 1.0 / ((1.0 - 2.0 / 16.0) * 0.5);
        for w in rows.windows(2) {
            let ratio = w[0].gap / w[1].gap;
            assert_abs_diff_eq!(ratio, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn pstar_rows_monotone_in_order() {
        let config = ExperimentConfig {
            n_list: vec![6],
            orders: vec![0, 1, 2],
            k_list: Some(vec![1, 2]),
            ..Default::default()
        };
        let rows = run_pstar_curves(&config).unwrap();
        for k in [1u32, 2] {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.k == k)
                .map(|r| r.pstar.unwrap())
                .collect();
            assert_eq!(vals.len(), 4); // f0, f1, f2, qfi
            for w in vals.windows(2) {
                assert!(w[0] <= w[1] + 1e-8, "{vals:?}");
            }
        }
    }

    #[test]
    fn pstar_k_equals_n_zero() {
        let config = ExperimentConfig {
            n_list: vec![4],
            orders: vec![],
            k_list: Some(vec![4]),
            ..Default::default()
        };
        let rows = run_pstar_curves(&config).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].order, "qfi");
        assert_eq!(rows[0].pstar, Some(0.0));
        // Γ(4,4) = 16 = pure-state QFI: strict inequality fails at p = 0
        assert_eq!(crate::fisher::gamma_threshold(4, 4).unwrap(), 16);
    }

    #[test]
    fn error_scaling_smoke_and_determinism() {
        let config = ExperimentConfig {
            family: Family::NoisyGhz,
            n_list: vec![2, 3],
            p: 0.25,
            orders: vec![0, 1],
            m_grid: vec![4, 8, 16, 32, 64, 128],
            repetitions: 10,
            seed: 11,
            ..Default::default()
        };
        let a = run_error_scaling(&config).unwrap();
        let b = run_error_scaling(&config).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(b.rows.iter()) {
            assert_eq!(x.mean_err.to_bits(), y.mean_err.to_bits());
        }
        // error decreases over the grid on the whole
        let first = &a.rows[0];
        let last = a
            .rows
            .iter()
            .filter(|r| r.n_particles == 2 && r.order == 0)
            .next_back()
            .unwrap();
        assert!(last.mean_err < first.mean_err);
    }

    #[test]
    fn error_scaling_guards() {
        let config = ExperimentConfig {
            orders: vec![0, 2],
            ..Default::default()
        };
        assert!(run_error_scaling(&config).is_err());

        let expensive = ExperimentConfig {
            n_list: vec![10, 11, 12],
            m_grid: vec![1_000_000, 2_000_000],
            repetitions: 1000,
            ..Default::default()
        };
        let err = run_error_scaling(&expensive).unwrap_err();
        assert!(err.to_string().contains("estimated sampling work"), "{err}");

        let bad_grid = ExperimentConfig {
            m_grid: vec![10, 10, 20],
            ..Default::default()
        };
        assert!(bad_grid.validate().is_err());
    }
}
