//! Interpolation and exponent fitting for the error-scaling studies.

use serde::Serialize;

use crate::error::{Error, Result};

/// Crossing point of the mean-error curve with `target`, by linear
/// interpolation in `(M, error)` between the two bracketing grid points.
///
/// Rows must be sorted by increasing `M`. When the curve is not monotone,
/// the last bracketing segment is used and the result is flagged. `None`
/// when no segment brackets the target.
pub fn find_m_at_error(rows: &[(f64, f64)], target: f64) -> Option<(f64, bool)> {
    if rows.len() < 2 {
        return None;
    }
    let monotone = rows.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut hit: Option<f64> = None;
    for w in rows.windows(2) {
        let (m0, e0) = w[0];
        let (m1, e1) = w[1];
        if e0 >= target && target >= e1 {
            let m = if e0 == e1 {
                m0
            } else {
                m0 + (e0 - target) / (e0 - e1) * (m1 - m0)
            };
            hit = Some(m);
        }
    }
    hit.map(|m| (m, !monotone))
}

/// Scaling law fitted to `(N, M_at_target)` points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `M = 2^{b + aN}`; fits `log2 M` against `N`.
    Exponential2,
    /// `M = c · N^a`; fits `ln M` against `ln N`.
    PowerLaw,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentFit {
    pub model: FitModel,
    /// Scaling exponent `a`.
    pub a: f64,
    /// Offset: `b` of `2^{b+aN}`, or `ln c` of `c·N^a`.
    pub b: f64,
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
}

/// Least-squares exponent fit; needs at least three points with distinct
/// abscissae.
pub fn fit_exponent(points: &[(f64, f64)], model: FitModel) -> Result<ExponentFit> {
    if points.len() < 3 {
        return Err(Error::validation(format!(
            "exponent fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let transformed: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, m)| {
            if m <= 0.0 || n <= 0.0 {
                return Err(Error::validation(format!("fit points must be positive, got ({n}, {m})")));
            }
            Ok(match model {
                FitModel::Exponential2 => (n, m.log2()),
                FitModel::PowerLaw => (n.ln(), m.ln()),
            })
        })
        .collect::<Result<_>>()?;
    let (slope, intercept, residuals) = linear_fit(&transformed)?;
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(ExponentFit {
        model,
        a: slope,
        b: intercept,
        residuals,
        rms_residual: rms,
    })
}

/// Ordinary least squares `y = intercept + slope·x` with residuals.
pub fn linear_fit(points: &[(f64, f64)]) -> Result<(f64, f64, Vec<f64>)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::validation("linear fit needs at least 2 points"));
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx < 1e-12 {
        return Err(Error::validation("degenerate fit: all abscissae equal"));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residuals = points
        .iter()
        .map(|p| p.1 - (intercept + slope * p.0))
        .collect();
    Ok((slope, intercept, residuals))
}

/// Log-log slope of `(M, error)` rows, for regime diagnostics.
pub fn loglog_slope(rows: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|&&(m, e)| m > 0.0 && e > 0.0)
        .map(|&(m, e)| (m.ln(), e.ln()))
        .collect();
    let (slope, _, _) = linear_fit(&pts)?;
    Ok(slope)
}
