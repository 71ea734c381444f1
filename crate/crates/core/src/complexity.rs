//! Empirical complexity parameter γ: the power-law decay rate of covariance
//! eigenvalues, λ_i ∝ i^{−γ}, and the inverse map from observed MSPE rates.
//!
//! For the Matérn family γ is roughly 2(ν + d/2)/d, but the estimator here
//! is purely empirical.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::kernel::{cov_matrix_sym, CovarianceSpec, PointSet};

/// Eigenvalues below this fraction of the largest are dropped before the fit.
pub const EIGEN_RELATIVE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEstimate {
    pub gamma: f64,
    pub n0: usize,
    /// 1-based inclusive index range of eigenvalues used in the regression.
    pub fit_range: (usize, usize),
    pub r2: f64,
}

/// Covariance eigenvalues at `n0` seeded uniform points on [0,1]², largest
/// first. No nugget.
pub fn covariance_spectrum(spec: &CovarianceSpec, n0: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let points = PointSet::uniform(n0, 2, 0.0, 1.0, seed)?;
    let c = cov_matrix_sym(&points, &spec.with_tau2(0.0)?)?;
    let ev = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(format!("eigen-decomposition failed: {e:?}"), None))?;
    let mut ev: Vec<f64> = ev.into_iter().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    Ok(ev)
}

/// Slope of −log λ_i on log i over the eigenvalues retained by
/// [`EIGEN_RELATIVE_FLOOR`].
pub fn gamma_from_spectrum(eigenvalues: &[f64]) -> Result<GammaEstimate> {
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::numerical(
            "covariance spectrum has no positive eigenvalue",
            None,
        ));
    }
    let floor = top * EIGEN_RELATIVE_FLOOR;
    let kept = eigenvalues.iter().take_while(|&&l| l >= floor).count();
    if kept < 3 {
        return Err(Error::numerical(
            format!("only {kept} eigenvalues above the truncation floor"),
            None,
        ));
    }
    let xs: Vec<f64> = (1..=kept).map(|i| (i as f64).ln()).collect();
    let ys: Vec<f64> = eigenvalues[..kept].iter().map(|l| -l.ln()).collect();
    let (slope, _, r2) = ols(&xs, &ys)?;
    Ok(GammaEstimate {
        gamma: slope,
        n0: eigenvalues.len(),
        fit_range: (1, kept),
        r2,
    })
}

pub fn estimate_gamma(spec: &CovarianceSpec, n0: usize, seed: u64) -> Result<GammaEstimate> {
    if n0 < 100 {
        return Err(Error::domain(format!("n0 must be at least 100, got {n0}")));
    }
    let est = gamma_from_spectrum(&covariance_spectrum(spec, n0, seed)?)?;
    if !(est.gamma.is_finite() && est.gamma > 0.0) {
        return Err(Error::numerical(
            format!(
                "eigenvalue regression gave a non-positive slope {}",
                est.gamma
            ),
            None,
        ));
    }
    Ok(est)
}

/// Ordinary least squares y = a x + b; returns (a, b, r²).
fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if !(sxx > 1e-300) {
        return Err(Error::domain(
            "regression needs at least two distinct x values",
        ));
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    Ok((slope, my - slope * mx, r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateLine {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// OLS of log(mspe) on log(n).
pub fn fit_rate_line(pairs: &[(f64, f64)]) -> Result<RateLine> {
    if pairs.len() < 3 {
        return Err(Error::domain(format!(
            "need at least 3 (n, mspe) pairs, got {}",
            pairs.len()
        )));
    }
    if let Some((n, m)) = pairs.iter().find(|(n, m)| !(*n > 0.0 && *m > 0.0)) {
        return Err(Error::domain(format!(
            "n and mspe must be positive, got ({n}, {m})"
        )));
    }
    let xs: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r2) = ols(&xs, &ys)?;
    Ok(RateLine {
        slope,
        intercept,
        r2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    True,
    Undersmoothed,
    Oversmoothed,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::True => "true",
            Regime::Undersmoothed => "undersmoothed",
            Regime::Oversmoothed => "oversmoothed",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true" => Ok(Regime::True),
            "undersmoothed" | "under" => Ok(Regime::Undersmoothed),
            "oversmoothed" | "over" => Ok(Regime::Oversmoothed),
            other => Err(Error::Config(format!(
                "unknown regime {other:?}; expected true, undersmoothed or oversmoothed"
            ))),
        }
    }
}

/// Invert an observed negative slope `ns` of log-MSPE against log n into a
/// γ estimate.
pub fn slope_to_gamma(ns: f64, regime: Regime, gamma_true: Option<f64>) -> Result<f64> {
    if !(ns > 0.0 && ns < 1.0) {
        return Err(Error::domain(format!(
            "negative slope must lie in (0, 1) for the rate to be invertible, got {ns}"
        )));
    }
    match regime {
        Regime::True | Regime::Undersmoothed => Ok(1.0 / (1.0 - ns)),
        Regime::Oversmoothed => {
            let g = gamma_true
                .ok_or_else(|| Error::domain("the oversmoothed inversion needs the true gamma"))?;
            Ok((g - 1.0) / (1.0 - ns))
        }
    }
}

pub fn write_gamma_csv(path: &Path, rows: &[(GammaEstimate, u64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["gamma", "n0", "seed", "r2", "fit_lo", "fit_hi"])?;
    for (g, seed) in rows {
        w.write_record([
            fmt_f64(g.gamma),
            g.n0.to_string(),
            seed.to_string(),
            fmt_f64(g.r2),
            g.fit_range.0.to_string(),
            g.fit_range.1.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
