use std::path::Path;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::output::ExperimentResult;
use super::scenario::{check_capacity, replicate_seed, run_replicate, Cells};
use crate::complexity::{fit_rate_line, slope_to_gamma, Regime};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::kernel::CovarianceSpec;
use crate::rng::derive;

/// Fitted log-MSPE line for one (method, imposed spec).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeLine {
    pub method: String,
    pub spec_id: usize,
    pub nu: f64,
    pub regime: Regime,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// γ implied by the negative slope, when the inversion applies.
    pub gamma_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeStudy {
    pub result: ExperimentResult,
    pub lines: Vec<SlopeLine>,
}

/// How an imposed spec relates to the truth.
pub fn regime_of(imposed: &CovarianceSpec, truth: &CovarianceSpec) -> Regime {
    if imposed.nu < truth.nu {
        Regime::Undersmoothed
    } else if imposed.nu > truth.nu {
        Regime::Oversmoothed
    } else {
        Regime::True
    }
}

/// Fit log(mean MSPE) on log n for every (method, spec) present in `result`.
pub fn slope_lines(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<Vec<SlopeLine>> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for a in &result.agg {
        let key = (a.method.clone(), a.spec_id);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, spec_id)| {
            let pairs: Vec<(f64, f64)> = result
                .agg
                .iter()
                .filter(|a| a.method == method && a.spec_id == spec_id)
                .map(|a| (a.n as f64, a.mean_mspe))
                .collect();
            let line = fit_rate_line(&pairs)?;
            let spec = cfg
                .imposed_specs
                .get(spec_id)
                .ok_or_else(|| Error::Config(format!("spec_id {spec_id} has no imposed spec")))?;
            let regime = regime_of(spec, &cfg.true_spec);
            let gamma_hat = slope_to_gamma(-line.slope, regime, cfg.gamma_true).ok();
            Ok(SlopeLine {
                method,
                spec_id,
                nu: spec.nu,
                regime,
                slope: line.slope,
                intercept: line.intercept,
                r2: line.r2,
                gamma_hat,
            })
        })
        .collect()
}

/// Scenario pipeline at each n of `n_grid` with k = ⌊coef·n^{2/γ}⌋ knots,
/// then a rate line per (method, imposed spec).
pub fn run_slope_study(cfg: &ExperimentConfig) -> Result<SlopeStudy> {
    cfg.validate()?;
    let n_grid = cfg
        .n_grid
        .as_ref()
        .ok_or_else(|| Error::Config("the slope study needs n_grid".into()))?;
    for &n in n_grid {
        check_capacity(cfg, n)?;
    }
    let base = cfg.seed()?;
    let mut rows = Vec::new();
    for &n in n_grid {
        let k = [cfg.slope_k(n)];
        let cells = Cells {
            n,
            k_grid: &k,
            tau_mults: None,
        };
        for r in 0..cfg.replicates {
            let seed = derive(replicate_seed(base, r), &[n as u64]);
            rows.extend(run_replicate(cfg, &cells, r, seed)?);
        }
    }
    let result = ExperimentResult::from_rows(rows);
    let lines = slope_lines(cfg, &result)?;
    Ok(SlopeStudy { result, lines })
}

pub fn write_slopes_csv(path: &Path, lines: &[SlopeLine]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "spec_id",
        "nu",
        "regime",
        "slope",
        "intercept",
        "r2",
        "gamma_hat",
    ])?;
    for l in lines {
        w.write_record([
            l.method.clone(),
            l.spec_id.to_string(),
            fmt_f64(l.nu),
            l.regime.to_string(),
            fmt_f64(l.slope),
            fmt_f64(l.intercept),
            fmt_f64(l.r2),
            l.gamma_hat.map(fmt_f64).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
