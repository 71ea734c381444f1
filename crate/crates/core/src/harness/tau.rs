use super::config::ExperimentConfig;
use super::output::ExperimentResult;
use super::scenario::{check_capacity, replicate_seed, run_replicate, Cells};
use crate::error::{Error, Result};

/// Scenario data fixed per replicate; each imposed spec is refit with
/// τ² scaled by every multiplier in `tau_grid`, at `tau_k` knots of the
/// first strategy.
pub fn run_tau_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let mults = cfg
        .tau_grid
        .as_ref()
        .ok_or_else(|| Error::Config("the tau sweep needs tau_grid".into()))?;
    check_capacity(cfg, cfg.n)?;
    let base = cfg.seed()?;
    let mut sweep_cfg = cfg.clone();
    sweep_cfg.knot_strategies.truncate(1);
    let k = [cfg.tau_k];
    let cells = Cells {
        n: cfg.n,
        k_grid: &k,
        tau_mults: Some(mults),
    };
    let mut rows = Vec::new();
    for r in 0..cfg.replicates {
        rows.extend(run_replicate(
            &sweep_cfg,
            &cells,
            r,
            replicate_seed(base, r),
        )?);
    }
    Ok(ExperimentResult::from_rows(rows))
}
