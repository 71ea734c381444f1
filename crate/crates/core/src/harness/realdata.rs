use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, Strategy};
use super::output::{ExperimentResult, ResultRow};
use super::scenario::make_knots;
use crate::error::{Error, Result};
use crate::gpcore::{check_cap, fit_mle_subsample, Dataset, ParamMask, DEFAULT_DENSE_CAP};
use crate::io::ingest_csv;
use crate::kernel::CovarianceSpec;
use crate::knots::{Bounds, SpOptions};
use crate::predict::{fit_full_capped, fit_lowrank, report};
use crate::rng::{self, derive, tag};

/// Where the covariance used for prediction comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpecSource {
    Given(CovarianceSpec),
    /// Maximum likelihood on a random subsample of the training data.
    MleSubsample {
        init: CovarianceSpec,
        #[serde(default = "default_mle_n")]
        max_n: usize,
        #[serde(default = "default_free")]
        free: ParamMask,
    },
}

fn default_mle_n() -> usize {
    3000
}

fn default_free() -> ParamMask {
    ParamMask::FIXED_NU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSplit {
    /// Hold out this fraction of the rows at random.
    Fraction(f64),
    /// Score against a separate file with a `y` column.
    File(PathBuf),
}

fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealDataConfig {
    pub train_csv: PathBuf,
    pub test: TestSplit,
    pub spec: SpecSource,
    pub strategies: Vec<Strategy>,
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub include_full: bool,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    #[serde(default)]
    pub sp: SpOptions,
}

#[derive(Debug, Clone)]
pub struct RealDataResult {
    pub result: ExperimentResult,
    /// Covariance used for every predictor.
    pub spec: CovarianceSpec,
    pub mle_converged: Option<bool>,
    pub n_train: usize,
    pub n_test: usize,
}

/// Split rows at random, holding out `fraction` of them.
pub fn split_dataset(data: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction must be in (0, 1), got {fraction}"
        )));
    }
    let n_test =
        ((data.len() as f64 * fraction).round() as usize).clamp(1, data.len().saturating_sub(1));
    if n_test == 0 || n_test >= data.len() {
        return Err(Error::Config(format!("cannot split {} rows", data.len())));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng::stream(seed));
    let (te, tr) = order.split_at(n_test);
    let (mut tr, mut te) = (tr.to_vec(), te.to_vec());
    tr.sort_unstable();
    te.sort_unstable();
    Ok((data.select(&tr), data.select(&te)))
}

/// Fit (or take) a covariance, build knots, and score predictors against
/// held-out responses.
pub fn run_realdata(cfg: &RealDataConfig) -> Result<RealDataResult> {
    let seed = cfg
        .seed
        .ok_or_else(|| Error::Config("no seed given: set seed or pass --seed".into()))?;
    if cfg.strategies.is_empty() && !cfg.include_full {
        return Err(Error::Config(
            "nothing to run: no strategies and include_full is false".into(),
        ));
    }
    let data = ingest_csv(&cfg.train_csv)?;
    let (train, test) = match &cfg.test {
        TestSplit::Fraction(f) => split_dataset(&data, *f, derive(seed, &[tag("split")]))?,
        TestSplit::File(p) => (data, ingest_csv(p)?),
    };
    if test.locations().dim() != train.locations().dim() {
        return Err(Error::Config(
            "training and test files have different dimensions".into(),
        ));
    }
    if cfg.include_full {
        check_cap(
            "n training points for the full predictor",
            train.len(),
            cfg.dense_cap,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
    }

    let (spec, mle_converged) = match &cfg.spec {
        SpecSource::Given(s) => {
            s.validate()?;
            (*s, None)
        }
        SpecSource::MleSubsample { init, max_n, free } => {
            let fit = fit_mle_subsample(&train, init, *free, *max_n, derive(seed, &[tag("mle")]))?;
            (fit.spec, Some(fit.converged))
        }
    };

    let bounds = Bounds::of(train.locations())?;
    let mut rows = Vec::new();
    let row = |method: &str, k: Option<usize>, s: &crate::predict::PredictionReport| ResultRow {
        scenario: Scenario::Custom,
        method: method.to_string(),
        spec_id: 0,
        k,
        n: train.len(),
        tau_mult: None,
        replicate: 0,
        seed,
        rmspe: s.rmspe,
        mspe: s.mspe,
        fit_s: s.wall_time_fit,
        predict_s: s.wall_time_predict,
    };
    if cfg.include_full {
        let p = fit_full_capped(&train, &spec, cfg.dense_cap)?;
        rows.push(row(
            "full",
            None,
            &report(&p, test.locations(), test.values())?,
        ));
    }
    for &strategy in &cfg.strategies {
        for &k in &cfg.k_grid {
            let knots = make_knots(
                strategy,
                train.locations(),
                &bounds,
                k,
                derive(seed, &[tag("knots")]),
                &cfg.sp,
            )?;
            let p = fit_lowrank(&train, &spec, &knots)?;
            rows.push(row(
                strategy.name(),
                Some(k),
                &report(&p, test.locations(), test.values())?,
            ));
        }
    }
    Ok(RealDataResult {
        result: ExperimentResult::from_rows(rows),
        spec,
        mle_converged,
        n_train: train.len(),
        n_test: test.len(),
    })
}
