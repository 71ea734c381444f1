use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use super::config::{ExperimentConfig, LocationLaw, Strategy};
use super::output::{ExperimentResult, ResultRow};
use crate::error::{Error, Result};
use crate::gpcore::{add_noise, check_cap, sample_gp_capped, Dataset};
use crate::kernel::{CovarianceSpec, PointSet};
use crate::knots::{grid_knots, random_knots, support_points, Bounds, KnotSet, SpOptions};
use crate::predict::{fit_full_capped, fit_lowrank, report};
use crate::rng::{self, derive, tag};

/// Seed of replicate `r`.
pub fn replicate_seed(base_seed: u64, r: usize) -> u64 {
    rng::mix64(base_seed.wrapping_add(r as u64))
}

/// `n` points on [0,1]² drawn from `law`.
pub fn sample_locations(law: LocationLaw, n: usize, seed: u64) -> Result<PointSet> {
    match law {
        LocationLaw::Uniform => PointSet::uniform(n, 2, 0.0, 1.0, seed),
        LocationLaw::Mixture => {
            let mut s = rng::stream(seed);
            let dense = (n as f64 * 0.75).round() as usize;
            let mut coords = Vec::with_capacity(2 * n);
            for _ in 0..dense {
                coords.push(s.random_range(0.0..0.5));
                coords.push(s.random_range(0.0..0.5));
            }
            // Rejection from [0,1]² \ [0,0.5]².
            while coords.len() < 2 * n {
                let (a, b): (f64, f64) = (s.random_range(0.0..1.0), s.random_range(0.0..1.0));
                if a >= 0.5 || b >= 0.5 {
                    coords.push(a);
                    coords.push(b);
                }
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut s);
            Ok(PointSet::new(2, coords)?.select(&order))
        }
    }
}

/// Knots of `strategy` with `k` points for the training locations.
pub fn make_knots(
    strategy: Strategy,
    train: &PointSet,
    bounds: &Bounds,
    k: usize,
    seed: u64,
    sp: &SpOptions,
) -> Result<KnotSet> {
    let s = derive(seed, &[tag(strategy.name()), k as u64]);
    let knots = match strategy {
        Strategy::Sp => support_points(train, k, s, sp)?,
        Strategy::Rand => random_knots(train, k, s)?,
        Strategy::Grid => grid_knots(bounds, k)?,
        Strategy::Spu => {
            let u = uniform_in(bounds, train.len(), derive(s, &[tag("reference")]))?;
            let mut knots = support_points(&u, k, s, sp)?;
            knots.strategy = crate::knots::KnotStrategy::External;
            knots
        }
    };
    Ok(knots)
}

pub(crate) fn uniform_in(bounds: &Bounds, n: usize, seed: u64) -> Result<PointSet> {
    let u = PointSet::uniform(n, bounds.dim(), 0.0, 1.0, seed)?;
    u.map_points(bounds.dim(), |p| {
        p.iter()
            .enumerate()
            .map(|(j, v)| bounds.lo[j] + v * (bounds.hi[j] - bounds.lo[j]))
            .collect()
    })
}

/// One simulated replicate: latent field at train and test sites plus the
/// noisy training responses.
pub struct Replicate {
    pub train: Dataset,
    pub test: PointSet,
    pub truth: Vec<f64>,
}

/// Sample n + n_t locations, one joint latent realization, split at random,
/// and add N(0, τ²) noise to the training part.
pub fn simulate_replicate(
    law: LocationLaw,
    truth: &CovarianceSpec,
    n: usize,
    n_t: usize,
    dense_cap: usize,
    seed: u64,
) -> Result<Replicate> {
    let all = sample_locations(law, n + n_t, derive(seed, &[tag("locations")]))?;
    let latent = sample_gp_capped(&all, truth, derive(seed, &[tag("field")]), dense_cap)?;
    let mut order: Vec<usize> = (0..n + n_t).collect();
    order.shuffle(&mut rng::stream(derive(seed, &[tag("split")])));
    let (tr, te) = order.split_at(n);
    let train = add_noise(
        &latent.select(tr),
        truth.tau2,
        derive(seed, &[tag("noise")]),
    )?;
    let test = latent.select(te);
    let (test, truth_vals, _) = test.into_parts();
    Ok(Replicate {
        train,
        test,
        truth: truth_vals,
    })
}

/// Capacity checks done before any sampling.
pub(crate) fn check_capacity(cfg: &ExperimentConfig, n: usize) -> Result<()> {
    let as_config = |e: Error| Error::Config(e.to_string());
    check_cap("n + n_t sampling locations", n + cfg.n_t, cfg.dense_cap).map_err(as_config)?;
    if cfg.include_full {
        check_cap("n training points for the full predictor", n, cfg.dense_cap)
            .map_err(as_config)?;
    }
    Ok(())
}

/// What to evaluate inside one replicate.
pub(crate) struct Cells<'a> {
    pub n: usize,
    pub k_grid: &'a [usize],
    /// τ² multipliers; `None` means the imposed τ² as given.
    pub tau_mults: Option<&'a [f64]>,
}

/// Score every (spec, τ² multiplier, method, k) cell of one replicate.
pub(crate) fn run_replicate(
    cfg: &ExperimentConfig,
    cells: &Cells<'_>,
    r: usize,
    seed: u64,
) -> Result<Vec<ResultRow>> {
    let law = cfg.scenario.location_law();
    let rep = simulate_replicate(law, &cfg.true_spec, cells.n, cfg.n_t, cfg.dense_cap, seed)?;
    let bounds = Bounds::unit(2);

    let mut jobs = Vec::new();
    for &strategy in &cfg.knot_strategies {
        for &k in cells.k_grid {
            jobs.push((strategy, k));
        }
    }
    let knots: Vec<KnotSet> = jobs
        .par_iter()
        .map(|&(strategy, k)| {
            make_knots(
                strategy,
                rep.train.locations(),
                &bounds,
                k,
                derive(seed, &[tag("knots")]),
                &cfg.sp,
            )
        })
        .collect::<Result<_>>()?;

    let one = [1.0];
    let mults = cells.tau_mults.unwrap_or(&one);
    let mut rows = Vec::new();
    for (spec_id, base) in cfg.imposed_specs.iter().enumerate() {
        for &m in mults {
            let spec = base.with_tau2(base.tau2 * m)?;
            let tau_mult = cells.tau_mults.map(|_| m);
            let row = |method: &str,
                       k: Option<usize>,
                       rmspe: f64,
                       mspe: f64,
                       fit_s: f64,
                       predict_s: f64| ResultRow {
                scenario: cfg.scenario,
                method: method.to_string(),
                spec_id,
                k,
                n: cells.n,
                tau_mult,
                replicate: r,
                seed,
                rmspe,
                mspe,
                fit_s,
                predict_s,
            };
            if cfg.include_full {
                let p = fit_full_capped(&rep.train, &spec, cfg.dense_cap)?;
                let rep_ = report(&p, &rep.test, &rep.truth)?;
                rows.push(row(
                    "full",
                    None,
                    rep_.rmspe,
                    rep_.mspe,
                    rep_.wall_time_fit,
                    rep_.wall_time_predict,
                ));
            }
            let scored: Vec<_> = jobs
                .par_iter()
                .zip(&knots)
                .map(|(&(strategy, k), kn)| {
                    let p = fit_lowrank(&rep.train, &spec, kn)?;
                    let s = report(&p, &rep.test, &rep.truth)?;
                    Ok(row(
                        strategy.name(),
                        Some(k),
                        s.rmspe,
                        s.mspe,
                        s.wall_time_fit,
                        s.wall_time_predict,
                    ))
                })
                .collect::<Result<_>>()?;
            rows.extend(scored);
        }
    }
    Ok(rows)
}

/// RMSPE against k for each (imposed spec, knot strategy), plus the
/// full-data predictor.
pub fn run_scenario(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    if cfg.k_grid.is_empty() {
        return Err(Error::Config("k_grid is empty".into()));
    }
    check_capacity(cfg, cfg.n)?;
    let base = cfg.seed()?;
    let cells = Cells {
        n: cfg.n,
        k_grid: &cfg.k_grid,
        tau_mults: None,
    };
    let mut rows = Vec::new();
    for r in 0..cfg.replicates {
        rows.extend(run_replicate(cfg, &cells, r, replicate_seed(base, r))?);
    }
    Ok(ExperimentResult::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixture_proportions() {
        let p = sample_locations(LocationLaw::Mixture, 4000, 3).unwrap();
        let dense = p.iter().filter(|x| x[0] < 0.5 && x[1] < 0.5).count();
        assert_eq!(dense, 3000);
        assert!(p.iter().all(|x| x.iter().all(|v| (0.0..1.0).contains(v))));
    }

    #[test]
    fn replicate_seeds_differ() {
        let s: Vec<u64> = (0..50).map(|r| replicate_seed(7, r)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 50);
    }

    #[test]
    fn replicate_shapes() {
        let t = CovarianceSpec::new(1.5, 0.169, 1.5, 0.27).unwrap();
        let r = simulate_replicate(LocationLaw::Uniform, &t, 80, 30, 1000, 1).unwrap();
        assert_eq!(r.train.len(), 80);
        assert_eq!(r.test.len(), 30);
        assert_eq!(r.truth.len(), 30);
    }

    #[test]
    fn knots_for_every_strategy() {
        let x = PointSet::uniform(300, 2, 0.0, 1.0, 2).unwrap();
        for s in [Strategy::Sp, Strategy::Rand, Strategy::Spu, Strategy::Grid] {
            let k = make_knots(s, &x, &Bounds::unit(2), 16, 5, &SpOptions::default()).unwrap();
            assert_eq!(k.len(), 16);
        }
    }
}
