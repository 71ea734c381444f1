//! Dense Gaussian-process services: factorization, sampling, likelihood and
//! maximum-likelihood fitting.

mod chol;
pub mod nelder_mead;

pub use chol::{CholFactor, JITTER_LADDER};

use faer::Mat;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{euclid, fill_par, CovarianceSpec, PointSet};
use crate::rng;

/// Default ceiling on the size of any dense n×n covariance factorization.
pub const DEFAULT_DENSE_CAP: usize = 12_000;

/// Whether the values are noisy responses or noiseless latent function values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Observed,
    Latent,
}

/// Locations paired with one value each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    locations: PointSet,
    values: Vec<f64>,
    kind: DataKind,
}

impl Dataset {
    pub fn new(locations: PointSet, values: Vec<f64>, kind: DataKind) -> Result<Self> {
        if locations.len() != values.len() {
            return Err(Error::domain(format!(
                "{} locations but {} values",
                locations.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("value {i} is not finite")));
        }
        Ok(Dataset {
            locations,
            values,
            kind,
        })
    }

    pub fn locations(&self) -> &PointSet {
        &self.locations
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> DataKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            locations: self.locations.select(indices),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            kind: self.kind,
        }
    }

    /// Same locations, values replaced.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.locations.clone(), values, self.kind)
    }

    pub fn into_parts(self) -> (PointSet, Vec<f64>, DataKind) {
        (self.locations, self.values, self.kind)
    }
}

pub(crate) fn check_cap(what: &'static str, n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::Capacity {
            what,
            requested: n,
            cap,
            flag: "--dense-cap",
        });
    }
    Ok(())
}

/// Factor C + τ²I for the given locations.
pub fn factor_covariance(locations: &PointSet, spec: &CovarianceSpec) -> Result<CholFactor> {
    spec.validate()?;
    let kernel = spec.kernel();
    let tau2 = spec.tau2;
    CholFactor::from_fill(locations.len(), spec.sigma2, |m| {
        fill_par(m, &|i, j| {
            if i == j {
                kernel.sigma2() + tau2
            } else if i > j {
                kernel.eval(euclid(locations.point(j), locations.point(i)))
            } else {
                0.0
            }
        })
    })
}

/// Draw one realization f = L z of the zero-mean GP at `locations`
/// (nugget excluded), with z from the stream for `seed`.
pub fn sample_gp(locations: &PointSet, spec: &CovarianceSpec, seed: u64) -> Result<Dataset> {
    sample_gp_capped(locations, spec, seed, DEFAULT_DENSE_CAP)
}

pub fn sample_gp_capped(
    locations: &PointSet,
    spec: &CovarianceSpec,
    seed: u64,
    cap: usize,
) -> Result<Dataset> {
    check_cap("number of sampling locations", locations.len(), cap)?;
    let latent = CovarianceSpec { tau2: 0.0, ..*spec };
    let factor = factor_covariance(locations, &latent)?;
    let n = locations.len();
    let mut stream = rng::stream(seed);
    let z = Mat::from_fn(n, 1, |_, _| -> f64 { StandardNormal.sample(&mut stream) });
    let f = factor.l() * &z;
    Dataset::new(
        locations.clone(),
        (0..n).map(|i| f[(i, 0)]).collect(),
        DataKind::Latent,
    )
}

/// y = f + ε with ε iid N(0, τ²) from the stream for `seed`.
pub fn add_noise(data: &Dataset, tau2: f64, seed: u64) -> Result<Dataset> {
    if !(tau2.is_finite() && tau2 >= 0.0) {
        return Err(Error::domain(format!("tau2 must be >= 0, got {tau2}")));
    }
    let values = if tau2 == 0.0 {
        data.values.clone()
    } else {
        let noise = Normal::new(0.0, tau2.sqrt()).map_err(|e| Error::domain(e.to_string()))?;
        let mut stream = rng::stream(seed);
        data.values
            .iter()
            .map(|f| f + noise.sample(&mut stream))
            .collect()
    };
    Dataset::new(data.locations.clone(), values, DataKind::Observed)
}

/// Gaussian negative log-likelihood from a factor of C + τ²I.
pub fn nll_from_factor(factor: &CholFactor, y: &[f64]) -> f64 {
    let n = y.len();
    let mut w = Mat::from_fn(n, 1, |i, _| y[i]);
    factor.solve_lower_in_place(w.as_mut());
    let quad: f64 = (0..n).map(|i| w[(i, 0)] * w[(i, 0)]).sum();
    0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + factor.log_det() + quad)
}

/// (n/2) log 2π + ½ log|C + τ²I| + ½ yᵀ(C + τ²I)⁻¹y.
pub fn nll(data: &Dataset, spec: &CovarianceSpec) -> Result<f64> {
    check_cap("number of observations", data.len(), DEFAULT_DENSE_CAP)?;
    let factor = factor_covariance(&data.locations, spec)?;
    Ok(nll_from_factor(&factor, &data.values))
}

/// Which covariance parameters the likelihood fit may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamMask {
    pub sigma2: bool,
    pub psi: bool,
    pub nu: bool,
    pub tau2: bool,
}

impl ParamMask {
    pub const NONE: ParamMask = ParamMask {
        sigma2: false,
        psi: false,
        nu: false,
        tau2: false,
    };

    /// σ², ψ and τ² free; ν held fixed.
    pub const FIXED_NU: ParamMask = ParamMask {
        sigma2: true,
        psi: true,
        nu: false,
        tau2: true,
    };

    fn flags(&self) -> [bool; 4] {
        [self.sigma2, self.psi, self.nu, self.tau2]
    }
}

#[derive(Debug, Clone)]
pub struct MleFit {
    pub spec: CovarianceSpec,
    pub nll: f64,
    pub init_nll: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best negative log-likelihood after each simplex iteration.
    pub trace: Vec<f64>,
}

fn spec_to_array(s: &CovarianceSpec) -> [f64; 4] {
    [s.sigma2, s.psi, s.nu, s.tau2]
}

fn array_to_spec(a: [f64; 4]) -> CovarianceSpec {
    CovarianceSpec {
        sigma2: a[0],
        psi: a[1],
        nu: a[2],
        tau2: a[3],
    }
}

/// Maximum-likelihood estimate of the free parameters by Nelder–Mead on
/// their logarithms. Non-convergence is reported through `converged`, with
/// the best point found returned.
pub fn fit_mle(data: &Dataset, init: &CovarianceSpec, free: ParamMask) -> Result<MleFit> {
    fit_mle_with(data, init, free, &nelder_mead::NelderMeadOptions::default())
}

pub fn fit_mle_with(
    data: &Dataset,
    init: &CovarianceSpec,
    free: ParamMask,
    opts: &nelder_mead::NelderMeadOptions,
) -> Result<MleFit> {
    init.validate()?;
    check_cap("number of observations", data.len(), DEFAULT_DENSE_CAP)?;
    let flags = free.flags();
    let base = spec_to_array(init);
    if flags[3] && base[3] <= 0.0 {
        return Err(Error::domain(
            "a free tau2 needs a positive starting value (it is optimized on the log scale)",
        ));
    }
    let free_idx: Vec<usize> = (0..4).filter(|&i| flags[i]).collect();
    let unpack = |x: &[f64]| {
        let mut a = base;
        for (slot, &i) in free_idx.iter().enumerate() {
            a[i] = x[slot].exp();
        }
        array_to_spec(a)
    };
    let objective = |x: &[f64]| {
        let s = unpack(x);
        if s.validate().is_err() {
            return f64::INFINITY;
        }
        factor_covariance(&data.locations, &s)
            .map(|f| nll_from_factor(&f, &data.values))
            .unwrap_or(f64::INFINITY)
    };
    let x0: Vec<f64> = free_idx.iter().map(|&i| base[i].ln()).collect();
    let init_nll = nll(data, init)?;
    let res = nelder_mead::minimize(objective, &x0, opts);
    // The start is a simplex vertex, so the result can only improve on it;
    // keep `init` verbatim when nothing is free.
    let spec = if free_idx.is_empty() {
        *init
    } else {
        unpack(&res.x)
    };
    let value = if free_idx.is_empty() {
        init_nll
    } else {
        res.value
    };
    Ok(MleFit {
        spec,
        nll: value,
        init_nll,
        converged: res.converged,
        iterations: res.iterations,
        evaluations: res.evaluations,
        trace: res.trace,
    })
}

/// Fit on a seeded random subsample of at most `max_n` observations.
pub fn fit_mle_subsample(
    data: &Dataset,
    init: &CovarianceSpec,
    free: ParamMask,
    max_n: usize,
    seed: u64,
) -> Result<MleFit> {
    if data.len() <= max_n {
        return fit_mle(data, init, free);
    }
    let mut stream = rng::stream(seed);
    let mut idx = rand::seq::index::sample(&mut stream, data.len(), max_n).into_vec();
    idx.sort_unstable();
    fit_mle(&data.select(&idx), init, free)
}
