//! Full-data kriging and low-rank predictive-process prediction.
//!
//! Both predictors reduce to f̂(x) = b(x)ᵀ w for a basis b and a weight
//! vector fixed at fit time:
//!
//! * full: b(x) = c(x) over the n training sites, w = (C + τ²I)⁻¹ y;
//! * low rank: b(x) = c*(x) over the k knots, and by the Woodbury identity
//!   w = (τ²C* + C*ₙₖᵀC*ₙₖ)⁻¹ C*ₙₖᵀ y, a k×k solve.

use std::path::Path;
use std::time::Instant;

use faer::Mat;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gpcore::{check_cap, factor_covariance, CholFactor, Dataset, DEFAULT_DENSE_CAP};
use crate::kernel::{cov_matrix, euclid, CovarianceSpec, Matern, PointSet};
use crate::knots::KnotSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Full,
    LowRank,
}

/// A fitted predictor. Immutable once built.
#[derive(Debug, Clone)]
pub struct Predictor {
    kind: PredictorKind,
    spec: CovarianceSpec,
    kernel: Matern,
    train: Dataset,
    knots: Option<KnotSet>,
    /// Basis sites: training locations (full) or knots (low rank).
    basis: PointSet,
    weights: Vec<f64>,
    jitter: f64,
    fit_seconds: f64,
}

/// Exact kriging predictor; factorizes C + τ²I once.
pub fn fit_full(train: &Dataset, spec: &CovarianceSpec) -> Result<Predictor> {
    fit_full_capped(train, spec, DEFAULT_DENSE_CAP)
}

pub fn fit_full_capped(train: &Dataset, spec: &CovarianceSpec, cap: usize) -> Result<Predictor> {
    spec.validate()?;
    check_cap("number of training points", train.len(), cap)?;
    let start = Instant::now();
    let factor = factor_covariance(train.locations(), spec)?;
    let weights = factor.solve_vec(train.values());
    Ok(Predictor {
        kind: PredictorKind::Full,
        spec: *spec,
        kernel: spec.kernel(),
        train: train.clone(),
        knots: None,
        basis: train.locations().clone(),
        weights,
        jitter: factor.jitter(),
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Predictive-process predictor on the given knots. Cost O(nk²).
pub fn fit_lowrank(train: &Dataset, spec: &CovarianceSpec, knots: &KnotSet) -> Result<Predictor> {
    spec.validate()?;
    if spec.tau2 <= 0.0 {
        return Err(Error::domain(
            "the low-rank predictor needs tau2 > 0; use the full predictor for interpolation",
        ));
    }
    if knots.points.dim() != train.locations().dim() {
        return Err(Error::domain(format!(
            "knots have dimension {}, training locations {}",
            knots.points.dim(),
            train.locations().dim()
        )));
    }
    let start = Instant::now();
    let k = knots.len();
    let c_nk = cov_matrix(train.locations(), &knots.points, spec)?;
    let c_star = cov_matrix(&knots.points, &knots.points, spec)?;
    let gram = c_nk.transpose() * &c_nk;
    let system = Mat::from_fn(k, k, |i, j| spec.tau2 * c_star[(i, j)] + gram[(i, j)]);
    let scale = (0..k).map(|i| system[(i, i)]).sum::<f64>() / k as f64;
    let factor = CholFactor::new(system, scale)?;
    let y = Mat::from_fn(train.len(), 1, |i, _| train.values()[i]);
    let rhs = c_nk.transpose() * &y;
    let w = factor.solve(rhs.as_ref());
    Ok(Predictor {
        kind: PredictorKind::LowRank,
        spec: *spec,
        kernel: spec.kernel(),
        train: train.clone(),
        knots: Some(knots.clone()),
        basis: knots.points.clone(),
        weights: (0..k).map(|i| w[(i, 0)]).collect(),
        jitter: factor.jitter(),
        fit_seconds: start.elapsed().as_secs_f64(),
    })
}

impl Predictor {
    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn spec(&self) -> &CovarianceSpec {
        &self.spec
    }

    pub fn train(&self) -> &Dataset {
        &self.train
    }

    pub fn knots(&self) -> Option<&KnotSet> {
        self.knots.as_ref()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn fit_seconds(&self) -> f64 {
        self.fit_seconds
    }

    /// Basis weights w in f̂(x) = b(x)ᵀ w.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Refit on the same locations (and knots) with new responses.
    pub fn refit(&self, values: Vec<f64>) -> Result<Predictor> {
        let train = self.train.with_values(values)?;
        match &self.knots {
            None => fit_full_capped(&train, &self.spec, usize::MAX),
            Some(knots) => fit_lowrank(&train, &self.spec, knots),
        }
    }

    /// Point predictions at every test location.
    pub fn predict_at(&self, test: &PointSet) -> Result<Vec<f64>> {
        if test.dim() != self.basis.dim() {
            return Err(Error::domain(format!(
                "test points have dimension {}, predictor expects {}",
                test.dim(),
                self.basis.dim()
            )));
        }
        Ok((0..test.len())
            .into_par_iter()
            .map(|t| {
                let x = test.point(t);
                self.basis
                    .iter()
                    .zip(&self.weights)
                    .map(|(b, w)| self.kernel.eval(euclid(b, x)) * w)
                    .sum()
            })
            .collect())
    }
}

/// Squared-error summary of a prediction vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub rmspe: f64,
    pub mspe: f64,
}

/// Mean squared prediction error against `truth` (latent values in
/// simulations, held-out responses for real data).
pub fn score(predictions: &[f64], truth: &[f64]) -> Result<Score> {
    if predictions.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} predictions but {} truth values",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::domain("cannot score an empty prediction set"));
    }
    let mspe = predictions
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(Score {
        rmspe: mspe.sqrt(),
        mspe,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionReport {
    pub predictions: Vec<f64>,
    pub rmspe: f64,
    pub mspe: f64,
    pub wall_time_fit: f64,
    pub wall_time_predict: f64,
}

/// Predict at `test` and score against `truth`.
pub fn report(p: &Predictor, test: &PointSet, truth: &[f64]) -> Result<PredictionReport> {
    let start = Instant::now();
    let predictions = p.predict_at(test)?;
    let wall_time_predict = start.elapsed().as_secs_f64();
    let s = score(&predictions, truth)?;
    Ok(PredictionReport {
        predictions,
        rmspe: s.rmspe,
        mspe: s.mspe,
        wall_time_fit: p.fit_seconds(),
        wall_time_predict,
    })
}

/// One line of a prediction report CSV.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub k: Option<usize>,
    pub seed: u64,
    pub rmspe: f64,
    pub mspe: f64,
    pub fit_s: f64,
    pub predict_s: f64,
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    use crate::io::fmt_f64;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "k", "seed", "rmspe", "mspe", "fit_s", "predict_s"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            fmt_f64(r.rmspe),
            fmt_f64(r.mspe),
            fmt_f64(r.fit_s),
            fmt_f64(r.predict_s),
        ])?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Kernel ridge regression over the span of c(·, x_i):
/// minimize (1/n) Σ {y_i − η(x_i)}² + (τ²/n) ‖η‖²_H.
///
/// With η = Σ α_i c(·, x_i) the objective is (1/n)‖y − Cα‖² + (τ²/n) αᵀCα,
/// whose stationarity condition C{(C + τ²I)α − y} = 0 is solved by the
/// representer system (C + τ²I)α = y. Solved by LU here, independently of
/// the Cholesky path used by [`fit_full`].
#[derive(Debug, Clone)]
pub struct KernelRidge {
    sites: PointSet,
    gram: Mat<f64>,
    y: Vec<f64>,
    lambda: f64,
    alpha: Vec<f64>,
    kernel: Matern,
}

impl KernelRidge {
    pub fn fit(train: &Dataset, spec: &CovarianceSpec) -> Result<Self> {
        use faer::linalg::solvers::Solve;
        spec.validate()?;
        let n = train.len();
        let lambda = spec.tau2 / n as f64;
        let gram = cov_matrix(train.locations(), train.locations(), spec)?;
        let system = Mat::from_fn(n, n, |i, j| {
            gram[(i, j)] + if i == j { n as f64 * lambda } else { 0.0 }
        });
        let y = Mat::from_fn(n, 1, |i, _| train.values()[i]);
        let alpha = system.partial_piv_lu().solve(&y);
        Ok(KernelRidge {
            sites: train.locations().clone(),
            gram,
            y: train.values().to_vec(),
            lambda,
            alpha: (0..n).map(|i| alpha[(i, 0)]).collect(),
            kernel: spec.kernel(),
        })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    fn gram_times(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.gram[(i, j)] * v[j]).sum())
            .collect()
    }

    /// Objective value at coefficient vector `alpha`.
    pub fn objective(&self, alpha: &[f64]) -> f64 {
        let n = self.y.len() as f64;
        let ca = self.gram_times(alpha);
        let fit: f64 = self.y.iter().zip(&ca).map(|(y, f)| (y - f) * (y - f)).sum();
        let pen: f64 = alpha.iter().zip(&ca).map(|(a, c)| a * c).sum();
        fit / n + self.lambda * pen
    }

    /// Gradient of the objective with respect to `alpha`.
    pub fn gradient(&self, alpha: &[f64]) -> Vec<f64> {
        let n = self.y.len() as f64;
        let ca = self.gram_times(alpha);
        let resid: Vec<f64> = ca.iter().zip(&self.y).map(|(c, y)| c - y).collect();
        let g1 = self.gram_times(&resid);
        g1.iter()
            .zip(&ca)
            .map(|(r, c)| 2.0 / n * r + 2.0 * self.lambda * c)
            .collect()
    }

    pub fn predict_at(&self, test: &PointSet) -> Vec<f64> {
        test.iter()
            .map(|x| {
                self.sites
                    .iter()
                    .zip(&self.alpha)
                    .map(|(s, a)| self.kernel.eval(euclid(s, x)) * a)
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpcore::DataKind;
    use crate::knots::KnotStrategy;

    fn one_point(y: f64) -> Dataset {
        Dataset::new(
            PointSet::new(1, vec![0.0]).unwrap(),
            vec![y],
            DataKind::Observed,
        )
        .unwrap()
    }

    #[test]
    fn scalar_full_prediction() {
        let s = CovarianceSpec::new(1.0, 1.0, 1.5, 1.0).unwrap();
        let p = fit_full(&one_point(2.0), &s).unwrap();
        let v = p.predict_at(&PointSet::new(1, vec![0.0]).unwrap()).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scalar_lowrank_matches_direct_form() {
        // One knot at z, one datum at x: direct form
        // c(x̃,z) c(z,z)⁻¹ c(x,z) (c(x,z)² / c(z,z) + τ²)⁻¹ y.
        let s = CovarianceSpec::new(1.3, 0.4, 1.5, 0.2).unwrap();
        let (x, z, xt, y) = (0.1, 0.35, 0.6, 1.7);
        let c = |a: f64, b: f64| s.kernel().eval((a - b).abs());
        let direct = c(xt, z) / c(z, z) * c(x, z) / (c(x, z) * c(x, z) / c(z, z) + s.tau2) * y;
        let train = Dataset::new(
            PointSet::new(1, vec![x]).unwrap(),
            vec![y],
            DataKind::Observed,
        )
        .unwrap();
        let knots =
            KnotSet::new(PointSet::new(1, vec![z]).unwrap(), KnotStrategy::External).unwrap();
        let p = fit_lowrank(&train, &s, &knots).unwrap();
        let got = p.predict_at(&PointSet::new(1, vec![xt]).unwrap()).unwrap()[0];
        assert!(((got - direct) / direct).abs() < 1e-13, "{got} vs {direct}");
    }

    #[test]
    fn lowrank_rejects_zero_nugget() {
        let s = CovarianceSpec::new(1.0, 1.0, 1.5, 0.0).unwrap();
        let knots = KnotSet::new(PointSet::new(1, vec![0.0]).unwrap(), KnotStrategy::Grid).unwrap();
        let err = fit_lowrank(&one_point(1.0), &s, &knots).unwrap_err();
        assert!(err.to_string().contains("full predictor"));
    }

    #[test]
    fn empty_test_set() {
        let s = CovarianceSpec::new(1.0, 1.0, 1.5, 0.5).unwrap();
        let p = fit_full(&one_point(2.0), &s).unwrap();
        assert!(p.predict_at(&PointSet::empty(1)).unwrap().is_empty());
        assert!(p.predict_at(&PointSet::empty(2)).is_err());
    }

    #[test]
    fn score_hand_cases() {
        assert_eq!(score(&[1.0, 2.0], &[1.0, 2.0]).unwrap().rmspe, 0.0);
        assert!((score(&[2.0, 3.0], &[1.0, 2.0]).unwrap().rmspe - 1.0).abs() < 1e-15);
        let s = score(&[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert!((s.rmspe - 2.5f64.sqrt()).abs() < 1e-15);
        assert!((s.rmspe * s.rmspe - s.mspe).abs() <= 1e-12 * s.mspe);
        assert!(score(&[1.0], &[1.0, 2.0]).is_err());
        assert!(score(&[], &[]).is_err());
    }
}
