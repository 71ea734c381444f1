//! Matérn covariance, covariance-matrix assembly, and the low-rank kernel
//! induced by a set of knots.

mod bessel;
mod points;

pub use bessel::{bessel_k, bessel_k_scaled};
pub use points::PointSet;

use faer::{Mat, MatMut};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::gpcore::CholFactor;

/// Matérn parameters plus the nugget variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct CovarianceSpec {
    /// Marginal variance σ².
    pub sigma2: f64,
    /// Range ψ, in the units of the locations.
    pub psi: f64,
    /// Smoothness ν.
    pub nu: f64,
    /// Nugget variance τ².
    pub tau2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    sigma2: f64,
    psi: f64,
    nu: f64,
    #[serde(default)]
    tau2: f64,
}

impl TryFrom<RawSpec> for CovarianceSpec {
    type Error = Error;

    fn try_from(r: RawSpec) -> Result<Self> {
        CovarianceSpec::new(r.sigma2, r.psi, r.nu, r.tau2)
    }
}

impl CovarianceSpec {
    pub fn new(sigma2: f64, psi: f64, nu: f64, tau2: f64) -> Result<Self> {
        let spec = CovarianceSpec {
            sigma2,
            psi,
            nu,
            tau2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.sigma2) {
            return Err(Error::domain(format!(
                "sigma2 must be > 0, got {}",
                self.sigma2
            )));
        }
        if !pos(self.psi) {
            return Err(Error::domain(format!("psi must be > 0, got {}", self.psi)));
        }
        if !pos(self.nu) {
            return Err(Error::domain(format!("nu must be > 0, got {}", self.nu)));
        }
        if !(self.tau2.is_finite() && self.tau2 >= 0.0) {
            return Err(Error::domain(format!(
                "tau2 must be >= 0, got {}",
                self.tau2
            )));
        }
        Ok(())
    }

    pub fn with_tau2(self, tau2: f64) -> Result<Self> {
        CovarianceSpec { tau2, ..self }.validated()
    }

    pub fn with_nu(self, nu: f64) -> Result<Self> {
        CovarianceSpec { nu, ..self }.validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate().map(|_| self)
    }

    /// σ²/ψ^{2ν}, the parameter combination identifiable under infill asymptotics.
    pub fn microergodic(&self) -> f64 {
        self.sigma2 / self.psi.powf(2.0 * self.nu)
    }

    pub fn kernel(&self) -> Matern {
        Matern::new(self)
    }
}

/// Largest half-integer order p + 1/2 handled by the polynomial closed form.
const MAX_CLOSED_FORM_ORDER: usize = 12;
const HALF_INTEGER_TOL: f64 = 1e-12;

/// A Matérn correlation evaluator with the order-dependent constants
/// precomputed. Never includes the nugget.
#[derive(Debug, Clone)]
pub struct Matern {
    sigma2: f64,
    inv_psi: f64,
    nu: f64,
    form: Form,
}

#[derive(Debug, Clone)]
enum Form {
    /// ν = p + 1/2: σ² e^{−r} Σ_j coef[j] r^j.
    HalfInteger(Vec<f64>),
    /// (1−ν) ln 2 − ln Γ(ν).
    General(f64),
}

impl Matern {
    pub fn new(spec: &CovarianceSpec) -> Self {
        let p = (spec.nu - 0.5).round();
        let form = if p >= 0.0
            && (spec.nu - 0.5 - p).abs() < HALF_INTEGER_TOL
            && p as usize <= MAX_CLOSED_FORM_ORDER
        {
            Form::HalfInteger(half_integer_poly(p as usize))
        } else {
            Form::General((1.0 - spec.nu) * std::f64::consts::LN_2 - ln_gamma(spec.nu))
        };
        Matern {
            sigma2: spec.sigma2,
            inv_psi: 1.0 / spec.psi,
            nu: spec.nu,
            form,
        }
    }

    /// Covariance at Euclidean distance `dist ≥ 0`.
    #[inline]
    pub fn eval(&self, dist: f64) -> f64 {
        if dist == 0.0 {
            return self.sigma2;
        }
        let r = dist * self.inv_psi;
        match &self.form {
            Form::HalfInteger(coef) => {
                let poly = coef.iter().rev().fold(0.0, |acc, &c| acc * r + c);
                self.sigma2 * poly * (-r).exp()
            }
            Form::General(log_front) => {
                let ks = bessel_k_scaled(self.nu, r);
                let v = self.sigma2 * (log_front + self.nu * r.ln() - r + ks.ln()).exp();
                if v.is_finite() {
                    v.min(self.sigma2)
                } else {
                    // x^ν K_ν(x) overflowed on its way to the finite limit at r → 0.
                    self.sigma2
                }
            }
        }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
}

/// Coefficients (ascending powers of r) of the polynomial factor of the
/// Matérn correlation at ν = p + 1/2:
/// p!/(2p)! Σ_{i=0}^{p} (p+i)!/(i!(p−i)!) (2r)^{p−i}.
fn half_integer_poly(p: usize) -> Vec<f64> {
    let fact = |n: usize| (1..=n).fold(1.0f64, |a, k| a * k as f64);
    let lead = fact(p) / fact(2 * p);
    let mut coef = vec![0.0; p + 1];
    for i in 0..=p {
        let power = p - i;
        coef[power] = lead * fact(p + i) / (fact(i) * fact(p - i)) * 2f64.powi(power as i32);
    }
    coef
}

/// Matérn covariance at distance `dist` (no nugget).
pub fn matern(dist: f64, spec: &CovarianceSpec) -> Result<f64> {
    if !dist.is_finite() || dist < 0.0 {
        return Err(Error::domain(format!(
            "distance must be finite and nonnegative, got {dist}"
        )));
    }
    spec.validate()?;
    Ok(Matern::new(spec).eval(dist))
}

#[inline]
pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fill `m` with `f(i, j)`, splitting columns across the rayon pool. Each
/// entry is computed independently, so the result does not depend on the
/// number of threads.
pub(crate) fn fill_par<F>(m: MatMut<'_, f64>, f: &F)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    fill_cols(m, 0, f)
}

fn fill_cols<F>(mut m: MatMut<'_, f64>, col0: usize, f: &F)
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    const LEAF_COLS: usize = 32;
    let ncols = m.ncols();
    if ncols <= LEAF_COLS || m.nrows() * ncols < 4096 {
        for j in 0..ncols {
            for i in 0..m.nrows() {
                m[(i, j)] = f(i, col0 + j);
            }
        }
        return;
    }
    let mid = ncols / 2;
    let (left, right) = m.split_at_col_mut(mid);
    rayon::join(
        || fill_cols(left, col0, f),
        || fill_cols(right, col0 + mid, f),
    );
}

/// Cross-covariance matrix with entries c(a_i, b_j). Nugget not included.
pub fn cov_matrix(a: &PointSet, b: &PointSet, spec: &CovarianceSpec) -> Result<Mat<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    spec.validate()?;
    let k = spec.kernel();
    let mut m = Mat::zeros(a.len(), b.len());
    fill_par(m.as_mut(), &|i, j| k.eval(euclid(a.point(i), b.point(j))));
    Ok(m)
}

/// Symmetric covariance matrix of a single point set. The diagonal is exactly σ².
pub fn cov_matrix_sym(a: &PointSet, spec: &CovarianceSpec) -> Result<Mat<f64>> {
    spec.validate()?;
    let k = spec.kernel();
    let mut m = Mat::zeros(a.len(), a.len());
    fill_par(m.as_mut(), &|i, j| {
        // Evaluate each unordered pair with the same argument order so the
        // matrix is bitwise symmetric.
        let (p, q) = if i <= j { (i, j) } else { (j, i) };
        k.eval(euclid(a.point(p), a.point(q)))
    });
    Ok(m)
}

/// The rank-k kernel c̃(x, x') = c*(x)ᵀ C*⁻¹ c*(x') induced by a knot set.
#[derive(Debug, Clone)]
pub struct Nystrom {
    knots: PointSet,
    kernel: Matern,
    factor: CholFactor,
}

impl Nystrom {
    pub fn new(knots: &PointSet, spec: &CovarianceSpec) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::domain("knot set is empty"));
        }
        let cstar = cov_matrix_sym(knots, spec)?;
        let factor = CholFactor::new(cstar, spec.sigma2)?;
        Ok(Nystrom {
            knots: knots.clone(),
            kernel: spec.kernel(),
            factor,
        })
    }

    /// L⁻¹ c*(x) where C* = L Lᵀ.
    fn whitened(&self, x: &[f64]) -> Result<Mat<f64>> {
        if x.len() != self.knots.dim() {
            return Err(Error::domain(format!(
                "point has dimension {}, knots have {}",
                x.len(),
                self.knots.dim()
            )));
        }
        let mut v = Mat::from_fn(self.knots.len(), 1, |i, _| {
            self.kernel.eval(euclid(x, self.knots.point(i)))
        });
        self.factor.solve_lower_in_place(v.as_mut());
        Ok(v)
    }

    pub fn eval(&self, x1: &[f64], x2: &[f64]) -> Result<f64> {
        let v1 = self.whitened(x1)?;
        let v2 = self.whitened(x2)?;
        Ok((0..v1.nrows()).map(|i| v1[(i, 0)] * v2[(i, 0)]).sum())
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }
}

/// One evaluation of the low-rank kernel. Build a [`Nystrom`] directly when
/// evaluating many pairs against the same knots.
pub fn lowrank_kernel(
    x1: &[f64],
    x2: &[f64],
    knots: &PointSet,
    spec: &CovarianceSpec,
) -> Result<f64> {
    Nystrom::new(knots, spec)?.eval(x1, x2)
}
