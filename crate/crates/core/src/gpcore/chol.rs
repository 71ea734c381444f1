use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{cholesky_in_place, cholesky_in_place_scratch};
use faer::linalg::triangular_solve::{
    solve_lower_triangular_in_place, solve_upper_triangular_in_place,
};
use faer::{Mat, MatMut, MatRef, Par};

use crate::error::{Error, Result};

/// Diagonal jitter levels, as multiples of the matrix scale, tried in order.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// Largest matrix for which a failed factorization reports an eigenvalue
/// condition estimate.
const CONDITION_ESTIMATE_MAX: usize = 2000;

/// Lower Cholesky factor L of a symmetric positive definite matrix A + εI,
/// where ε is the smallest rung of [`JITTER_LADDER`] (times `scale`) that
/// factorizes.
#[derive(Debug, Clone)]
pub struct CholFactor {
    l: Mat<f64>,
    jitter: f64,
}

impl CholFactor {
    /// Factorize a symmetric matrix. `scale` sets the jitter unit (the
    /// marginal variance σ² for covariance matrices).
    pub fn new(a: Mat<f64>, scale: f64) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::domain(format!(
                "cannot factorize a non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        Self::from_fill(n, scale, |mut m| m.copy_from(&a))
    }

    /// Factorize the n×n symmetric matrix written by `fill`. The factorization
    /// runs in place, so `fill` is called again for every jitter retry instead
    /// of keeping a second copy of the matrix.
    pub fn from_fill(n: usize, scale: f64, fill: impl Fn(MatMut<'_, f64>)) -> Result<Self> {
        let mut a = Mat::zeros(n, n);
        let mut mem = MemBuffer::new(cholesky_in_place_scratch::<f64>(
            n,
            Par::Seq,
            Default::default(),
        ));
        for (rung, &eps) in JITTER_LADDER.iter().enumerate() {
            if rung > 0 {
                a.fill(0.0);
            }
            fill(a.as_mut());
            if rung == 0 && (0..n).any(|i| !a[(i, i)].is_finite()) {
                return Err(Error::numerical("matrix has non-finite diagonal", None));
            }
            let jitter = eps * scale;
            if jitter > 0.0 {
                for i in 0..n {
                    a[(i, i)] += jitter;
                }
            }
            let stack = MemStack::new(&mut mem);
            if cholesky_in_place(
                a.as_mut(),
                Default::default(),
                Par::Seq,
                stack,
                Default::default(),
            )
            .is_ok()
                && (0..n).all(|i| a[(i, i)].is_finite())
            {
                for j in 1..n {
                    for i in 0..j {
                        a[(i, j)] = 0.0;
                    }
                }
                return Ok(CholFactor { l: a, jitter });
            }
        }
        let condition = (n <= CONDITION_ESTIMATE_MAX).then(|| {
            a.fill(0.0);
            fill(a.as_mut());
            condition_estimate(a.as_ref())
        });
        Err(Error::numerical(
            format!(
                "Cholesky factorization of a {n}x{n} matrix failed at every jitter level up to {:e}",
                JITTER_LADDER[JITTER_LADDER.len() - 1] * scale
            ),
            condition.flatten(),
        ))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// The jitter that was added to the diagonal (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn l(&self) -> MatRef<'_, f64> {
        self.l.as_ref()
    }

    /// rhs ← L⁻¹ rhs.
    pub fn solve_lower_in_place(&self, rhs: MatMut<'_, f64>) {
        solve_lower_triangular_in_place(self.l.as_ref(), rhs, Par::Seq);
    }

    /// rhs ← L⁻ᵀ rhs.
    pub fn solve_upper_in_place(&self, rhs: MatMut<'_, f64>) {
        solve_upper_triangular_in_place(self.l.transpose(), rhs, Par::Seq);
    }

    /// rhs ← (L Lᵀ)⁻¹ rhs.
    pub fn solve_in_place(&self, mut rhs: MatMut<'_, f64>) {
        self.solve_lower_in_place(rhs.as_mut());
        self.solve_upper_in_place(rhs);
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut x = rhs.to_owned();
        self.solve_in_place(x.as_mut());
        x
    }

    pub fn solve_vec(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.solve_in_place(x.as_mut());
        (0..rhs.len()).map(|i| x[(i, 0)]).collect()
    }

    /// log det(L Lᵀ).
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// L Lᵀ.
    pub fn reconstruct(&self) -> Mat<f64> {
        &self.l * self.l.transpose()
    }
}

/// λ_max / λ_min from a symmetric eigen-decomposition; `None` when the
/// spectrum is unavailable.
fn condition_estimate(a: MatRef<'_, f64>) -> Option<f64> {
    let ev = a.self_adjoint_eigenvalues(faer::Side::Lower).ok()?;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    Some(if min > 0.0 { max / min } else { f64::INFINITY })
}
