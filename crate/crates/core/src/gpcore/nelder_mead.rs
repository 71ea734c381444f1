//! Derivative-free minimization by the Nelder–Mead simplex method.

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Initial simplex edge length along each coordinate.
    pub step: f64,
    /// Stop when the largest vertex distance from the best vertex falls below this.
    pub diameter_tol: f64,
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            step: 0.25,
            diameter_tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Best objective value after each iteration (non-increasing).
    pub trace: Vec<f64>,
}

fn diameter(simplex: &[(Vec<f64>, f64)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(v, _)| {
            v.iter()
                .zip(best)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

/// Minimize `f` starting from `x0`. Non-finite objective values are treated as +∞.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let m = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..m {
        let mut v = x0.to_vec();
        v[i] += opts.step;
        let fv = eval(&v);
        simplex.push((v, fv));
    }
    let sort = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    sort(&mut simplex);

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = m == 0;
    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let worst = simplex[m].clone();
        let centroid: Vec<f64> = (0..m)
            .map(|k| simplex[..m].iter().map(|(v, _)| v[k]).sum::<f64>() / m as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let xr = along(ALPHA);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(GAMMA);
            let fe = eval(&xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let xc = along(ALPHA * RHO);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(-RHO);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[m] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let v: Vec<f64> = best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(b, x)| b + SIGMA * (x - b))
                        .collect();
                    let fv = eval(&v);
                    *vertex = (v, fv);
                }
            }
        }
        sort(&mut simplex);
        trace.push(simplex[0].1);
        converged = diameter(&simplex) < opts.diameter_tol;
    }

    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        converged,
        iterations,
        evaluations,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            step: 0.5,
            diameter_tol: 1e-9,
            max_iter: 5000,
        };
        let r = minimize(rosen, &[-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!(
            (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
            "{:?}",
            r.x
        );
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_dimensional_problem_is_trivially_converged() {
        let r = minimize(|_| 3.0, &[], &NelderMeadOptions::default());
        assert!(r.converged);
        assert_eq!(r.value, 3.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            ..Default::default()
        };
        let r = minimize(|x| x[0] * x[0] + x[1] * x[1], &[5.0, 5.0], &opts);
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
        assert!(r.value <= 50.0);
    }
}
