//! Acceptance checks. One PASS/FAIL line per criterion; exits non-zero if
//! any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test --test acceptance -- 3 8`.

use std::process::ExitCode;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::Mat;
use lowrank_gp::complexity::{estimate_gamma, slope_to_gamma, Regime};
use lowrank_gp::gpcore::{add_noise, sample_gp, DataKind, Dataset};
use lowrank_gp::harness::scenario::sample_locations;
use lowrank_gp::harness::{
    mean_sd_se, run_scenario, run_slope_study, run_tau_sweep, ExperimentConfig, ExperimentResult,
    LocationLaw, Strategy,
};
use lowrank_gp::kernel::{cov_matrix, matern, Nystrom};
use lowrank_gp::knots::{
    energy_distance, grid_knots, random_knots, support_points, Bounds, EnergyTarget, KnotSet,
    KnotStrategy, SpOptions,
};
use lowrank_gp::predict::{fit_full, fit_lowrank, KernelRidge};
use lowrank_gp::{CovarianceSpec, PointSet};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn truth() -> CovarianceSpec {
    CovarianceSpec::new(1.5, 0.169, 1.5, 0.27).unwrap()
}

fn gamma_recovery() -> Outcome {
    let spec = truth();
    let g: Vec<f64> = (0..20)
        .map(|s| estimate_gamma(&spec, 2000, SEED + s).unwrap().gamma)
        .collect();
    let (m, sd, _) = mean_sd_se(&g);
    outcome(
        (m - 2.897).abs() <= 0.05,
        format!("mean gamma {m:.4} (sd {sd:.4}) over 20 seeds, target 2.897 +/- 0.05"),
    )
}

fn gamma_consistency() -> Outcome {
    let specs = [(1.5, 0.169), (1.0, 0.147), (2.0, 0.186)];
    let g: Vec<f64> = specs
        .iter()
        .map(|&(s, p)| {
            let spec = CovarianceSpec::new(s, p, 1.5, 0.0).unwrap();
            estimate_gamma(&spec, 4000, SEED).unwrap().gamma
        })
        .collect();
    let gap = g.iter().cloned().fold(f64::MIN, f64::max) - g.iter().cloned().fold(f64::MAX, f64::min);
    outcome(
        gap < 0.06,
        format!("gammas {:.4} {:.4} {:.4}, largest gap {gap:.4} (< 0.06)", g[0], g[1], g[2]),
    )
}

fn energy_ordering() -> Outcome {
    let opts = SpOptions::default();
    let grid = grid_knots(&Bounds::unit(2), 100).unwrap();
    let mut ok = 0;
    let mut sums = [0.0; 3];
    for s in 0..20 {
        let data = sample_locations(LocationLaw::Mixture, 5000, SEED + s).unwrap();
        let target = EnergyTarget::new(data.clone()).unwrap();
        let e_sp = support_points(&data, 100, s, &opts).unwrap().energy_to_data.unwrap();
        let e_rand = target.distance_to(&random_knots(&data, 100, s).unwrap().points).unwrap();
        let e_grid = target.distance_to(&grid.points).unwrap();
        for (acc, e) in sums.iter_mut().zip([e_sp, e_rand, e_grid]) {
            *acc += e / 20.0;
        }
        if e_sp < e_rand && e_rand < e_grid && e_sp < 0.001 && e_rand > 0.002 {
            ok += 1;
        }
    }
    outcome(
        ok >= 18,
        format!(
            "{ok}/20 seeds ordered (need 18); mean energy sp {:.3e} rand {:.3e} grid {:.3e}",
            sums[0], sums[1], sums[2]
        ),
    )
}

fn scenario1_run() -> ExperimentResult {
    let mut cfg = ExperimentConfig::scenario1();
    cfg.imposed_specs.truncate(1);
    cfg.knot_strategies = vec![Strategy::Sp, Strategy::Rand];
    cfg.base_seed = Some(SEED);
    run_scenario(&cfg).unwrap()
}

fn lowrank_convergence(res: &ExperimentResult) -> Outcome {
    let full = res.cell("full", 0, None, None, None).unwrap().mean_rmspe;
    let ks = [36, 64, 100, 144, 196, 289, 400, 484];
    let sp: Vec<f64> = ks
        .iter()
        .map(|&k| res.cell("sp", 0, Some(k), None, None).unwrap().mean_rmspe)
        .collect();
    let steps = sp.windows(2).filter(|w| w[1] < w[0]).count();
    let rel = sp[7] / full - 1.0;
    let curve: Vec<String> = sp.iter().map(|v| format!("{v:.4}")).collect();
    outcome(
        rel.abs() <= 0.05 && steps >= 6,
        format!(
            "k=484 rmspe {:.4} vs full {full:.4} ({:+.2}%), {steps}/7 decreasing steps; curve {}",
            sp[7],
            100.0 * rel,
            curve.join(" ")
        ),
    )
}

fn strategy_ordering(res: &ExperimentResult) -> Outcome {
    let sp = res.cell("sp", 0, Some(100), None, None).unwrap();
    let rand = res.cell("rand", 0, Some(100), None, None).unwrap();
    outcome(
        sp.mean_rmspe < rand.mean_rmspe,
        format!(
            "k=100 rmspe sp {:.4} (se {:.4}) vs rand {:.4} (se {:.4})",
            sp.mean_rmspe, sp.se_rmspe, rand.mean_rmspe, rand.se_rmspe
        ),
    )
}

fn rate_recovery() -> Outcome {
    let mut cfg = ExperimentConfig::slope_study();
    cfg.imposed_specs.truncate(1);
    cfg.base_seed = Some(SEED);
    let study = run_slope_study(&cfg).unwrap();
    let line = &study.lines[0];
    match slope_to_gamma(-line.slope, Regime::True, cfg.gamma_true) {
        Ok(g) => outcome(
            (2.6..=3.2).contains(&g),
            format!(
                "log-MSPE slope {:.4} (r2 {:.3}) gives gamma {g:.3}, need [2.6, 3.2]",
                line.slope, line.r2
            ),
        ),
        Err(e) => outcome(false, format!("slope {:.4} not invertible: {e}", line.slope)),
    }
}

// Mean and SE of the per-replicate MSPE difference (b − a) of two cells.
fn paired(res: &ExperimentResult, spec_id: usize, a: f64, b: f64) -> (f64, f64) {
    let cell = |m: f64| -> Vec<f64> {
        let mut rows: Vec<_> = res
            .rows
            .iter()
            .filter(|r| r.spec_id == spec_id && r.tau_mult == Some(m))
            .collect();
        rows.sort_by_key(|r| r.replicate);
        rows.iter().map(|r| r.mspe).collect()
    };
    let d: Vec<f64> = cell(b).iter().zip(cell(a)).map(|(y, x)| y - x).collect();
    let (m, _, se) = mean_sd_se(&d);
    (m, se)
}

fn tau_sweep() -> Outcome {
    let mut cfg = ExperimentConfig::tau_sweep();
    cfg.base_seed = Some(SEED);
    let res = run_tau_sweep(&cfg).unwrap();
    let mults = cfg.tau_grid.clone().unwrap();
    let one = 1.0;
    let m = |spec_id: usize, t: f64| {
        res.agg
            .iter()
            .find(|a| a.spec_id == spec_id && a.tau_mult == Some(t))
            .unwrap()
    };
    let mut lines = Vec::new();
    let mut pass = true;
    // True spec: every other multiplier worse than 1 by more than one SE.
    for &t in mults.iter().filter(|&&t| t != one) {
        let (d, se) = paired(&res, 0, one, t);
        pass &= d > se;
        if !(d > se) {
            lines.push(format!("true spec x{t:.3}: diff {d:.2e} se {se:.2e}"));
        }
    }
    let best_true = mults
        .iter()
        .min_by(|a, b| m(0, **a).mean_mspe.total_cmp(&m(0, **b).mean_mspe))
        .unwrap();
    lines.insert(0, format!("true spec argmin x{best_true}"));
    // ν = 3 (spec 2) improves at 10^-2; ν = 1 (spec 1) improves at 10^0.5.
    for (spec_id, t, label) in [(2, 1e-2, "nu=3 at 1e-2"), (1, 10f64.powf(0.5), "nu=1 at 10^0.5")] {
        let t = *mults.iter().find(|&&x| (x - t).abs() < 1e-9 * t).unwrap();
        let (d, se) = paired(&res, spec_id, t, one);
        let marginal = m(spec_id, one).se_mspe.max(m(spec_id, t).se_mspe);
        pass &= d > se;
        lines.push(format!(
            "{label}: mspe {:.5} vs {:.5}, gain {d:.2e} paired se {se:.2e} cell se {marginal:.2e}",
            m(spec_id, t).mean_mspe,
            m(spec_id, one).mean_mspe
        ));
    }
    outcome(pass, lines.join("; "))
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs() / scale))
}

fn field(n: usize, spec: &CovarianceSpec, seed: u64) -> Dataset {
    let x = PointSet::uniform(n, 2, 0.0, 1.0, seed).unwrap();
    add_noise(&sample_gp(&x, spec, seed + 1).unwrap(), spec.tau2, seed + 2).unwrap()
}

fn exactness() -> Outcome {
    let spec = truth();
    let mut fails = Vec::new();
    let mut check = |name: &str, err: f64, tol: f64| {
        if !(err < tol) {
            fails.push(format!("{name} {err:.1e} > {tol:.0e}"));
        }
    };

    let data = field(200, &spec, SEED);
    let test = PointSet::uniform(40, 2, 0.0, 1.0, SEED + 5).unwrap();
    let full = fit_full(&data, &spec).unwrap().predict_at(&test).unwrap();
    let at_data = KnotSet::new(data.locations().clone(), KnotStrategy::External).unwrap();
    let low = fit_lowrank(&data, &spec, &at_data).unwrap().predict_at(&test).unwrap();
    check("knots-at-data", max_rel(&low, &full), 1e-6);

    // Direct form C_tk C*⁻¹ C_kn (C_nk C*⁻¹ C_kn + τ²I)⁻¹ y with explicit inverses.
    let data = field(300, &spec, SEED + 10);
    let knots = random_knots(data.locations(), 60, SEED).unwrap();
    let x = data.locations();
    let kp = &knots.points;
    let inv = |m: &Mat<f64>| m.partial_piv_lu().solve(Mat::<f64>::identity(m.nrows(), m.nrows()));
    let cs_inv = inv(&cov_matrix(kp, kp, &spec).unwrap());
    let cnk = cov_matrix(x, kp, &spec).unwrap();
    let mut sys = &cnk * &cs_inv * cnk.transpose();
    for i in 0..300 {
        sys[(i, i)] += spec.tau2;
    }
    let y = Mat::from_fn(300, 1, |i, _| data.values()[i]);
    let direct = cov_matrix(&test, kp, &spec).unwrap() * &cs_inv * cnk.transpose() * inv(&sys) * y;
    let direct: Vec<f64> = (0..test.len()).map(|i| direct[(i, 0)]).collect();
    let smw = fit_lowrank(&data, &spec, &knots).unwrap().predict_at(&test).unwrap();
    check("woodbury-vs-direct", max_rel(&smw, &direct), 1e-8);

    let krr = KernelRidge::fit(&data, &spec).unwrap().predict_at(&test);
    let full = fit_full(&data, &spec).unwrap().predict_at(&test).unwrap();
    check("kernel-ridge", max_rel(&krr, &full), 1e-10);

    let forms: [(f64, fn(f64) -> f64); 3] = [
        (0.5, |r| (-r).exp()),
        (1.5, |r| (1.0 + r) * (-r).exp()),
        (2.5, |r| (1.0 + r + r * r / 3.0) * (-r).exp()),
    ];
    let mut worst: f64 = 0.0;
    for (nu, f) in forms {
        let s = CovarianceSpec::new(1.3, 0.21, nu, 0.0).unwrap();
        for d in [1e-3, 0.05, 0.2, 0.7, 1.4, 3.0] {
            let want = 1.3 * f(d / 0.21);
            worst = worst.max(((matern(d, &s).unwrap() - want) / want).abs());
        }
    }
    check("matern-closed-forms", worst, 1e-10);

    let a = PointSet::uniform(300, 2, 0.0, 1.0, SEED + 20).unwrap();
    let b = PointSet::uniform(40, 2, 0.1, 0.8, SEED + 21).unwrap();
    let ab = energy_distance(&a, &b).unwrap();
    check("energy-symmetry", (ab - energy_distance(&b, &a).unwrap()).abs(), 1e-12);
    check("energy-self", energy_distance(&a, &a).unwrap().abs(), 1e-12);
    check("energy-nonnegative", (-ab).max(0.0), 1e-12);
    let p0 = PointSet::new(1, vec![0.0]).unwrap();
    let p1 = PointSet::new(1, vec![1.0]).unwrap();
    check("energy-hand-value", (energy_distance(&p0, &p1).unwrap() - 2.0).abs(), 1e-12);

    let ny = Nystrom::new(&b, &spec).unwrap();
    let excess = a
        .iter()
        .map(|p| ny.eval(p, p).unwrap() - spec.sigma2)
        .fold(f64::MIN, f64::max);
    check("nystrom-domination", excess.max(0.0), 1e-10);

    outcome(
        fails.is_empty(),
        if fails.is_empty() {
            "knots-at-data, woodbury, kernel ridge, closed forms, energy axioms, nystrom".into()
        } else {
            fails.join("; ")
        },
    )
}

fn cost_contract() -> Outcome {
    let x = PointSet::uniform(5000, 2, 0.0, 1.0, SEED).unwrap();
    let y: Vec<f64> = x.iter().map(|p| (6.0 * p[0]).sin() + p[1]).collect();
    let data = Dataset::new(x, y, DataKind::Observed).unwrap();
    let spec = truth();
    let ks = [100usize, 200, 400, 800];
    let times: Vec<f64> = ks
        .iter()
        .map(|&k| {
            let knots = random_knots(data.locations(), k, SEED).unwrap();
            (0..3)
                .map(|_| {
                    let t = Instant::now();
                    fit_lowrank(&data, &spec, &knots).unwrap();
                    t.elapsed().as_secs_f64()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let lx: Vec<f64> = ks.iter().map(|&k| (k as f64).ln()).collect();
    let ly: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / 4.0, ly.iter().sum::<f64>() / 4.0);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let t: Vec<String> = times.iter().map(|t| format!("{t:.3}s")).collect();
    outcome(
        slope <= 2.3,
        format!("log-log slope {slope:.3} (<= 2.3); fit times {}", t.join(" ")),
    )
}

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let want = |i: usize| picked.is_empty() || picked.contains(&i);
    let mut failed = 0;
    let mut report = |i: usize, name: &str, run: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "{tag} {i} {name}: {} [{:.0}s]",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    };
    if want(1) {
        report(1, "gamma recovery", &mut gamma_recovery);
    }
    if want(2) {
        report(2, "gamma consistency", &mut gamma_consistency);
    }
    if want(3) {
        report(3, "energy distance ordering", &mut energy_ordering);
    }
    if want(4) || want(5) {
        let t = Instant::now();
        let res = scenario1_run();
        println!("  scenario 1 run took {:.0}s", t.elapsed().as_secs_f64());
        if want(4) {
            report(4, "low-rank convergence", &mut || lowrank_convergence(&res));
        }
        if want(5) {
            report(5, "strategy ordering", &mut || strategy_ordering(&res));
        }
    }
    if want(6) {
        report(6, "rate recovery", &mut rate_recovery);
    }
    if want(7) {
        report(7, "tau2 sweep", &mut tau_sweep);
    }
    if want(8) {
        report(8, "exactness", &mut exactness);
    }
    if want(9) {
        report(9, "cost contract", &mut cost_contract);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
