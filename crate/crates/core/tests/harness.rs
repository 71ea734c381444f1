use std::path::Path;

use lowrank_gp::gpcore::{add_noise, sample_gp};
use lowrank_gp::harness::{
    mean_sd_se, run_realdata, run_scenario, run_slope_study, run_tau_sweep, write_result,
    ExperimentConfig, RealDataConfig, SpecSource, Strategy, TestSplit,
};
use lowrank_gp::io::write_table;
use lowrank_gp::knots::SpOptions;
use lowrank_gp::{CovarianceSpec, Error, PointSet};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::scenario1();
    cfg.n = 400;
    cfg.n_t = 150;
    cfg.k_grid = vec![25, 64, 144];
    cfg.knot_strategies = vec![Strategy::Sp, Strategy::Rand];
    cfg.imposed_specs.truncate(2);
    cfg.replicates = 3;
    cfg.base_seed = Some(42);
    cfg
}

#[test]
fn runs_are_byte_reproducible() {
    let cfg = small();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_result(a.path(), &run_scenario(&cfg).unwrap()).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let res = single.install(|| run_scenario(&cfg).unwrap());
    write_result(b.path(), &res).unwrap();
    for f in ["raw.csv", "agg.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
    assert!(a.path().join("timings.csv").exists());
}

#[test]
fn aggregates_recompute_from_rows() {
    let res = run_scenario(&small()).unwrap();
    // full + 2 strategies × 3 k, for each of 2 specs.
    assert_eq!(res.agg.len(), 2 * (1 + 2 * 3));
    assert_eq!(res.rows.len(), res.agg.len() * 3);
    for a in &res.agg {
        let cell: Vec<_> = res
            .rows
            .iter()
            .filter(|r| r.method == a.method && r.spec_id == a.spec_id && r.k == a.k)
            .collect();
        assert_eq!(cell.len(), a.replicates);
        let mspe: Vec<f64> = cell.iter().map(|r| r.mspe).collect();
        let (m, sd, se) = mean_sd_se(&mspe);
        assert!((m - a.mean_mspe).abs() < 1e-12);
        assert!((sd - a.sd_mspe).abs() < 1e-12);
        assert!((se - a.se_mspe).abs() < 1e-12);
        let logs: Vec<f64> = mspe.iter().map(|v| v.ln()).collect();
        assert!((mean_sd_se(&logs).0 - a.mean_log_mspe).abs() < 1e-12);
        for r in &cell {
            assert!((r.rmspe * r.rmspe - r.mspe).abs() < 1e-12 * r.mspe);
        }
    }
}

#[test]
fn full_predictor_is_the_lower_envelope() {
    let res = run_scenario(&small()).unwrap();
    let full = res.cell("full", 0, None, None, None).unwrap().mean_mspe;
    for a in res.agg.iter().filter(|a| a.spec_id == 0 && a.method != "full") {
        assert!(full <= a.mean_mspe * 1.001, "{} k={:?}: {} < {full}", a.method, a.k, a.mean_mspe);
    }
    // More SP knots help.
    let sp144 = res.cell("sp", 0, Some(144), None, None).unwrap().mean_mspe;
    let sp25 = res.cell("sp", 0, Some(25), None, None).unwrap().mean_mspe;
    assert!(sp144 < sp25);
}

#[test]
fn capacity_is_checked_before_compute() {
    let mut cfg = small();
    cfg.dense_cap = 100;
    let t = std::time::Instant::now();
    match run_scenario(&cfg) {
        Err(Error::Config(msg)) => assert!(msg.contains("100"), "{msg}"),
        other => panic!("{other:?}"),
    }
    assert!(t.elapsed().as_secs_f64() < 0.5);
    // The joint draw over training and test sites is dense too.
    cfg.include_full = false;
    assert!(matches!(run_scenario(&cfg), Err(Error::Config(_))));
    cfg.dense_cap = 550;
    cfg.include_full = true;
    cfg.replicates = 1;
    assert!(run_scenario(&cfg).is_ok());
}

#[test]
fn missing_seed_is_a_config_error() {
    let mut cfg = small();
    cfg.base_seed = None;
    assert!(matches!(run_scenario(&cfg), Err(Error::Config(_))));
}

#[test]
fn tau_sweep_and_slope_shapes() {
    let mut cfg = ExperimentConfig::tau_sweep();
    cfg.n = 300;
    cfg.n_t = 50;
    cfg.tau_k = 49;
    cfg.tau_grid = Some(vec![0.1, 1.0, 10.0]);
    cfg.replicates = 2;
    cfg.base_seed = Some(3);
    let res = run_tau_sweep(&cfg).unwrap();
    assert_eq!(res.agg.len(), cfg.imposed_specs.len() * 3);
    assert!(res.agg.iter().all(|a| a.k == Some(49) && a.tau_mult.is_some()));

    let mut cfg = ExperimentConfig::slope_study();
    cfg.n_grid = Some(vec![150, 200, 250, 300]);
    cfg.n_t = 50;
    cfg.replicates = 2;
    cfg.base_seed = Some(3);
    let study = run_slope_study(&cfg).unwrap();
    assert_eq!(study.lines.len(), cfg.imposed_specs.len());
    assert!(study.result.agg.iter().any(|a| a.n == 200 && a.k == Some(cfg.slope_k(200))));
    assert!(study.lines.iter().all(|l| l.slope.is_finite()));
}

fn write_field(path: &Path, n: usize, spec: &CovarianceSpec, seed: u64) {
    let x = PointSet::uniform(n, 2, 0.0, 1.0, seed).unwrap();
    let d = add_noise(&sample_gp(&x, spec, seed + 1).unwrap(), spec.tau2, seed + 2).unwrap();
    write_table(path, d.locations(), Some(d.values())).unwrap();
}

fn realdata_cfg(train: &Path, k_grid: Vec<usize>, strategies: Vec<Strategy>) -> RealDataConfig {
    RealDataConfig {
        train_csv: train.to_path_buf(),
        test: TestSplit::Fraction(0.2),
        spec: SpecSource::Given(CovarianceSpec::new(1.5, 0.169, 1.5, 0.27).unwrap()),
        strategies,
        k_grid,
        include_full: true,
        seed: Some(9),
        dense_cap: 12_000,
        sp: SpOptions::default(),
    }
}

#[test]
fn realdata_toy_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("toy.csv");
    let spec = CovarianceSpec::new(1.5, 0.169, 1.5, 0.27).unwrap();
    write_field(&path, 100, &spec, 5);
    let out = run_realdata(&realdata_cfg(&path, vec![10], vec![Strategy::Sp])).unwrap();
    assert_eq!((out.n_train, out.n_test), (80, 20));
    assert_eq!(out.result.rows.len(), 2);
    assert!(out.result.rows.iter().all(|r| r.mspe.is_finite() && r.mspe > 0.0));

    let mut mle = realdata_cfg(&path, vec![10], vec![Strategy::Rand]);
    mle.spec = SpecSource::MleSubsample {
        init: CovarianceSpec::new(1.0, 0.1, 1.5, 0.5).unwrap(),
        max_n: 3000,
        free: lowrank_gp::gpcore::ParamMask::FIXED_NU,
    };
    let out = run_realdata(&mle).unwrap();
    assert!(out.mle_converged.is_some());
    assert_eq!(out.spec.nu, 1.5);
}

#[test]
fn realdata_all_training_knots_equal_full() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    let spec = CovarianceSpec::new(1.5, 0.169, 1.5, 0.27).unwrap();
    write_field(&path, 250, &spec, 6);
    let out = run_realdata(&realdata_cfg(&path, vec![200], vec![Strategy::Rand])).unwrap();
    let full = out.result.cell("full", 0, None, None, None).unwrap().mean_mspe;
    let rand = out.result.cell("rand", 0, Some(200), None, None).unwrap().mean_mspe;
    assert!((full - rand).abs() < 1e-6 * full, "{full} {rand}");
}

#[test]
fn realdata_sp_error_falls_with_k() {
    // A station-network-sized field scaled down: error averaged over seeds
    // should not rise as support points are added.
    let dir = tempfile::tempdir().unwrap();
    let spec = CovarianceSpec::new(1.5, 0.169, 1.5, 0.27).unwrap();
    let ks = vec![30, 60, 120, 240];
    let mut mean = vec![0.0; ks.len()];
    let seeds = 4;
    for s in 0..seeds {
        let path = dir.path().join(format!("f{s}.csv"));
        write_field(&path, 2000, &spec, 100 + 10 * s);
        let mut cfg = realdata_cfg(&path, ks.clone(), vec![Strategy::Sp]);
        cfg.include_full = false;
        cfg.test = TestSplit::Fraction(0.1);
        cfg.seed = Some(s);
        let out = run_realdata(&cfg).unwrap();
        for (i, &k) in ks.iter().enumerate() {
            mean[i] += out.result.cell("sp", 0, Some(k), None, None).unwrap().mean_mspe / seeds as f64;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] <= w[0]), "{mean:?}");
}
