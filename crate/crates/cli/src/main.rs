//! `lowrank-gp`: support points, γ estimation, prediction and the seeded
//! simulation studies from the command line.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lowrank_gp::complexity::{estimate_gamma, write_gamma_csv};
use lowrank_gp::harness::{
    run_realdata, run_scenario, run_slope_study, run_tau_sweep, scenario::make_knots, write_result,
    write_slopes_csv, ExperimentConfig, RealDataConfig, SpecSource, Strategy, TestSplit,
};
use lowrank_gp::io::{ingest_csv, read_table, write_table};
use lowrank_gp::knots::{
    random_knots, read_knots_csv, support_points, write_knots_csv, Bounds, EnergyTarget, SpOptions,
};
use lowrank_gp::predict::{fit_full_capped, fit_lowrank, score};
use lowrank_gp::rng::{derive, tag};
use lowrank_gp::{CovarianceSpec, Error};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(
    name = "lowrank-gp",
    version,
    about = "Low-rank Gaussian-process prediction with support-point knots"
)]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "LOWRANK_GP_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate knots (support points, random subsample, or grid) for a location file.
    Sp(SpArgs),
    /// Estimate the eigenvalue decay rate γ of a Matérn covariance.
    Gamma(GammaArgs),
    /// Fit on a training CSV and predict at test locations.
    Predict(PredictArgs),
    /// Run an RMSPE-against-k scenario study.
    Simulate(ExperimentArgs),
    /// Run the log-MSPE against n slope study.
    Slope(ExperimentArgs),
    /// Run the τ² adjustment sweep.
    TauSweep(ExperimentArgs),
    /// Score predictors on a user data file with held-out responses.
    Realdata(RealdataArgs),
}

#[derive(Args)]
struct SpArgs {
    /// Location CSV (x1,...,xd[,y]).
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// sp, rand, spu or grid.
    #[arg(long, default_value = "sp")]
    strategy: String,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args)]
struct SpecArgs {
    #[arg(long)]
    sigma2: f64,
    #[arg(long)]
    psi: f64,
    #[arg(long)]
    nu: f64,
    #[arg(long, default_value_t = 0.0)]
    tau2: f64,
}

impl SpecArgs {
    fn spec(&self) -> Result<CovarianceSpec> {
        CovarianceSpec::new(self.sigma2, self.psi, self.nu, self.tau2)
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Args)]
struct GammaArgs {
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = 2000)]
    n0: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Independent point sets to average over.
    #[arg(long, default_value_t = 1)]
    replicates: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Training CSV with a y column.
    #[arg(long)]
    train: PathBuf,
    /// Test locations; a y column, if present, is scored.
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    /// Knot file; without it and without --k the full predictor is used.
    #[arg(long, conflicts_with = "k")]
    knots: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "sp")]
    strategy: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = lowrank_gp::gpcore::DEFAULT_DENSE_CAP)]
    dense_cap: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Every experiment config key has a flag; flags win over the file.
#[derive(Args)]
struct ExperimentArgs {
    /// JSON config (field names as in the config schema).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// scenario1..scenario4, slope or tau-sweep.
    #[arg(long)]
    preset: Option<String>,
    /// base_seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    n_t: Option<usize>,
    /// true_spec as sigma2,psi,nu,tau2.
    #[arg(long)]
    true_spec: Option<String>,
    /// imposed_specs entry as sigma2,psi,nu,tau2 (repeatable).
    #[arg(long)]
    imposed_spec: Vec<String>,
    /// knot_strategies, comma separated.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    tau_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long)]
    include_full: Option<bool>,
    #[arg(long)]
    dense_cap: Option<usize>,
    #[arg(long)]
    gamma_true: Option<f64>,
    #[arg(long)]
    slope_k_coef: Option<f64>,
    #[arg(long)]
    slope_k_gamma: Option<f64>,
    #[arg(long)]
    tau_k: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RealdataArgs {
    /// JSON config for the run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    train_csv: Option<PathBuf>,
    #[arg(long, conflicts_with = "test_csv")]
    test_fraction: Option<f64>,
    #[arg(long)]
    test_csv: Option<PathBuf>,
    /// Given covariance as sigma2,psi,nu,tau2.
    #[arg(long)]
    spec: Option<String>,
    /// Start the likelihood fit here instead (sigma2,psi,nu,tau2).
    #[arg(long, conflicts_with = "spec")]
    mle_init: Option<String>,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    k_grid: Option<Vec<usize>>,
    #[arg(long)]
    include_full: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dense_cap: Option<usize>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command, cli.threads) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn need_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::Config("--seed is required".into()))
}

fn parse_spec(text: &str) -> Result<CovarianceSpec> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("cannot parse spec {text:?}")))?;
    match v[..] {
        [s, p, n, t] => CovarianceSpec::new(s, p, n, t).map_err(|e| Error::Config(e.to_string())),
        [s, p, n] => CovarianceSpec::new(s, p, n, 0.0).map_err(|e| Error::Config(e.to_string())),
        _ => Err(Error::Config(format!(
            "spec {text:?} needs sigma2,psi,nu[,tau2]"
        ))),
    }
}

fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>> {
    names.iter().map(|s| s.parse()).collect()
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Provenance record written next to every run's outputs.
fn write_run_json(
    dir: &Path,
    command: &str,
    config: Value,
    seeds: Value,
    threads: Option<usize>,
    started: Instant,
) -> Result<()> {
    let canonical = serde_json::to_string(&config)?;
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    let record = json!({
        "command": command,
        "config": config,
        "config_sha256": hash,
        "seeds": seeds,
        "versions": { "lowrank-gp": env!("CARGO_PKG_VERSION") },
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(&record)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn run(command: Command, threads: Option<usize>) -> Result<()> {
    let started = Instant::now();
    match command {
        Command::Sp(a) => {
            let seed = need_seed(a.seed)?;
            let strategy: Strategy = a.strategy.parse()?;
            let points = read_table(&a.input)?.locations;
            let mut opts = SpOptions::default();
            if let Some(m) = a.max_sweeps {
                opts.max_sweeps = m;
            }
            if let Some(r) = a.restarts {
                opts.restarts = r;
            }
            let bounds = Bounds::of(&points)?;
            let knots = match strategy {
                Strategy::Sp => support_points(&points, a.k, seed, &opts)?,
                Strategy::Rand => random_knots(&points, a.k, seed)?,
                _ => make_knots(strategy, &points, &bounds, a.k, seed, &opts)?,
            };
            let knots = knots.with_energy(&EnergyTarget::new(points)?)?;
            write_knots_csv(&a.out, &knots)?;
            println!(
                "{} {} knots, energy distance to data {:.6e}",
                a.k,
                strategy,
                knots.energy_to_data.unwrap_or(f64::NAN)
            );
            let config = json!({
                "input": a.input, "k": a.k, "strategy": strategy.name(),
                "sp": serde_json::to_value(&opts)?,
            });
            write_run_json(
                &parent_dir(&a.out),
                "sp",
                config,
                json!({ "seed": seed }),
                threads,
                started,
            )
        }
        Command::Gamma(a) => {
            let seed = need_seed(a.seed)?;
            let spec = a.spec.spec()?;
            if a.replicates < 1 {
                return Err(Error::Config("--replicates must be at least 1".into()));
            }
            let mut rows = Vec::new();
            for r in 0..a.replicates {
                let s = if a.replicates == 1 {
                    seed
                } else {
                    derive(seed, &[tag("gamma"), r as u64])
                };
                let g = estimate_gamma(&spec, a.n0, s)?;
                rows.push((g, s));
            }
            let gammas: Vec<f64> = rows.iter().map(|(g, _)| g.gamma).collect();
            let mean = gammas.iter().sum::<f64>() / gammas.len() as f64;
            println!("gamma = {mean:.4}");
            out_dir(&a.out_dir)?;
            write_gamma_csv(&a.out_dir.join("gamma.csv"), &rows)?;
            let config = json!({
                "spec": serde_json::to_value(spec)?, "n0": a.n0, "replicates": a.replicates,
            });
            let seeds: Vec<u64> = rows.iter().map(|(_, s)| *s).collect();
            write_run_json(
                &a.out_dir,
                "gamma",
                config,
                json!({ "seed": seed, "replicates": seeds }),
                threads,
                started,
            )
        }
        Command::Predict(a) => {
            let spec = a.spec.spec()?;
            let train = ingest_csv(&a.train)?;
            let test = read_table(&a.test)?;
            let (predictor, method, seed) = match (&a.knots, a.k) {
                (Some(path), _) => (
                    fit_lowrank(&train, &spec, &read_knots_csv(path)?)?,
                    "external".to_string(),
                    None,
                ),
                (None, Some(k)) => {
                    let seed = need_seed(a.seed)?;
                    let strategy: Strategy = a.strategy.parse()?;
                    let bounds = Bounds::of(train.locations())?;
                    let knots = make_knots(
                        strategy,
                        train.locations(),
                        &bounds,
                        k,
                        seed,
                        &SpOptions::default(),
                    )?;
                    (
                        fit_lowrank(&train, &spec, &knots)?,
                        strategy.name().to_string(),
                        Some(seed),
                    )
                }
                (None, None) => (
                    fit_full_capped(&train, &spec, a.dense_cap)?,
                    "full".to_string(),
                    None,
                ),
            };
            let preds = predictor.predict_at(&test.locations)?;
            write_table(&a.out, &test.locations, Some(&preds))?;
            if let Some(truth) = &test.values {
                let s = score(&preds, truth)?;
                println!("{method}: rmspe {:.6e} mspe {:.6e}", s.rmspe, s.mspe);
            }
            let config = json!({
                "train": a.train, "test": a.test, "spec": serde_json::to_value(spec)?,
                "knots": a.knots, "k": a.k, "strategy": method, "dense_cap": a.dense_cap,
            });
            write_run_json(
                &parent_dir(&a.out),
                "predict",
                config,
                json!({ "seed": seed }),
                threads,
                started,
            )
        }
        Command::Simulate(a) => {
            let cfg = experiment_config(&a, "scenario1")?;
            let seed = cfg.seed()?;
            let res = run_scenario(&cfg)?;
            write_result(&a.out_dir, &res)?;
            print_agg(&res.agg);
            write_run_json(
                &a.out_dir,
                "simulate",
                serde_json::to_value(&cfg)?,
                json!({ "base_seed": seed }),
                threads,
                started,
            )
        }
        Command::Slope(a) => {
            let cfg = experiment_config(&a, "slope")?;
            let seed = cfg.seed()?;
            let study = run_slope_study(&cfg)?;
            write_result(&a.out_dir, &study.result)?;
            write_slopes_csv(&a.out_dir.join("slopes.csv"), &study.lines)?;
            for l in &study.lines {
                println!(
                    "{} spec {} (nu {}): slope {:.4} gamma_hat {}",
                    l.method,
                    l.spec_id,
                    l.nu,
                    l.slope,
                    l.gamma_hat
                        .map(|g| format!("{g:.3}"))
                        .unwrap_or_else(|| "n/a".into())
                );
            }
            write_run_json(
                &a.out_dir,
                "slope",
                serde_json::to_value(&cfg)?,
                json!({ "base_seed": seed }),
                threads,
                started,
            )
        }
        Command::TauSweep(a) => {
            let cfg = experiment_config(&a, "tau-sweep")?;
            let seed = cfg.seed()?;
            let res = run_tau_sweep(&cfg)?;
            write_result(&a.out_dir, &res)?;
            print_agg(&res.agg);
            write_run_json(
                &a.out_dir,
                "tau-sweep",
                serde_json::to_value(&cfg)?,
                json!({ "base_seed": seed }),
                threads,
                started,
            )
        }
        Command::Realdata(a) => {
            let cfg = realdata_config(&a)?;
            let res = run_realdata(&cfg)?;
            write_result(&a.out_dir, &res.result)?;
            print_agg(&res.result.agg);
            println!(
                "n_train {} n_test {}; spec sigma2 {} psi {} nu {} tau2 {}",
                res.n_train, res.n_test, res.spec.sigma2, res.spec.psi, res.spec.nu, res.spec.tau2
            );
            let seeds = json!({ "seed": cfg.seed });
            let mut config = serde_json::to_value(&cfg)?;
            config["fitted_spec"] = serde_json::to_value(res.spec)?;
            write_run_json(&a.out_dir, "realdata", config, seeds, threads, started)
        }
    }
}

fn print_agg(agg: &[lowrank_gp::harness::AggRow]) {
    println!("method\tspec\tk\tn\ttau_mult\tmean_rmspe\tse_rmspe");
    for r in agg {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            r.method,
            r.spec_id,
            r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            r.n,
            r.tau_mult
                .map(|m| format!("{m:.4}"))
                .unwrap_or_else(|| "-".into()),
            r.mean_rmspe,
            r.se_rmspe
        );
    }
}

fn experiment_config(a: &ExperimentArgs, default_preset: &str) -> Result<ExperimentConfig> {
    let mut cfg = match (&a.config, &a.preset) {
        (Some(path), _) => read_config::<ExperimentConfig>(path)?,
        (None, Some(p)) => ExperimentConfig::preset(p)?,
        (None, None) => ExperimentConfig::preset(default_preset)?,
    };
    if let Some(v) = a.seed {
        cfg.base_seed = Some(v);
    }
    if let Some(v) = a.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.n_t {
        cfg.n_t = v;
    }
    if let Some(v) = &a.true_spec {
        cfg.true_spec = parse_spec(v)?;
    }
    if !a.imposed_spec.is_empty() {
        cfg.imposed_specs = a
            .imposed_spec
            .iter()
            .map(|s| parse_spec(s))
            .collect::<Result<_>>()?;
    }
    if let Some(v) = &a.strategies {
        cfg.knot_strategies = parse_strategies(v)?;
    }
    if let Some(v) = &a.k_grid {
        cfg.k_grid = v.clone();
    }
    if let Some(v) = &a.tau_grid {
        cfg.tau_grid = Some(v.clone());
    }
    if let Some(v) = &a.n_grid {
        cfg.n_grid = Some(v.clone());
    }
    if let Some(v) = a.include_full {
        cfg.include_full = v;
    }
    if let Some(v) = a.dense_cap {
        cfg.dense_cap = v;
    }
    if let Some(v) = a.gamma_true {
        cfg.gamma_true = Some(v);
    }
    if let Some(v) = a.slope_k_coef {
        cfg.slope_k_coef = v;
    }
    if let Some(v) = a.slope_k_gamma {
        cfg.slope_k_gamma = v;
    }
    if let Some(v) = a.tau_k {
        cfg.tau_k = v;
    }
    cfg.validate()?;
    cfg.seed()?;
    Ok(cfg)
}

fn spec_source(a: &RealdataArgs) -> Result<Option<SpecSource>> {
    Ok(match (&a.spec, &a.mle_init) {
        (Some(s), _) => Some(SpecSource::Given(parse_spec(s)?)),
        (None, Some(s)) => Some(SpecSource::MleSubsample {
            init: parse_spec(s)?,
            max_n: 3000,
            free: lowrank_gp::gpcore::ParamMask::FIXED_NU,
        }),
        (None, None) => None,
    })
}

fn realdata_config(a: &RealdataArgs) -> Result<RealDataConfig> {
    let source = spec_source(a)?;
    let mut cfg = match &a.config {
        Some(path) => read_config::<RealDataConfig>(path)?,
        None => RealDataConfig {
            train_csv: a
                .train_csv
                .clone()
                .ok_or_else(|| Error::Config("--train-csv or --config is required".into()))?,
            test: TestSplit::Fraction(0.05),
            spec: source.clone().ok_or_else(|| {
                Error::Config("give --spec or --mle-init (or a config file)".into())
            })?,
            strategies: vec![Strategy::Sp],
            k_grid: vec![100],
            include_full: false,
            seed: None,
            dense_cap: lowrank_gp::gpcore::DEFAULT_DENSE_CAP,
            sp: SpOptions::default(),
        },
    };
    if let Some(v) = &a.train_csv {
        cfg.train_csv = v.clone();
    }
    if let Some(f) = a.test_fraction {
        cfg.test = TestSplit::Fraction(f);
    }
    if let Some(p) = &a.test_csv {
        cfg.test = TestSplit::File(p.clone());
    }
    if let Some(s) = source {
        cfg.spec = s;
    }
    if let Some(v) = &a.strategies {
        cfg.strategies = parse_strategies(v)?;
    }
    if let Some(v) = &a.k_grid {
        cfg.k_grid = v.clone();
    }
    if let Some(v) = a.include_full {
        cfg.include_full = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = Some(v);
    }
    if let Some(v) = a.dense_cap {
        cfg.dense_cap = v;
    }
    if cfg.seed.is_none() {
        return Err(Error::Config("--seed is required".into()));
    }
    Ok(cfg)
}
