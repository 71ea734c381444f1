use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpcore::DEFAULT_DENSE_CAP;
use crate::kernel::CovarianceSpec;
use crate::knots::SpOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    StrongCorr,
    WeakCorr,
    Consistency,
    NonuniformFx,
    Custom,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::StrongCorr => "strong_corr",
            Scenario::WeakCorr => "weak_corr",
            Scenario::Consistency => "consistency",
            Scenario::NonuniformFx => "nonuniform_fx",
            Scenario::Custom => "custom",
        }
    }

    /// Distribution of the sampling locations.
    pub fn location_law(&self) -> LocationLaw {
        match self {
            Scenario::NonuniformFx => LocationLaw::Mixture,
            _ => LocationLaw::Uniform,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocationLaw {
    /// Uniform on [0,1]².
    Uniform,
    /// 75% uniform on [0,0.5]², 25% uniform on the rest of [0,1]².
    Mixture,
}

/// Knot strategies available to experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Support points of the training locations.
    Sp,
    /// Random subsample of the training locations.
    Rand,
    /// Support points of a uniform sample on the bounding box.
    Spu,
    /// Regular cell-centered grid on the bounding box.
    Grid,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Sp => "sp",
            Strategy::Rand => "rand",
            Strategy::Spu => "spu",
            Strategy::Grid => "grid",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sp" => Ok(Strategy::Sp),
            "rand" | "random" => Ok(Strategy::Rand),
            "spu" => Ok(Strategy::Spu),
            "grid" => Ok(Strategy::Grid),
            other => Err(Error::Config(format!(
                "unknown knot strategy {other:?}; expected sp, rand, spu or grid"
            ))),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}

fn default_slope_k_coef() -> f64 {
    1.5
}

fn default_slope_k_gamma() -> f64 {
    2.9
}

fn default_tau_k() -> usize {
    484
}

/// A complete, declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub n_t: usize,
    pub true_spec: CovarianceSpec,
    pub imposed_specs: Vec<CovarianceSpec>,
    pub knot_strategies: Vec<Strategy>,
    #[serde(default)]
    pub k_grid: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: Option<u64>,
    /// τ² multipliers for the nugget sweep.
    #[serde(default)]
    pub tau_grid: Option<Vec<f64>>,
    /// Training sizes for the slope study.
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    /// Also score the full-data predictor.
    #[serde(default = "default_true")]
    pub include_full: bool,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    /// True γ, needed to invert oversmoothed slopes.
    #[serde(default)]
    pub gamma_true: Option<f64>,
    #[serde(default)]
    pub sp: SpOptions,
    /// Slope study knot budget k = ⌊coef · n^{2/gamma}⌋.
    #[serde(default = "default_slope_k_coef")]
    pub slope_k_coef: f64,
    #[serde(default = "default_slope_k_gamma")]
    pub slope_k_gamma: f64,
    /// Knot count used by the τ² sweep.
    #[serde(default = "default_tau_k")]
    pub tau_k: usize,
}

const STRONG_K: [usize; 8] = [36, 64, 100, 144, 196, 289, 400, 484];
const WEAK_K: [usize; 8] = [289, 529, 729, 900, 1156, 1369, 1600, 1764];

fn spec(sigma2: f64, psi: f64, nu: f64) -> CovarianceSpec {
    CovarianceSpec {
        sigma2,
        psi,
        nu,
        tau2: 0.27,
    }
}

impl ExperimentConfig {
    fn base(scenario: Scenario, truth: CovarianceSpec, imposed: Vec<CovarianceSpec>) -> Self {
        ExperimentConfig {
            scenario,
            n: 5000,
            n_t: 5000,
            true_spec: truth,
            imposed_specs: imposed,
            knot_strategies: vec![Strategy::Sp, Strategy::Grid, Strategy::Rand],
            k_grid: STRONG_K.to_vec(),
            replicates: 20,
            base_seed: None,
            tau_grid: None,
            n_grid: None,
            include_full: true,
            dense_cap: DEFAULT_DENSE_CAP,
            gamma_true: Some(2.9),
            sp: SpOptions::default(),
            slope_k_coef: default_slope_k_coef(),
            slope_k_gamma: default_slope_k_gamma(),
            tau_k: default_tau_k(),
        }
    }

    /// Strong correlation: ψ = 0.169, imposed ν ∈ {1.5, 1.0, 3.0}.
    pub fn scenario1() -> Self {
        let t = spec(1.5, 0.169, 1.5);
        let imposed = vec![t, spec(1.5, 0.169, 1.0), spec(1.5, 0.169, 3.0)];
        Self::base(Scenario::StrongCorr, t, imposed)
    }

    /// Weak correlation: ψ = 0.063 with the larger knot grid.
    pub fn scenario2() -> Self {
        let t = spec(1.5, 0.063, 1.5);
        let imposed = vec![t, spec(1.5, 0.063, 1.0), spec(1.5, 0.063, 3.0)];
        let mut c = Self::base(Scenario::WeakCorr, t, imposed);
        c.k_grid = WEAK_K.to_vec();
        c.gamma_true = None;
        c
    }

    /// Consistency: imposed specs sharing the true microergodic behaviour.
    pub fn scenario3() -> Self {
        let t = spec(1.5, 0.169, 1.5);
        let imposed = vec![t, spec(1.0, 0.147, 1.5), spec(2.0, 0.186, 1.5)];
        Self::base(Scenario::Consistency, t, imposed)
    }

    /// Nonuniform locations, four knot strategies.
    pub fn scenario4() -> Self {
        let t = spec(1.5, 0.169, 1.5);
        let mut c = Self::base(Scenario::NonuniformFx, t, vec![t]);
        c.knot_strategies = vec![Strategy::Sp, Strategy::Rand, Strategy::Spu, Strategy::Grid];
        c
    }

    /// Log-MSPE against n with k growing as 1.5 n^{2/2.9}.
    pub fn slope_study() -> Self {
        let t = spec(1.5, 0.169, 1.5);
        let mut c = Self::base(Scenario::StrongCorr, t, vec![t, spec(1.5, 0.169, 1.0)]);
        c.knot_strategies = vec![Strategy::Sp];
        c.k_grid = Vec::new();
        c.n_grid = Some((0..13).map(|i| 1000 + 500 * i).collect());
        c.include_full = false;
        c
    }

    /// MSPE against τ² multipliers 10^{−3,…,2} at k = 484 support points.
    pub fn tau_sweep() -> Self {
        let mut c = Self::scenario1();
        c.knot_strategies = vec![Strategy::Sp];
        c.k_grid = Vec::new();
        c.tau_grid = Some(
            [-3.0, -2.0, -1.0, 0.0, 0.5, 1.0, 1.5, 2.0]
                .iter()
                .map(|a: &f64| 10f64.powf(*a))
                .collect(),
        );
        c.include_full = false;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "scenario1" => Ok(Self::scenario1()),
            "scenario2" => Ok(Self::scenario2()),
            "scenario3" => Ok(Self::scenario3()),
            "scenario4" => Ok(Self::scenario4()),
            "slope" => Ok(Self::slope_study()),
            "tau-sweep" => Ok(Self::tau_sweep()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected scenario1..scenario4, slope or tau-sweep"
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64> {
        self.base_seed
            .ok_or_else(|| Error::Config("no seed given: set base_seed or pass --seed".into()))
    }

    /// Checks shared by every experiment kind.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        if self.n < 1 || self.n_t < 1 {
            return bad("n and n_t must be positive".into());
        }
        if self.imposed_specs.is_empty() {
            return bad("imposed_specs is empty".into());
        }
        if self.knot_strategies.is_empty() {
            return bad("knot_strategies is empty".into());
        }
        for (i, s) in std::iter::once(&self.true_spec)
            .chain(&self.imposed_specs)
            .enumerate()
        {
            s.validate().map_err(|e| {
                let which = if i == 0 {
                    "true_spec".to_string()
                } else {
                    format!("imposed_specs[{}]", i - 1)
                };
                Error::Config(format!("{which}: {e}"))
            })?;
        }
        if let Some(k) = self.k_grid.iter().find(|&&k| k == 0) {
            return bad(format!("k_grid contains {k}"));
        }
        if let Some(g) = &self.tau_grid {
            if g.is_empty() || g.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return bad("tau_grid multipliers must be positive and finite".into());
            }
        }
        if let Some(g) = &self.n_grid {
            if g.len() < 4 || g.windows(2).any(|w| w[0] >= w[1]) {
                return bad("n_grid must be strictly ascending with at least 4 values".into());
            }
        }
        if !(self.slope_k_coef > 0.0 && self.slope_k_gamma > 0.0) {
            return bad("slope_k_coef and slope_k_gamma must be positive".into());
        }
        Ok(())
    }

    /// Knot budget of the slope study at training size n.
    pub fn slope_k(&self, n: usize) -> usize {
        (self.slope_k_coef * (n as f64).powf(2.0 / self.slope_k_gamma)).floor() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in [
            "scenario1",
            "scenario2",
            "scenario3",
            "scenario4",
            "slope",
            "tau-sweep",
        ] {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::preset("scenario5").is_err());
    }

    #[test]
    fn preset_values() {
        let s1 = ExperimentConfig::scenario1();
        assert_eq!(s1.true_spec, spec(1.5, 0.169, 1.5));
        assert_eq!(s1.k_grid, vec![36, 64, 100, 144, 196, 289, 400, 484]);
        assert_eq!((s1.n, s1.n_t), (5000, 5000));
        let s2 = ExperimentConfig::scenario2();
        assert_eq!(s2.true_spec.psi, 0.063);
        assert_eq!(s2.k_grid, vec![289, 529, 729, 900, 1156, 1369, 1600, 1764]);
        let s3 = ExperimentConfig::scenario3();
        assert_eq!(s3.imposed_specs[1], spec(1.0, 0.147, 1.5));
        assert_eq!(s3.imposed_specs[2], spec(2.0, 0.186, 1.5));
        let slope = ExperimentConfig::slope_study();
        let n = slope.n_grid.unwrap();
        assert_eq!((n[0], n[n.len() - 1], n.len()), (1000, 7000, 13));
        let tau = ExperimentConfig::tau_sweep().tau_grid.unwrap();
        assert_eq!(tau.len(), 8);
        assert!((tau[4] - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn slope_k_rule() {
        let c = ExperimentConfig::slope_study();
        for n in [1000usize, 4000, 7000] {
            let want = (1.5 * (n as f64).powf(2.0 / 2.9)).floor() as usize;
            assert_eq!(c.slope_k(n), want);
        }
        assert_eq!(c.slope_k(1000), 175);
        assert_eq!(c.slope_k(7000), 672);
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let c = ExperimentConfig::scenario4();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["mystery"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn minimal_json() {
        let text = r#"{
            "scenario": "custom", "n": 50, "n_t": 20,
            "true_spec": {"sigma2": 1.0, "psi": 0.2, "nu": 1.5, "tau2": 0.1},
            "imposed_specs": [{"sigma2": 1.0, "psi": 0.2, "nu": 1.5, "tau2": 0.1}],
            "knot_strategies": ["sp", "grid"], "k_grid": [4, 9], "replicates": 2
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        c.validate().unwrap();
        assert!(c.include_full);
        assert!(c.seed().is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut c = ExperimentConfig::scenario1();
        c.replicates = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::slope_study();
        c.n_grid = Some(vec![1000, 900, 2000, 3000]);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::tau_sweep();
        c.tau_grid = Some(vec![1.0, -1.0]);
        assert!(c.validate().is_err());
    }
}
