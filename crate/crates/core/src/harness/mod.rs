//! Seeded experiment runner: RMSPE against knot budget, the log-MSPE slope
//! study, the τ² sweep, and scoring on user data files.

pub mod config;
pub mod output;
pub mod realdata;
pub mod scenario;
pub mod slope;
pub mod tau;

pub use config::{ExperimentConfig, LocationLaw, Scenario, Strategy};
pub use output::{mean_sd_se, write_result, AggRow, ExperimentResult, ResultRow};
pub use realdata::{run_realdata, RealDataConfig, RealDataResult, SpecSource, TestSplit};
pub use scenario::{run_scenario, simulate_replicate, Replicate};
pub use slope::{run_slope_study, write_slopes_csv, SlopeLine, SlopeStudy};
pub use tau::run_tau_sweep;
