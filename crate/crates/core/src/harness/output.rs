use std::path::Path;

use serde::Serialize;

use super::config::Scenario;
use crate::error::{Error, Result};
use crate::io::fmt_f64;

/// One scored (cell, replicate).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: Scenario,
    /// Knot strategy name, or "full".
    pub method: String,
    /// Index into the imposed spec list.
    pub spec_id: usize,
    pub k: Option<usize>,
    pub n: usize,
    pub tau_mult: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    pub rmspe: f64,
    pub mspe: f64,
    pub fit_s: f64,
    pub predict_s: f64,
}

impl ResultRow {
    fn cell(&self) -> CellKey {
        CellKey {
            method: self.method.clone(),
            spec_id: self.spec_id,
            k: self.k,
            n: self.n,
            tau_mult: self.tau_mult.map(f64::to_bits),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CellKey {
    method: String,
    spec_id: usize,
    k: Option<usize>,
    n: usize,
    tau_mult: Option<u64>,
}

/// Replicate mean, standard deviation and standard error of one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggRow {
    pub scenario: Scenario,
    pub method: String,
    pub spec_id: usize,
    pub k: Option<usize>,
    pub n: usize,
    pub tau_mult: Option<f64>,
    pub replicates: usize,
    pub mean_rmspe: f64,
    pub sd_rmspe: f64,
    pub se_rmspe: f64,
    pub mean_mspe: f64,
    pub sd_mspe: f64,
    pub se_mspe: f64,
    pub mean_log_mspe: f64,
    pub se_log_mspe: f64,
}

/// Mean, sample standard deviation (0 for a single value) and standard error.
pub fn mean_sd_se(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd, sd / n.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Raw rows in (cell, replicate) order.
    pub rows: Vec<ResultRow>,
    pub agg: Vec<AggRow>,
}

impl ExperimentResult {
    /// Order rows by cell (first appearance) then replicate and aggregate.
    pub fn from_rows(mut rows: Vec<ResultRow>) -> Self {
        let mut cells: Vec<CellKey> = Vec::new();
        for r in &rows {
            let c = r.cell();
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let index = |r: &ResultRow| cells.iter().position(|c| *c == r.cell()).unwrap_or(0);
        rows.sort_by_key(|r| (index(r), r.replicate));
        let agg = cells
            .iter()
            .map(|c| {
                let members: Vec<&ResultRow> = rows.iter().filter(|r| r.cell() == *c).collect();
                let first = members[0];
                let rm: Vec<f64> = members.iter().map(|r| r.rmspe).collect();
                let ms: Vec<f64> = members.iter().map(|r| r.mspe).collect();
                let lm: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
                let (mean_rmspe, sd_rmspe, se_rmspe) = mean_sd_se(&rm);
                let (mean_mspe, sd_mspe, se_mspe) = mean_sd_se(&ms);
                let (mean_log_mspe, _, se_log_mspe) = mean_sd_se(&lm);
                AggRow {
                    scenario: first.scenario,
                    method: first.method.clone(),
                    spec_id: first.spec_id,
                    k: first.k,
                    n: first.n,
                    tau_mult: first.tau_mult,
                    replicates: members.len(),
                    mean_rmspe,
                    sd_rmspe,
                    se_rmspe,
                    mean_mspe,
                    sd_mspe,
                    se_mspe,
                    mean_log_mspe,
                    se_log_mspe,
                }
            })
            .collect();
        ExperimentResult { rows, agg }
    }

    /// Aggregate row for a cell, if present.
    pub fn cell(
        &self,
        method: &str,
        spec_id: usize,
        k: Option<usize>,
        n: Option<usize>,
        tau_mult: Option<f64>,
    ) -> Option<&AggRow> {
        self.agg.iter().find(|a| {
            a.method == method
                && a.spec_id == spec_id
                && a.k == k
                && n.is_none_or(|n| a.n == n)
                && a.tau_mult.map(f64::to_bits) == tau_mult.map(f64::to_bits)
        })
    }
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Raw rows without timings; reruns reproduce this file byte for byte.
pub fn write_raw_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "method",
        "spec_id",
        "k",
        "n",
        "tau_mult",
        "replicate",
        "seed",
        "rmspe",
        "mspe",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.name().to_string(),
            r.method.clone(),
            r.spec_id.to_string(),
            opt_usize(r.k),
            r.n.to_string(),
            opt_f64(r.tau_mult),
            r.replicate.to_string(),
            r.seed.to_string(),
            fmt_f64(r.rmspe),
            fmt_f64(r.mspe),
        ])?;
    }
    finish(w, path)
}

/// Wall-clock timings for the raw rows, in the same order.
pub fn write_timings_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method",
        "spec_id",
        "k",
        "n",
        "tau_mult",
        "replicate",
        "fit_s",
        "predict_s",
    ])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.spec_id.to_string(),
            opt_usize(r.k),
            r.n.to_string(),
            opt_f64(r.tau_mult),
            r.replicate.to_string(),
            fmt_f64(r.fit_s),
            fmt_f64(r.predict_s),
        ])?;
    }
    finish(w, path)
}

pub fn write_agg_csv(path: &Path, agg: &[AggRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "method",
        "spec_id",
        "k",
        "n",
        "tau_mult",
        "replicates",
        "mean_rmspe",
        "sd_rmspe",
        "se_rmspe",
        "mean_mspe",
        "sd_mspe",
        "se_mspe",
        "mean_log_mspe",
        "se_log_mspe",
    ])?;
    for a in agg {
        w.write_record([
            a.scenario.name().to_string(),
            a.method.clone(),
            a.spec_id.to_string(),
            opt_usize(a.k),
            a.n.to_string(),
            opt_f64(a.tau_mult),
            a.replicates.to_string(),
            fmt_f64(a.mean_rmspe),
            fmt_f64(a.sd_rmspe),
            fmt_f64(a.se_rmspe),
            fmt_f64(a.mean_mspe),
            fmt_f64(a.sd_mspe),
            fmt_f64(a.se_mspe),
            fmt_f64(a.mean_log_mspe),
            fmt_f64(a.se_log_mspe),
        ])?;
    }
    finish(w, path)
}

/// Write raw.csv, agg.csv and timings.csv into `dir`.
pub fn write_result(dir: &Path, result: &ExperimentResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_raw_csv(&dir.join("raw.csv"), &result.rows)?;
    write_agg_csv(&dir.join("agg.csv"), &result.agg)?;
    write_timings_csv(&dir.join("timings.csv"), &result.rows)
}
