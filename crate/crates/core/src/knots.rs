//! Knot (representative point) generation and energy distance.
//!
//! Support points are computed by majorization–minimization of the energy
//! distance between the knots and the data. Each sweep moves every knot
//! simultaneously to the minimizer of a separable quadratic majorizer, so
//! the energy is non-increasing from sweep to sweep.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{euclid, PointSet};
use crate::rng;

/// Distances below this are clamped in MM-update denominators.
const DIST_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotStrategy {
    SupportPoints,
    Grid,
    RandomSubsample,
    External,
}

impl KnotStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            KnotStrategy::SupportPoints => "sp",
            KnotStrategy::Grid => "grid",
            KnotStrategy::RandomSubsample => "random",
            KnotStrategy::External => "external",
        }
    }
}

impl fmt::Display for KnotStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KnotStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sp" | "support_points" => Ok(KnotStrategy::SupportPoints),
            "grid" => Ok(KnotStrategy::Grid),
            "random" | "rand" | "random_subsample" => Ok(KnotStrategy::RandomSubsample),
            "external" => Ok(KnotStrategy::External),
            other => Err(Error::domain(format!("unknown knot strategy {other:?}"))),
        }
    }
}

/// A set of knots with the strategy that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSet {
    pub points: PointSet,
    pub strategy: KnotStrategy,
    /// Cached energy distance to the data the knots were built for.
    pub energy_to_data: Option<f64>,
    /// Seed used to generate the knots, when the strategy is stochastic.
    pub seed: Option<u64>,
    /// False when an iterative strategy stopped on its iteration cap.
    pub converged: bool,
}

impl KnotSet {
    pub fn new(points: PointSet, strategy: KnotStrategy) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("a knot set needs at least one point"));
        }
        Ok(KnotSet {
            points,
            strategy,
            energy_to_data: None,
            seed: None,
            converged: true,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Compute and cache the energy distance to `target`.
    pub fn with_energy(mut self, target: &EnergyTarget) -> Result<Self> {
        self.energy_to_data = Some(target.distance_to(&self.points)?);
        Ok(self)
    }
}

/// Σ_i Σ_j ‖a_i − b_j‖, summed row by row in a fixed order.
fn cross_sum(a: &PointSet, b: &PointSet) -> f64 {
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let p = a.point(i);
            b.iter().map(|q| euclid(p, q)).sum::<f64>()
        })
        .collect();
    rows.iter().sum()
}

/// Σ_i Σ_j ‖a_i − a_j‖ over ordered pairs.
fn self_sum(a: &PointSet) -> f64 {
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let p = a.point(i);
            (i + 1..a.len()).map(|j| euclid(p, a.point(j))).sum::<f64>()
        })
        .collect();
    2.0 * rows.iter().sum::<f64>()
}

fn check_pair(a: &PointSet, b: &PointSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain(
            "energy distance needs two nonempty point sets",
        ));
    }
    Ok(())
}

/// Energy distance between the empirical distributions of `a` and `b`:
/// 2 E‖A − B‖ − E‖A − A'‖ − E‖B − B'‖.
pub fn energy_distance(a: &PointSet, b: &PointSet) -> Result<f64> {
    check_pair(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(2.0 * cross_sum(a, b) / (na * nb) - self_sum(a) / (na * na) - self_sum(b) / (nb * nb))
}

/// A data set with its knot-independent self term precomputed, for
/// repeated energy-distance evaluations against different knot sets.
#[derive(Debug, Clone)]
pub struct EnergyTarget {
    data: PointSet,
    /// (1/N²) Σ Σ ‖y_m − y_m'‖.
    data_term: f64,
}

impl EnergyTarget {
    pub fn new(data: PointSet) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::domain("energy target needs at least one point"));
        }
        let n = data.len() as f64;
        let data_term = self_sum(&data) / (n * n);
        Ok(EnergyTarget { data, data_term })
    }

    pub fn data(&self) -> &PointSet {
        &self.data
    }

    pub fn distance_to(&self, knots: &PointSet) -> Result<f64> {
        check_pair(&self.data, knots)?;
        let (n, k) = (self.data.len() as f64, knots.len() as f64);
        Ok(2.0 * cross_sum(knots, &self.data) / (n * k)
            - self_sum(knots) / (k * k)
            - self.data_term)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpOptions {
    pub max_sweeps: usize,
    /// Stop when no knot moves more than this fraction of the data diameter.
    pub rel_tol: f64,
    /// Larger data sets are replaced by a seeded subsample of this size.
    pub max_data: usize,
    /// Independent initializations; the lowest-energy result is kept.
    pub restarts: usize,
}

impl Default for SpOptions {
    fn default() -> Self {
        SpOptions {
            max_sweeps: 200,
            rel_tol: 1e-6,
            max_data: 20_000,
            restarts: 1,
        }
    }
}

/// Per-run diagnostics of the support-point iteration.
#[derive(Debug, Clone)]
pub struct SpTrace {
    /// Energy distance to the (possibly subsampled) data before each sweep,
    /// followed by the energy of the returned iterate.
    pub energy: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Support points: k points locally minimizing the energy distance to `data`.
pub fn support_points(data: &PointSet, k: usize, seed: u64, opts: &SpOptions) -> Result<KnotSet> {
    support_points_traced(data, k, seed, opts).map(|(knots, _)| knots)
}

pub fn support_points_traced(
    data: &PointSet,
    k: usize,
    seed: u64,
    opts: &SpOptions,
) -> Result<(KnotSet, SpTrace)> {
    if k < 1 {
        return Err(Error::domain("number of support points must be at least 1"));
    }
    if data.is_empty() {
        return Err(Error::domain("support points need nonempty data"));
    }
    if k > data.len().saturating_mul(10) {
        return Err(Error::domain(format!(
            "k = {k} exceeds ten times the data size {}",
            data.len()
        )));
    }
    let target_points = if data.len() > opts.max_data {
        let mut stream = rng::stream(rng::derive(seed, &[rng::tag("sp-subsample")]));
        let mut idx = index::sample(&mut stream, data.len(), opts.max_data).into_vec();
        idx.sort_unstable();
        data.select(&idx)
    } else {
        data.clone()
    };
    let target = EnergyTarget::new(target_points)?;
    let tol = opts.rel_tol * target.data().diameter();

    let mut best: Option<(PointSet, SpTrace)> = None;
    for restart in 0..opts.restarts.max(1) {
        let init_seed = rng::derive(seed, &[rng::tag("sp-init"), restart as u64]);
        let init = initial_knots(target.data(), k, init_seed);
        let (points, trace) = mm_iterate(&target, init, opts.max_sweeps, tol);
        let better = match &best {
            None => true,
            Some((_, t)) => trace.energy.last() < t.energy.last(),
        };
        if better {
            best = Some((points, trace));
        }
    }
    let (points, trace) = best.expect("at least one restart");
    let knots = KnotSet {
        energy_to_data: trace.energy.last().copied(),
        seed: Some(seed),
        converged: trace.converged,
        ..KnotSet::new(points, KnotStrategy::SupportPoints)?
    };
    Ok((knots, trace))
}

fn initial_knots(data: &PointSet, k: usize, seed: u64) -> PointSet {
    let n = data.len();
    let mut stream = rng::stream(seed);
    if k <= n {
        return data.select(&index::sample(&mut stream, n, k).into_vec());
    }
    // More knots than data: cycle through a permutation of the data and
    // spread the repeats slightly so coincident knots can separate.
    let perm = index::sample(&mut stream, n, n).into_vec();
    let idx: Vec<usize> = (0..k).map(|i| perm[i % n]).collect();
    let spread = 1e-3 * data.diameter().max(f64::MIN_POSITIVE);
    let mut coords = data.select(&idx).coords().to_vec();
    for (slot, c) in coords.iter_mut().enumerate() {
        if slot / data.dim() >= n {
            let z: f64 = StandardNormal.sample(&mut stream);
            *c += spread * z;
        }
    }
    PointSet::new(data.dim(), coords).expect("finite perturbation of finite data")
}

/// Jacobi MM sweeps from `init`. Returns the lowest-energy iterate seen.
fn mm_iterate(
    target: &EnergyTarget,
    init: PointSet,
    max_sweeps: usize,
    tol: f64,
) -> (PointSet, SpTrace) {
    let data = target.data();
    let d = data.dim();
    let n = data.len() as f64;
    let k = init.len();
    let kf = k as f64;
    let ratio = n / kf;

    let mut current = init;
    let mut energy = Vec::with_capacity(max_sweeps + 1);
    let mut best: Option<(f64, PointSet)> = None;
    let mut converged = false;
    let mut sweeps = 0;

    loop {
        // One pass per knot: its update plus its share of the energy sums.
        let rows: Vec<(Vec<f64>, f64, f64)> = (0..k)
            .into_par_iter()
            .map(|j| {
                let xj = current.point(j);
                let mut wsum = 0.0;
                let mut num = vec![0.0; d];
                let mut cross = 0.0;
                for y in data.iter() {
                    let dist = euclid(xj, y);
                    cross += dist;
                    // A knot sitting on a data point would be pinned there by
                    // a clamped weight; that term has zero subgradient.
                    if dist < DIST_FLOOR {
                        continue;
                    }
                    let w = 1.0 / dist;
                    wsum += w;
                    for (acc, &yc) in num.iter_mut().zip(y) {
                        *acc += w * yc;
                    }
                }
                let mut repel = vec![0.0; d];
                let mut own = 0.0;
                for i in 0..k {
                    if i == j {
                        continue;
                    }
                    let xi = current.point(i);
                    let dist = euclid(xj, xi);
                    own += dist;
                    let inv = 1.0 / dist.max(DIST_FLOOR);
                    for c in 0..d {
                        repel[c] += (xj[c] - xi[c]) * inv;
                    }
                }
                let next = if wsum > 0.0 {
                    (0..d).map(|c| (ratio * repel[c] + num[c]) / wsum).collect()
                } else {
                    xj.to_vec()
                };
                (next, cross, own)
            })
            .collect();

        let cross: f64 = rows.iter().map(|r| r.1).sum();
        let own: f64 = rows.iter().map(|r| r.2).sum();
        let e = 2.0 * cross / (n * kf) - own / (kf * kf) - target.data_term;
        energy.push(e);
        if best.as_ref().is_none_or(|(b, _)| e <= *b) {
            best = Some((e, current.clone()));
        }
        if converged || sweeps == max_sweeps {
            break;
        }

        let mut max_move = 0.0f64;
        let mut coords = Vec::with_capacity(k * d);
        for (j, (next, _, _)) in rows.into_iter().enumerate() {
            max_move = max_move.max(euclid(current.point(j), &next));
            coords.extend(next);
        }
        current = PointSet::new(d, coords).expect("MM update of finite points is finite");
        sweeps += 1;
        converged = max_move <= tol;
    }

    let (_, points) = best.expect("at least one energy evaluation");
    let last = *energy.last().unwrap();
    let best_e = energy.iter().copied().fold(f64::INFINITY, f64::min);
    if best_e < last {
        energy.push(best_e);
    }
    (
        points,
        SpTrace {
            energy,
            sweeps,
            converged,
        },
    )
}

/// Axis-aligned box [lo, hi].
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::domain(
                "box corners must have the same positive dimension",
            ));
        }
        if lo
            .iter()
            .zip(&hi)
            .any(|(l, h)| !(l.is_finite() && h.is_finite() && h > l))
        {
            return Err(Error::domain(
                "box is degenerate: need lo < hi on every axis",
            ));
        }
        Ok(Bounds { lo, hi })
    }

    pub fn unit(dim: usize) -> Self {
        Bounds {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    /// Bounding box of a point set.
    pub fn of(points: &PointSet) -> Result<Self> {
        let (lo, hi) = points
            .bounds()
            .ok_or_else(|| Error::domain("bounding box of an empty point set"))?;
        Bounds::new(lo, hi)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

/// A regular lattice of m^d cell-center points filling the box, first axis
/// varying slowest.
pub fn grid_knots(bounds: &Bounds, k: usize) -> Result<KnotSet> {
    let d = bounds.dim();
    if k < 1 {
        return Err(Error::domain("grid needs at least one point"));
    }
    let m = (k as f64).powf(1.0 / d as f64).round() as usize;
    if m.pow(d as u32) != k {
        let below = ((k as f64).powf(1.0 / d as f64).floor() as usize).max(1);
        return Err(Error::domain(format!(
            "a {d}-dimensional grid needs k = m^{d}; {k} is not, nearest are {} and {}",
            below.pow(d as u32),
            (below + 1).pow(d as u32)
        )));
    }
    let mut coords = Vec::with_capacity(k * d);
    for flat in 0..k {
        let mut rem = flat;
        let mut digits = vec![0usize; d];
        for axis in (0..d).rev() {
            digits[axis] = rem % m;
            rem /= m;
        }
        for axis in 0..d {
            let width = (bounds.hi[axis] - bounds.lo[axis]) / m as f64;
            coords.push(bounds.lo[axis] + (digits[axis] as f64 + 0.5) * width);
        }
    }
    KnotSet::new(PointSet::new(d, coords)?, KnotStrategy::Grid)
}

/// k data points drawn uniformly without replacement.
pub fn random_knots(data: &PointSet, k: usize, seed: u64) -> Result<KnotSet> {
    if k < 1 || k > data.len() {
        return Err(Error::domain(format!(
            "random knots need 1 <= k <= {} (data size), got {k}",
            data.len()
        )));
    }
    let mut stream = rng::stream(seed);
    let idx = index::sample(&mut stream, data.len(), k).into_vec();
    Ok(KnotSet {
        seed: Some(seed),
        ..KnotSet::new(data.select(&idx), KnotStrategy::RandomSubsample)?
    })
}

/// Write knots as CSV: a `# strategy=… k=… seed=…` comment, an `x1,…,xd`
/// header, then one row per knot.
pub fn write_knots_csv(path: &Path, knots: &KnotSet) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let seed = knots
        .seed
        .map_or_else(|| "none".to_string(), |s| s.to_string());
    writeln!(
        file,
        "# strategy={} k={} seed={}",
        knots.strategy,
        knots.len(),
        seed
    )
    .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record((1..=knots.points.dim()).map(|i| format!("x{i}")))?;
    for p in knots.points.iter() {
        w.write_record(p.iter().map(|v| crate::io::fmt_f64(*v)))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read knots written by [`write_knots_csv`] (or any `x1..xd` CSV).
pub fn read_knots_csv(path: &Path) -> Result<KnotSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut strategy = KnotStrategy::External;
    let mut seed = None;
    if let Some(comment) = text.lines().next().and_then(|l| l.strip_prefix('#')) {
        for field in comment.split_whitespace() {
            match field.split_once('=') {
                Some(("strategy", v)) => strategy = v.parse()?,
                Some(("seed", v)) => seed = v.parse().ok(),
                _ => {}
            }
        }
    }
    let table = crate::io::parse_table(path, &text)?;
    if table.has_response {
        return Err(Error::Ingest {
            path: path.to_path_buf(),
            line: table.header_line,
            message: "knot files have only x1..xd columns".into(),
        });
    }
    Ok(KnotSet {
        seed,
        ..KnotSet::new(table.locations, strategy)?
    })
}
