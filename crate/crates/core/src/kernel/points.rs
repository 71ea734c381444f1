use crate::error::{Error, Result};

/// An ordered set of d-dimensional locations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    /// Build from a flat row-major coordinate buffer.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("point dimension must be positive"));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::domain(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::domain(format!(
                "point {} has a non-finite coordinate",
                pos / dim
            )));
        }
        Ok(PointSet { dim, coords })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::domain(format!(
                "point {i} has dimension {}, expected {dim}",
                rows[i].len()
            )));
        }
        PointSet::new(dim.max(1), rows.concat())
    }

    /// n points drawn uniformly from the box [lo, hi]^dim.
    pub fn uniform(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Result<Self> {
        use rand::Rng as _;
        if !(lo < hi) {
            return Err(Error::domain(format!("empty sampling box [{lo}, {hi}]")));
        }
        let mut rng = crate::rng::stream(seed);
        let coords = (0..n * dim).map(|_| rng.random_range(lo..hi)).collect();
        PointSet::new(dim, coords)
    }

    /// An empty set of the given dimension.
    pub fn empty(dim: usize) -> Self {
        PointSet {
            dim: dim.max(1),
            coords: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        let mut coords = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            coords.extend_from_slice(self.point(i));
        }
        PointSet {
            dim: self.dim,
            coords,
        }
    }

    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(Error::domain(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointSet {
            dim: self.dim,
            coords,
        })
    }

    /// Per-axis (min, max) over all points. `None` when empty.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let first = self.iter().next()?;
        let mut lo = first.to_vec();
        let mut hi = first.to_vec();
        for p in self.iter() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some((lo, hi))
    }

    /// Largest pairwise Euclidean distance.
    pub fn diameter(&self) -> f64 {
        use rayon::prelude::*;
        (0..self.len())
            .into_par_iter()
            .map(|i| {
                let a = self.point(i);
                (i + 1..self.len())
                    .map(|j| super::euclid(a, self.point(j)))
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Apply `f` to every point, producing a new set of dimension `dim`.
    pub fn map_points(
        &self,
        dim: usize,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<PointSet> {
        let mut coords = Vec::with_capacity(self.len() * dim);
        for p in self.iter() {
            coords.extend(f(p));
        }
        PointSet::new(dim, coords)
    }
}
