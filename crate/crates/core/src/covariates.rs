//! Covariate providers: maps from an edge index to its feature vector `X_i`.
//!
//! Providers only need to answer for the edges the enumerator asks about,
//! which include zero-count edges of active polyads.

use std::collections::HashMap;

use crate::error::{PolyadsError, Result};
use crate::graph::EdgeIndex;

pub trait CovariateProvider: Sync {
    /// Number of features `p`.
    fn dim(&self) -> usize;

    /// Writes `X_edge` into `out` (length `p`). Returns `false` when the
    /// provider has no value for this edge.
    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool;
}

impl<T: CovariateProvider + ?Sized> CovariateProvider for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        (**self).fill(edge, out)
    }
}

impl<T: CovariateProvider + ?Sized> CovariateProvider for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        (**self).fill(edge, out)
    }
}

/// Features stored for every cell of `[n_1] × .. × [n_D]`, row-major with
/// the last coordinate fastest.
#[derive(Clone, Debug)]
pub struct DenseCovariates {
    dims: Vec<u32>,
    strides: Vec<usize>,
    p: usize,
    values: Vec<f64>,
}

impl DenseCovariates {
    pub fn new(dims: &[u32], p: usize, values: Vec<f64>) -> Result<Self> {
        let cells = dims
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n as usize))
            .ok_or_else(|| PolyadsError::ResourceGuard("dense covariate grid overflows".into()))?;
        if values.len() != cells * p {
            return Err(PolyadsError::DimensionMismatch(format!(
                "dense covariates need {} values ({} cells × p = {}), got {}",
                cells * p,
                cells,
                p,
                values.len()
            )));
        }
        let mut strides = vec![1usize; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1] as usize;
        }
        Ok(DenseCovariates {
            dims: dims.to_vec(),
            strides,
            p,
            values,
        })
    }

    /// Fills every cell by calling `f(coords, out)` in lexicographic order.
    pub fn from_fn(dims: &[u32], p: usize, mut f: impl FnMut(&[u32], &mut [f64])) -> Self {
        let cells: usize = dims.iter().map(|&n| n as usize).product();
        let mut values = vec![0.0; cells * p];
        let mut coords = vec![1u32; dims.len()];
        for cell in 0..cells {
            f(&coords, &mut values[cell * p..(cell + 1) * p]);
            for k in (0..dims.len()).rev() {
                if coords[k] < dims[k] {
                    coords[k] += 1;
                    break;
                }
                coords[k] = 1;
            }
        }
        DenseCovariates::new(dims, p, values).expect("sizes computed from dims")
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, edge: &[u32]) -> Option<usize> {
        if edge.len() != self.dims.len() {
            return None;
        }
        let mut cell = 0;
        for ((&c, &n), &s) in edge.iter().zip(&self.dims).zip(&self.strides) {
            if c == 0 || c > n {
                return None;
            }
            cell += (c as usize - 1) * s;
        }
        Some(cell * self.p)
    }

    pub fn get(&self, edge: &[u32]) -> Option<&[f64]> {
        self.offset(edge).map(|o| &self.values[o..o + self.p])
    }
}

impl CovariateProvider for DenseCovariates {
    fn dim(&self) -> usize {
        self.p
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        match self.get(edge) {
            Some(x) => {
                out.copy_from_slice(x);
                true
            }
            None => false,
        }
    }
}

/// Features for an explicit set of edges, e.g. parsed from a covariate file.
#[derive(Clone, Debug, Default)]
pub struct SparseCovariates {
    p: usize,
    rows: HashMap<EdgeIndex, Vec<f64>>,
}

impl SparseCovariates {
    pub fn new(p: usize) -> Self {
        SparseCovariates {
            p,
            rows: HashMap::new(),
        }
    }

    pub fn insert(&mut self, edge: EdgeIndex, x: Vec<f64>) -> Result<()> {
        if x.len() != self.p {
            return Err(PolyadsError::DimensionMismatch(format!(
                "edge {edge} has {} features, expected {}",
                x.len(),
                self.p
            )));
        }
        if self.rows.insert(edge.clone(), x).is_some() {
            return Err(PolyadsError::InvalidParameter(format!(
                "duplicate covariate row for edge {edge}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl CovariateProvider for SparseCovariates {
    fn dim(&self) -> usize {
        self.p
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        match self.rows.get(&EdgeIndex::new(edge)) {
            Some(x) => {
                out.copy_from_slice(x);
                true
            }
            None => false,
        }
    }
}

/// Wraps a closure `f(edge, out) -> bool`.
pub struct FnCovariates<F> {
    p: usize,
    f: F,
}

impl<F> FnCovariates<F>
where
    F: Fn(&[u32], &mut [f64]) -> bool + Sync,
{
    pub fn new(p: usize, f: F) -> Self {
        FnCovariates { p, f }
    }
}

impl<F> CovariateProvider for FnCovariates<F>
where
    F: Fn(&[u32], &mut [f64]) -> bool + Sync,
{
    fn dim(&self) -> usize {
        self.p
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        (self.f)(edge, out)
    }
}

/// Reads `X_i` into a fresh vector, or reports the edge as missing.
pub fn covariates_of<C: CovariateProvider + ?Sized>(cov: &C, edge: &[u32]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cov.dim()];
    if cov.fill(edge, &mut out) {
        Ok(out)
    } else {
        Err(PolyadsError::missing_covariates(vec![EdgeIndex::new(edge)]))
    }
}
