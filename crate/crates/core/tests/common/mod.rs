#![allow(dead_code)]

use polyads::simulate::{random_covariates, random_graph, stream_rng};
use polyads::{DenseCovariates, Polyad, SparseCountGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, 7)
}

/// Random graph with `D` dims in `2..=max_dim`, counts in `1..=max_count`,
/// and dense standard-normal covariates.
pub fn instance(
    rng: &mut ChaCha8Rng,
    d: usize,
    max_dim: u32,
    max_count: u64,
    p: usize,
) -> (SparseCountGraph, DenseCovariates) {
    let dims: Vec<u32> = (0..d).map(|_| rng.random_range(2..=max_dim)).collect();
    let density = rng.random_range(0.3..0.9);
    let g = random_graph(&dims, density, max_count, rng).unwrap();
    let cov = random_covariates(&dims, p, rng);
    (g, cov)
}

/// Uniform polyad on `dims` (distinct coordinates in every column).
pub fn random_polyad(rng: &mut ChaCha8Rng, dims: &[u32]) -> Polyad {
    let mut top = Vec::with_capacity(dims.len());
    let mut bottom = Vec::with_capacity(dims.len());
    for &n in dims {
        let a = rng.random_range(1..=n);
        let mut b = rng.random_range(1..n);
        if b >= a {
            b += 1;
        }
        top.push(a);
        bottom.push(b);
    }
    Polyad::new(top, bottom).unwrap()
}

/// Every cell of the grid, row-major.
pub fn cells(dims: &[u32]) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut c = vec![1u32; dims.len()];
    loop {
        out.push(c.clone());
        let mut k = dims.len();
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            if c[k] < dims[k] {
                c[k] += 1;
                break;
            }
            c[k] = 1;
        }
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
