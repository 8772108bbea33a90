//! Synthetic three-way gravity data, intercept calibration, node subsampling
//! and small random generators for property tests.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};

use crate::covariates::{CovariateProvider, DenseCovariates};
use crate::error::{PolyadsError, Result};
use crate::graph::SparseCountGraph;

pub use crate::meta::{meta_analysis, MetaResult, TauMethod};

/// Number of FE/X draws averaged when calibrating the intercept.
pub const CALIBRATION_DRAWS: u64 = 64;

/// Streams at or above this value are reserved for calibration draws.
const CALIBRATION_STREAM_BASE: u64 = 1 << 62;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Noise {
    Poisson,
    /// Gamma–Poisson mixture with a unit-mean Gamma multiplier of the given rate.
    NegBin {
        rate: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThreeWayDesign {
    pub n1: u32,
    pub n2: u32,
    pub n3: u32,
    pub beta_star: f64,
    /// Standard deviation of `u_ij`, `w_it`, `v_jt`.
    pub fe_std: f64,
    pub ar_coef: f64,
    pub noise_scale: f64,
    pub intercept_c: f64,
    pub noise: Noise,
    pub seed: u64,
}

impl ThreeWayDesign {
    pub fn new(n1: u32, n2: u32) -> Self {
        ThreeWayDesign {
            n1,
            n2,
            n3: 5,
            beta_star: 1.0,
            fe_std: 0.25,
            ar_coef: 0.5,
            noise_scale: 0.25,
            intercept_c: 0.0,
            noise: Noise::Poisson,
            seed: 0,
        }
    }

    pub fn dims(&self) -> [u32; 3] {
        [self.n1, self.n2, self.n3]
    }

    pub fn n_cells(&self) -> usize {
        self.n1 as usize * self.n2 as usize * self.n3 as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 || self.n3 < 2 {
            return Err(PolyadsError::InvalidParameter(format!(
                "all dimensions must be ≥ 2, got {:?}",
                self.dims()
            )));
        }
        let finite = [
            self.beta_star,
            self.fe_std,
            self.ar_coef,
            self.noise_scale,
            self.intercept_c,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(PolyadsError::InvalidParameter(
                "design parameters must be finite".into(),
            ));
        }
        if self.fe_std < 0.0 || self.noise_scale < 0.0 {
            return Err(PolyadsError::InvalidParameter(
                "fe_std and noise_scale must be ≥ 0".into(),
            ));
        }
        if let Noise::NegBin { rate } = self.noise {
            if !(rate > 0.0) {
                return Err(PolyadsError::InvalidParameter(format!(
                    "negative binomial rate must be > 0, got {rate}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimulatedDataset {
    pub graph: SparseCountGraph,
    pub covariates: DenseCovariates,
    pub true_beta: Vec<f64>,
    /// `|E| / n`.
    pub realized_density: f64,
}

/// RNG for stream `stream` of experiment `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Covariates and log-intensities (without the intercept) for every cell,
/// row-major with `t` fastest.
#[derive(Clone, Debug)]
pub struct Latent {
    pub x: Vec<f64>,
    pub log_base: Vec<f64>,
}

/// Draws fixed effects and covariates. Draw order: `u` (i, j), `w` (i, t),
/// `v` (j, t), then the covariate noise over cells.
pub fn draw_latent<R: Rng + ?Sized>(design: &ThreeWayDesign, rng: &mut R) -> Latent {
    let (n1, n2, n3) = (design.n1 as usize, design.n2 as usize, design.n3 as usize);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut fe = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| design.fe_std * std_normal.sample(rng))
            .collect()
    };
    let u = fe(n1 * n2);
    let w = fe(n1 * n3);
    let v = fe(n2 * n3);
    let n = n1 * n2 * n3;
    let mut x = vec![0.0; n];
    let mut log_base = vec![0.0; n];
    for i in 0..n1 {
        for j in 0..n2 {
            let mut prev = 0.0;
            for t in 0..n3 {
                let cell = (i * n2 + j) * n3 + t;
                let shocks = w[i * n3 + t] + v[j * n3 + t];
                let ar = if t == 0 { 0.0 } else { design.ar_coef * prev };
                let xi = ar + shocks + design.noise_scale * std_normal.sample(rng);
                x[cell] = xi;
                log_base[cell] = design.beta_star * xi + u[i * n2 + j] + shocks;
                prev = xi;
            }
        }
    }
    Latent { x, log_base }
}

/// Poisson count; non-positive `λ` gives 0 and `λ` is capped at the sampler limit.
pub fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if !(lambda > 0.0) {
        return 0;
    }
    let lambda = lambda.min(Poisson::<f64>::MAX_LAMBDA);
    Poisson::new(lambda).expect("positive finite λ").sample(rng) as u64
}

/// Poisson count with a `Gamma(shape = rate, rate = rate)` multiplier:
/// mean `λ`, variance `λ + λ²/rate`.
pub fn negbin_draw<R: Rng + ?Sized>(lambda: f64, rate: f64, rng: &mut R) -> Result<u64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(PolyadsError::InvalidParameter(format!(
            "λ must be positive, got {lambda}"
        )));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(PolyadsError::InvalidParameter(format!(
            "Gamma rate must be positive, got {rate}"
        )));
    }
    let gamma = Gamma::new(rate, 1.0 / rate)
        .map_err(|e| PolyadsError::InvalidParameter(format!("Gamma({rate}): {e}")))?;
    let g: f64 = gamma.sample(rng);
    Ok(poisson_draw(lambda * g, rng))
}

fn draw_count<R: Rng + ?Sized>(lambda: f64, noise: Noise, rng: &mut R) -> u64 {
    match noise {
        Noise::Poisson => poisson_draw(lambda, rng),
        Noise::NegBin { rate } => {
            if !(lambda > 0.0) {
                0
            } else {
                negbin_draw(lambda, rate, rng).expect("validated design")
            }
        }
    }
}

/// One dataset on stream 0 of `design.seed`.
pub fn generate_three_way(design: &ThreeWayDesign) -> Result<SimulatedDataset> {
    generate_replication(design, 0)
}

/// Replication `rep` of `design`, drawn on its own RNG stream.
pub fn generate_replication(design: &ThreeWayDesign, rep: u64) -> Result<SimulatedDataset> {
    design.validate()?;
    if rep >= CALIBRATION_STREAM_BASE {
        return Err(PolyadsError::InvalidParameter(format!(
            "replication index {rep} collides with calibration streams"
        )));
    }
    let mut rng = stream_rng(design.seed, rep);
    generate_with_rng(design, &mut rng)
}

pub fn generate_with_rng<R: Rng + ?Sized>(
    design: &ThreeWayDesign,
    rng: &mut R,
) -> Result<SimulatedDataset> {
    design.validate()?;
    let latent = draw_latent(design, rng);
    let dims = design.dims();
    let (n2, n3) = (design.n2 as usize, design.n3 as usize);
    let mut edges = Vec::new();
    for (cell, &b) in latent.log_base.iter().enumerate() {
        let y = draw_count((design.intercept_c + b).exp(), design.noise, rng);
        if y > 0 {
            let i = cell / (n2 * n3);
            let j = cell / n3 % n2;
            let t = cell % n3;
            edges.push(([i as u32 + 1, j as u32 + 1, t as u32 + 1], y));
        }
    }
    let graph = SparseCountGraph::new(&dims, edges)?;
    let covariates = DenseCovariates::new(&dims, 1, latent.x)?;
    let realized_density = graph.num_edges() as f64 / design.n_cells() as f64;
    Ok(SimulatedDataset {
        graph,
        covariates,
        true_beta: vec![design.beta_star],
        realized_density,
    })
}

/// `P(Y > 0)` for intensity `λ`.
pub fn hit_probability(lambda: f64, noise: Noise) -> f64 {
    match noise {
        Noise::Poisson => -(-lambda).exp_m1(),
        Noise::NegBin { rate } => -(-rate * (lambda / rate).ln_1p()).exp_m1(),
    }
}

/// Expected share of positive cells given log-intensities `c + log_base`.
pub fn expected_density(log_base: &[f64], c: f64, noise: Noise) -> f64 {
    if log_base.is_empty() {
        return 0.0;
    }
    let total: f64 = log_base
        .iter()
        .map(|b| hit_probability((c + b).exp(), noise))
        .sum();
    total / log_base.len() as f64
}

/// Bisection for the intercept matching `target` on fixed log-intensities.
pub fn intercept_for_density(log_base: &[f64], noise: Noise, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(PolyadsError::Calibration(format!(
            "target density {target} outside (0, 1)"
        )));
    }
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    let f_lo = expected_density(log_base, lo, noise);
    let f_hi = expected_density(log_base, hi, noise);
    if f_lo > target || f_hi < target {
        return Err(PolyadsError::Calibration(format!(
            "target density {target} not reachable for c in [-30, 30] (range {f_lo:e} .. {f_hi})"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_density(log_base, mid, noise) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Intercept `c` whose expected density, averaged over
/// [`CALIBRATION_DRAWS`] independent FE/X draws, equals `target_density`.
pub fn calibrate_intercept(design: &ThreeWayDesign, target_density: f64) -> Result<f64> {
    design.validate()?;
    let mut pooled = Vec::with_capacity(design.n_cells() * CALIBRATION_DRAWS as usize);
    for k in 0..CALIBRATION_DRAWS {
        let mut rng = stream_rng(design.seed, CALIBRATION_STREAM_BASE + k);
        pooled.extend(draw_latent(design, &mut rng).log_base);
    }
    intercept_for_density(&pooled, design.noise, target_density)
}

/// Density giving `|E| ≈ 4√n` positive edges out of `n` cells.
pub fn sparse_regime_density(n_cells: usize) -> f64 {
    4.0 * (n_cells as f64).sqrt() / n_cells as f64
}

/// A node-subsampled graph with covariates read through the original provider.
pub struct Subsample<'a, C: ?Sized> {
    pub graph: SparseCountGraph,
    pub covariates: SubsampledCovariates<'a, C>,
    /// Original (1-based) labels of the kept nodes, per dimension, sorted.
    pub kept: Vec<Vec<u32>>,
}

/// Translates relabeled edges back to the original provider.
pub struct SubsampledCovariates<'a, C: ?Sized> {
    inner: &'a C,
    kept: Vec<Vec<u32>>,
}

impl<C: CovariateProvider + ?Sized> CovariateProvider for SubsampledCovariates<'_, C> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn fill(&self, edge: &[u32], out: &mut [f64]) -> bool {
        if edge.len() != self.kept.len() {
            return false;
        }
        let mut orig = smallvec::SmallVec::<[u32; 4]>::with_capacity(edge.len());
        for (&c, kept) in edge.iter().zip(&self.kept) {
            match kept.get((c as usize).wrapping_sub(1)) {
                Some(&o) => orig.push(o),
                None => return false,
            }
        }
        self.inner.fill(&orig, out)
    }
}

/// Keeps `round(p_d · n_d)` nodes per dimension, drawn without replacement,
/// and all edges among them; nodes are relabeled densely in original order.
pub fn subsample_nodes<'a, C: CovariateProvider + ?Sized, R: Rng + ?Sized>(
    graph: &SparseCountGraph,
    cov: &'a C,
    proportions: &[f64],
    rng: &mut R,
) -> Result<Subsample<'a, C>> {
    if proportions.len() != graph.d() {
        return Err(PolyadsError::DimensionMismatch(format!(
            "{} proportions for a {}-way graph",
            proportions.len(),
            graph.d()
        )));
    }
    let mut kept = Vec::with_capacity(graph.d());
    let mut relabel = Vec::with_capacity(graph.d());
    for (d, (&p, &n)) in proportions.iter().zip(graph.dims()).enumerate() {
        if !(p > 0.0 && p <= 1.0) {
            return Err(PolyadsError::Subsample(format!(
                "proportion {p} for dimension {} outside (0, 1]",
                d + 1
            )));
        }
        let k = if p == 1.0 {
            n as usize
        } else {
            (p * n as f64).round() as usize
        };
        if k < 2 {
            return Err(PolyadsError::Subsample(format!(
                "only {k} node(s) of {n} survive in dimension {}",
                d + 1
            )));
        }
        let mut nodes: Vec<u32> = if k == n as usize {
            (1..=n).collect()
        } else {
            index::sample(rng, n as usize, k)
                .into_iter()
                .map(|i| i as u32 + 1)
                .collect()
        };
        nodes.sort_unstable();
        let mut map = vec![0u32; n as usize + 1];
        for (new, &old) in nodes.iter().enumerate() {
            map[old as usize] = new as u32 + 1;
        }
        kept.push(nodes);
        relabel.push(map);
    }
    let new_dims: Vec<u32> = kept.iter().map(|k| k.len() as u32).collect();
    let edges = graph.edges().filter_map(|(e, y)| {
        let coords: Option<Vec<u32>> = e
            .iter()
            .zip(&relabel)
            .map(|(&c, map)| Some(map[c as usize]).filter(|&v| v > 0))
            .collect();
        coords.map(|c| (c, y))
    });
    let sub = SparseCountGraph::with_mode(&new_dims, edges, graph.mode())?;
    Ok(Subsample {
        graph: sub,
        covariates: SubsampledCovariates {
            inner: cov,
            kept: kept.clone(),
        },
        kept,
    })
}

/// Random graph where each cell is positive with probability `density`, with
/// counts uniform on `1..=max_count`.
pub fn random_graph<R: Rng + ?Sized>(
    dims: &[u32],
    density: f64,
    max_count: u64,
    rng: &mut R,
) -> Result<SparseCountGraph> {
    let cells: usize = dims.iter().map(|&n| n as usize).product();
    let mut coords = vec![1u32; dims.len()];
    let mut edges = Vec::new();
    for _ in 0..cells {
        if rng.random::<f64>() < density {
            edges.push((coords.clone(), rng.random_range(1..=max_count.max(1))));
        }
        for k in (0..dims.len()).rev() {
            if coords[k] < dims[k] {
                coords[k] += 1;
                break;
            }
            coords[k] = 1;
        }
    }
    SparseCountGraph::new(dims, edges)
}

/// Standard-normal covariates on every cell.
pub fn random_covariates<R: Rng + ?Sized>(dims: &[u32], p: usize, rng: &mut R) -> DenseCovariates {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    DenseCovariates::from_fn(dims, p, |_, out| {
        for o in out.iter_mut() {
            *o = normal.sample(rng);
        }
    })
}
