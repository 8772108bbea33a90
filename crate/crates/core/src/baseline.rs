//! Plain PPML with high-dimensional fixed effects, used as the biased
//! comparator in Monte Carlo runs.
//!
//! The likelihood is maximized over the full cell grid (zeros included) by
//! alternating closed-form fixed-effect sweeps with Newton steps on `β`
//! computed from weighted within-transformed covariates.

use std::collections::BTreeMap;

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::covariates::CovariateProvider;
use crate::error::{PolyadsError, Result};
use crate::graph::{EdgeIndex, FixedEffectStructure, SparseCountGraph};

/// Value given to fixed effects of groups with no positive count.
pub const SEPARATED_FE: f64 = -30.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PpmlConfig {
    pub max_outer: usize,
    /// Stop when the largest parameter change falls below this.
    pub tolerance: f64,
    /// Refuse grids with more cells than this.
    pub max_cells: u128,
    /// Cap on fixed-effect sweeps (and demeaning sweeps) per outer step.
    /// Outer iterations resume where the sweeps stopped, so this bounds the
    /// cost of fits whose likelihood has no finite maximizer.
    pub max_sweeps: usize,
}

impl Default for PpmlConfig {
    fn default() -> Self {
        PpmlConfig {
            max_outer: 200,
            tolerance: 1e-8,
            max_cells: 10_000_000,
            max_sweeps: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PpmlResult {
    pub beta_hat: Vec<f64>,
    /// Global intercept collecting the level means (0 when there are no levels).
    pub intercept: f64,
    /// Per level, `ρ → θ^g_ρ` with `ρ` the 1-based coordinates on the level's axes.
    pub fe_values: Vec<BTreeMap<EdgeIndex, f64>>,
    pub iterations: usize,
    pub converged: bool,
    pub deviance: f64,
    /// Deviance after each outer iteration.
    pub deviance_trace: Vec<f64>,
    /// Heteroskedasticity-robust standard errors of `β̂`.
    pub robust_se: Vec<f64>,
    /// Number of fixed effects pinned at [`SEPARATED_FE`].
    pub separated: usize,
}

struct Level {
    axes: Vec<usize>,
    sizes: Vec<u32>,
    group_of: Vec<u32>,
    n_groups: usize,
}

struct Problem {
    y: Vec<f64>,
    /// Row-major `n × p`.
    x: Vec<f64>,
    p: usize,
    levels: Vec<Level>,
}

impl Problem {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn xrow(&self, cell: usize) -> &[f64] {
        &self.x[cell * self.p..(cell + 1) * self.p]
    }
}

struct State {
    beta: Vec<f64>,
    alpha: f64,
    theta: Vec<Vec<f64>>,
    pinned: Vec<Vec<bool>>,
    eta: Vec<f64>,
    lambda: Vec<f64>,
}

fn build_problem<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    cov: &C,
    structure: &FixedEffectStructure,
    config: &PpmlConfig,
) -> Result<Problem> {
    if structure.d() != graph.d() {
        return Err(PolyadsError::DimensionMismatch(format!(
            "fixed-effect structure for D = {}, graph has D = {}",
            structure.d(),
            graph.d()
        )));
    }
    let n = graph.n_cells();
    if n > config.max_cells {
        return Err(PolyadsError::ResourceGuard(format!(
            "PPML needs the full grid of {n} cells, above the cap of {}",
            config.max_cells
        )));
    }
    let n = n as usize;
    let dims = graph.dims();
    let p = cov.dim();
    let mut y = vec![0.0; n];
    let mut x = vec![0.0; n * p];
    let mut missing = Vec::new();
    let mut coords = vec![1u32; dims.len()];
    let mut cell_coords = Vec::with_capacity(n * dims.len());
    for cell in 0..n {
        y[cell] = graph.count(&coords) as f64;
        if !cov.fill(&coords, &mut x[cell * p..(cell + 1) * p]) {
            missing.push(EdgeIndex::new(&coords));
        }
        cell_coords.extend_from_slice(&coords);
        for k in (0..dims.len()).rev() {
            if coords[k] < dims[k] {
                coords[k] += 1;
                break;
            }
            coords[k] = 1;
        }
    }
    if !missing.is_empty() {
        return Err(PolyadsError::missing_covariates(missing));
    }
    let d = dims.len();
    let levels = structure
        .levels()
        .iter()
        .map(|axes| {
            let sizes: Vec<u32> = axes.iter().map(|&a| dims[a]).collect();
            let group_of = (0..n)
                .map(|cell| {
                    let c = &cell_coords[cell * d..(cell + 1) * d];
                    axes.iter()
                        .zip(&sizes)
                        .fold(0u32, |acc, (&a, &s)| acc * s + (c[a] - 1))
                })
                .collect();
            Level {
                axes: axes.clone(),
                n_groups: sizes.iter().map(|&s| s as usize).product(),
                sizes,
                group_of,
            }
        })
        .collect();
    Ok(Problem { y, x, p, levels })
}

fn refresh(problem: &Problem, s: &mut State) {
    for cell in 0..problem.n() {
        let mut eta = s.alpha;
        for (lvl, th) in problem.levels.iter().zip(&s.theta) {
            eta += th[lvl.group_of[cell] as usize];
        }
        eta += problem
            .xrow(cell)
            .iter()
            .zip(&s.beta)
            .map(|(x, b)| x * b)
            .sum::<f64>();
        s.eta[cell] = eta;
        s.lambda[cell] = eta.exp();
    }
}

fn deviance(y: &[f64], lambda: &[f64]) -> f64 {
    2.0 * y
        .iter()
        .zip(lambda)
        .map(|(&y, &l)| {
            let ylog = if y > 0.0 { y * (y / l).ln() } else { 0.0 };
            ylog - (y - l)
        })
        .sum::<f64>()
}

/// Sweeps the fixed effects to their optimum given `β`; returns the largest
/// change in any non-pinned effect.
fn sweep_fixed_effects(problem: &Problem, s: &mut State, config: &PpmlConfig) -> f64 {
    let start = s.theta.clone();
    for _ in 0..config.max_sweeps {
        let mut biggest = 0.0f64;
        for (g, lvl) in problem.levels.iter().enumerate() {
            let mut sy = vec![0.0; lvl.n_groups];
            let mut sl = vec![0.0; lvl.n_groups];
            for cell in 0..problem.n() {
                let k = lvl.group_of[cell] as usize;
                sy[k] += problem.y[cell];
                sl[k] += s.lambda[cell];
            }
            let mut delta = vec![0.0; lvl.n_groups];
            for k in 0..lvl.n_groups {
                if s.pinned[g][k] {
                    continue;
                }
                if sy[k] == 0.0 {
                    s.pinned[g][k] = true;
                    delta[k] = SEPARATED_FE - s.theta[g][k];
                    s.theta[g][k] = SEPARATED_FE;
                    continue;
                }
                let step = (sy[k] / sl[k]).ln();
                delta[k] = step;
                s.theta[g][k] += step;
                biggest = biggest.max(step.abs());
            }
            for cell in 0..problem.n() {
                let dk = delta[lvl.group_of[cell] as usize];
                if dk != 0.0 {
                    s.eta[cell] += dk;
                    s.lambda[cell] = s.eta[cell].exp();
                }
            }
        }
        if biggest < 0.01 * config.tolerance {
            break;
        }
    }
    // Fold level means into the intercept.
    for (g, th) in s.theta.iter_mut().enumerate() {
        let free: Vec<usize> = (0..th.len()).filter(|&k| !s.pinned[g][k]).collect();
        if free.is_empty() {
            continue;
        }
        let mean = free.iter().map(|&k| th[k]).sum::<f64>() / free.len() as f64;
        for &k in &free {
            th[k] -= mean;
        }
        s.alpha += mean;
    }
    refresh(problem, s);
    s.theta
        .iter()
        .zip(&start)
        .zip(&s.pinned)
        .flat_map(|((a, b), pin)| {
            a.iter()
                .zip(b)
                .zip(pin)
                .filter(|(_, &p)| !p)
                .map(|((x, y), _)| (x - y).abs())
        })
        .fold(0.0, f64::max)
}

/// Covariates with the fixed-effect space projected out under weights `λ`.
fn within_transform(problem: &Problem, lambda: &[f64], config: &PpmlConfig) -> Vec<f64> {
    let (n, p) = (problem.n(), problem.p);
    let mut xt = problem.x.clone();
    if problem.levels.is_empty() {
        return xt;
    }
    for _ in 0..config.max_sweeps {
        let mut biggest = 0.0f64;
        for lvl in &problem.levels {
            let mut sw = vec![0.0; lvl.n_groups];
            let mut swx = vec![0.0; lvl.n_groups * p];
            for cell in 0..n {
                let k = lvl.group_of[cell] as usize;
                sw[k] += lambda[cell];
                for j in 0..p {
                    swx[k * p + j] += lambda[cell] * xt[cell * p + j];
                }
            }
            for cell in 0..n {
                let k = lvl.group_of[cell] as usize;
                if sw[k] <= 0.0 {
                    continue;
                }
                for j in 0..p {
                    let m = swx[k * p + j] / sw[k];
                    xt[cell * p + j] -= m;
                    biggest = biggest.max(m.abs());
                }
            }
        }
        if biggest < 1e-12 {
            break;
        }
    }
    xt
}

fn information(
    problem: &Problem,
    lambda: &[f64],
    xt: &[f64],
) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let p = problem.p;
    let mut h = DMatrix::zeros(p, p);
    let mut score = DVector::zeros(p);
    let mut meat = DMatrix::zeros(p, p);
    for cell in 0..problem.n() {
        let row = &xt[cell * p..(cell + 1) * p];
        let r = problem.y[cell] - lambda[cell];
        for a in 0..p {
            score[a] += r * row[a];
            for b in 0..p {
                h[(a, b)] += lambda[cell] * row[a] * row[b];
                meat[(a, b)] += r * r * row[a] * row[b];
            }
        }
    }
    (h, score, meat)
}

fn solve(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    h.clone()
        .cholesky()
        .map(|c| c.solve(g))
        .or_else(|| h.clone().lu().solve(g))
}

/// Poisson pseudo-maximum likelihood with fixed effects on every level of
/// `structure`, over the full grid of `graph`.
pub fn ppml_fit<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    cov: &C,
    structure: &FixedEffectStructure,
    config: &PpmlConfig,
) -> Result<PpmlResult> {
    let problem = build_problem(graph, cov, structure, config)?;
    let (n, p) = (problem.n(), problem.p);
    let mut s = State {
        beta: vec![0.0; p],
        alpha: 0.0,
        theta: problem
            .levels
            .iter()
            .map(|l| vec![0.0; l.n_groups])
            .collect(),
        pinned: problem
            .levels
            .iter()
            .map(|l| vec![false; l.n_groups])
            .collect(),
        eta: vec![0.0; n],
        lambda: vec![1.0; n],
    };
    if !problem.levels.is_empty() {
        // Start from the overall log mean.
        let mean = problem.y.iter().sum::<f64>() / n as f64;
        s.alpha = mean.max(1e-300).ln();
    }
    refresh(&problem, &mut s);

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut fe_change = sweep_fixed_effects(&problem, &mut s, config);
    let mut dev = deviance(&problem.y, &s.lambda);
    while iterations < config.max_outer {
        iterations += 1;
        let mut beta_change = 0.0f64;
        if p > 0 {
            let xt = within_transform(&problem, &s.lambda, config);
            let (h, score, _) = information(&problem, &s.lambda, &xt);
            let Some(step) = solve(&h, &score) else {
                return Err(PolyadsError::CollinearFeatures {
                    direction: nalgebra::SymmetricEigen::new(h.clone())
                        .eigenvectors
                        .column(0)
                        .iter()
                        .cloned()
                        .collect(),
                });
            };
            let base_beta = s.beta.clone();
            let base = (s.alpha, s.theta.clone(), s.pinned.clone());
            let mut t = 1.0;
            loop {
                s.beta = base_beta
                    .iter()
                    .zip(step.iter())
                    .map(|(b, d)| b + t * d)
                    .collect();
                s.alpha = base.0;
                s.theta = base.1.clone();
                s.pinned = base.2.clone();
                refresh(&problem, &mut s);
                fe_change = sweep_fixed_effects(&problem, &mut s, config);
                let new_dev = deviance(&problem.y, &s.lambda);
                if new_dev <= dev + 1e-12 * dev.abs().max(1.0) || t < 1e-8 {
                    dev = new_dev;
                    break;
                }
                t *= 0.5;
            }
            beta_change = s
                .beta
                .iter()
                .zip(&base_beta)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        }
        trace.push(dev);
        if beta_change.max(fe_change) < config.tolerance {
            converged = true;
            break;
        }
        if p == 0 {
            fe_change = sweep_fixed_effects(&problem, &mut s, config);
            dev = deviance(&problem.y, &s.lambda);
        }
    }

    let robust_se = if p > 0 {
        let xt = within_transform(&problem, &s.lambda, config);
        let (h, _, meat) = information(&problem, &s.lambda, &xt);
        match h.clone().try_inverse() {
            Some(hi) => {
                let v = &hi * meat * &hi;
                (0..p).map(|k| v[(k, k)].max(0.0).sqrt()).collect()
            }
            None => vec![f64::NAN; p],
        }
    } else {
        Vec::new()
    };
    let separated: usize = s
        .pinned
        .iter()
        .map(|l| l.iter().filter(|&&b| b).count())
        .sum();
    if separated > 0 {
        debug!(
            "{separated} fixed effect(s) have no positive count and were pinned at {SEPARATED_FE}"
        );
    }
    let fe_values = problem
        .levels
        .iter()
        .zip(&s.theta)
        .map(|(lvl, th)| {
            th.iter()
                .enumerate()
                .map(|(k, &v)| {
                    let mut rho = vec![0u32; lvl.axes.len()];
                    let mut rest = k as u32;
                    for (slot, &size) in rho.iter_mut().zip(&lvl.sizes).rev() {
                        *slot = rest % size + 1;
                        rest /= size;
                    }
                    (EdgeIndex::from(rho), v)
                })
                .collect()
        })
        .collect();
    Ok(PpmlResult {
        beta_hat: s.beta,
        intercept: s.alpha,
        fe_values,
        iterations,
        converged,
        deviance: dev,
        deviance_trace: trace,
        robust_se,
        separated,
    })
}
