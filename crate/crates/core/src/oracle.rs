//! Brute-force reference implementations for tests.
//!
//! Nothing here calls into the enumeration, estimator or variance code: orbit
//! weights come from factorials and `e^{βᵀX}` products over the whole orbit,
//! canonical polyads from an exhaustive scan, and meat matrices from explicit
//! double sums over permutations.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::covariates::CovariateProvider;
use crate::error::{PolyadsError, Result};
use crate::graph::{EdgeIndex, Polyad, SparseCountGraph};

/// Largest polyad space the exhaustive scan accepts.
pub const MAX_BRUTE_POLYADS: u128 = 10_000_000;

/// Largest `|Ξ_a|` accepted by the pair-sum oracles.
pub const MAX_BRUTE_ELEMENTS: usize = 20_000;

/// `ln(n!)`, from the exact product while it fits a double, then log-gamma.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 170 {
        (1..=n).map(|k| k as f64).product::<f64>().ln()
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

fn corner(top: &[u32], bottom: &[u32], mask: usize) -> EdgeIndex {
    let v: Vec<u32> = (0..top.len())
        .map(|d| {
            if mask >> d & 1 == 1 {
                bottom[d]
            } else {
                top[d]
            }
        })
        .collect();
    EdgeIndex::from(v)
}

/// The `2^D` corners of `xi` with their signs, written out from scratch.
fn corners(xi: &Polyad) -> Vec<(EdgeIndex, i64)> {
    let d = xi.d();
    (0..1usize << d)
        .map(|mask| {
            let sign = if mask.count_ones() % 2 == 0 { 1 } else { -1 };
            (corner(xi.top(), xi.bottom(), mask), sign)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitState {
    pub r: i64,
    /// Counts on the polyad's edges after applying `r`, in corner order.
    pub counts: Vec<u64>,
    pub log_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitEnumeration {
    pub states: Vec<OrbitState>,
}

/// Every state of the orbit with log-weight `Σ_i (y_i βᵀX_i − ln y_i!)` over
/// the polyad's edges (all other terms cancel within an orbit).
pub fn brute_orbit<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    xi: &Polyad,
    cov: &C,
    beta: &[f64],
) -> Result<OrbitEnumeration> {
    let cs = corners(xi);
    let mut lin = Vec::with_capacity(cs.len());
    let mut buf = vec![0.0; cov.dim()];
    for (e, _) in &cs {
        if !cov.fill(e, &mut buf) {
            return Err(PolyadsError::missing_covariates(vec![e.clone()]));
        }
        lin.push(buf.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>());
    }
    let y: Vec<i64> = cs.iter().map(|(e, _)| graph.count(e) as i64).collect();
    let lowest = cs
        .iter()
        .zip(&y)
        .filter(|((_, s), _)| *s == 1)
        .map(|(_, &v)| v)
        .min()
        .unwrap_or(0);
    let highest = cs
        .iter()
        .zip(&y)
        .filter(|((_, s), _)| *s == -1)
        .map(|(_, &v)| v)
        .min()
        .unwrap_or(0);
    let states = (-lowest..=highest)
        .map(|r| {
            let counts: Vec<u64> = cs
                .iter()
                .zip(&y)
                .map(|((_, s), &v)| (v + r * s) as u64)
                .collect();
            let log_weight = counts
                .iter()
                .zip(&lin)
                .map(|(&c, &l)| c as f64 * l - ln_factorial(c))
                .sum();
            OrbitState {
                r,
                counts,
                log_weight,
            }
        })
        .collect();
    Ok(OrbitEnumeration { states })
}

/// Conditional probabilities of the orbit states, ordered by `r` from `-m_ξ`
/// to `M_ξ`.
pub fn brute_conditional_distribution<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    xi: &Polyad,
    cov: &C,
    beta: &[f64],
) -> Result<Vec<f64>> {
    let orbit = brute_orbit(graph, xi, cov, beta)?;
    let top = orbit
        .states
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = orbit
        .states
        .iter()
        .map(|s| (s.log_weight - top).exp())
        .collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / z).collect())
}

/// Loss, conditional mean and variance of `m_ξ(Y)` from the brute orbit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BruteTerms {
    pub loss: f64,
    pub mean: f64,
    pub variance: f64,
}

pub fn brute_terms<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    xi: &Polyad,
    cov: &C,
    beta: &[f64],
) -> Result<BruteTerms> {
    let orbit = brute_orbit(graph, xi, cov, beta)?;
    let probs = brute_conditional_distribution(graph, xi, cov, beta)?;
    let m = -orbit.states[0].r;
    // ln Σ_k exp(w_k) − w_obs, split at the largest state so that a loss
    // near zero keeps its relative precision.
    let lw: Vec<f64> = orbit.states.iter().map(|s| s.log_weight).collect();
    let top = (0..lw.len()).fold(0, |a, k| if lw[k] > lw[a] { k } else { a });
    let rest: f64 = (0..lw.len())
        .filter(|&k| k != top)
        .map(|k| (lw[k] - lw[top]).exp())
        .sum();
    let loss = (lw[top] - lw[m as usize]) + rest.ln_1p();
    let mean: f64 = probs
        .iter()
        .zip(&orbit.states)
        .map(|(p, s)| p * (m + s.r) as f64)
        .sum();
    let variance: f64 = probs
        .iter()
        .zip(&orbit.states)
        .map(|(p, s)| p * ((m + s.r) as f64 - mean).powi(2))
        .sum();
    Ok(BruteTerms {
        loss,
        mean,
        variance,
    })
}

/// `Σ_i s_ξ(i) X_i`, read corner by corner.
pub fn brute_did<C: CovariateProvider + ?Sized>(xi: &Polyad, cov: &C) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; cov.dim()];
    let mut buf = vec![0.0; cov.dim()];
    for (e, s) in corners(xi) {
        if !cov.fill(&e, &mut buf) {
            return Err(PolyadsError::missing_covariates(vec![e]));
        }
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += s as f64 * x;
        }
    }
    Ok(acc)
}

/// `∇ℓ_ξ = (E[m_ξ(Y) | orbit] − m_ξ(y)) X̃_ξ`.
pub fn brute_gradient<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    xi: &Polyad,
    cov: &C,
    beta: &[f64],
) -> Result<Vec<f64>> {
    let t = brute_terms(graph, xi, cov, beta)?;
    let orbit = brute_orbit(graph, xi, cov, beta)?;
    let m = -orbit.states[0].r as f64;
    Ok(brute_did(xi, cov)?
        .into_iter()
        .map(|x| (t.mean - m) * x)
        .collect())
}

fn is_canonical(graph: &SparseCountGraph, xi: &Polyad) -> bool {
    let cs = corners(xi);
    let min_of = |sign: i64| {
        cs.iter()
            .filter(|(_, s)| *s == sign)
            .map(|(e, _)| graph.count(e))
            .min()
            .unwrap_or(0)
    };
    let (m, big_m) = (min_of(1), min_of(-1));
    let (top, bottom) = (xi.top(), xi.bottom());
    m > 0 && (1..xi.d()).all(|d| top[d] < bottom[d]) && (big_m == 0 || top[0] < bottom[0])
}

/// All canonical representatives of active polyads, by exhaustive scan.
pub fn brute_active_polyads(graph: &SparseCountGraph) -> Result<BTreeSet<Polyad>> {
    let dims = graph.dims();
    let space: u128 = dims
        .iter()
        .map(|&n| n as u128 * (n as u128).saturating_sub(1))
        .product();
    if space > MAX_BRUTE_POLYADS {
        return Err(PolyadsError::ResourceGuard(format!(
            "{space} polyads exceed the brute-force limit"
        )));
    }
    let d = dims.len();
    let mut out = BTreeSet::new();
    let mut top = vec![1u32; d];
    let mut bottom = vec![1u32; d];
    loop {
        if top.iter().zip(&bottom).all(|(a, b)| a != b) {
            let xi = Polyad::new(top.clone(), bottom.clone())?;
            let cs = corners(&xi);
            let min_of = |sign: i64| {
                cs.iter()
                    .filter(|(_, s)| *s == sign)
                    .map(|(e, _)| graph.count(e))
                    .min()
                    .unwrap_or(0)
            };
            if min_of(1) + min_of(-1) >= 1 {
                let canon: Vec<Polyad> = (0..1usize << d)
                    .map(|mask| {
                        let t = corner(&top, &bottom, mask);
                        let b = corner(&top, &bottom, (1 << d) - 1 - mask);
                        Polyad::new(t, b).expect("flip keeps columns distinct")
                    })
                    .filter(|p| is_canonical(graph, p))
                    .collect();
                assert_eq!(
                    canon.len(),
                    1,
                    "active polyad {xi} has {} canonical forms",
                    canon.len()
                );
                out.insert(canon.into_iter().next().unwrap());
            }
        }
        // Odometer over (top, bottom) jointly.
        let mut k = 2 * d;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            let (slot, n) = if k < d {
                (&mut top[k], dims[k])
            } else {
                (&mut bottom[k - d], dims[k - d])
            };
            if *slot < n {
                *slot += 1;
                break;
            }
            *slot = 1;
        }
    }
}

/// One element of `Ξ_a`: a permutation of a canonical record.
#[derive(Clone, Debug)]
struct Element {
    top: EdgeIndex,
    bottom: EdgeIndex,
    edges: BTreeSet<EdgeIndex>,
    record: usize,
}

fn expand(polyads: &[Polyad]) -> Result<Vec<Element>> {
    let total: usize = polyads.iter().map(|p| 1usize << p.d()).sum();
    if total > MAX_BRUTE_ELEMENTS {
        return Err(PolyadsError::ResourceGuard(format!(
            "{total} permutations exceed the brute-force pair limit"
        )));
    }
    let mut out = Vec::with_capacity(total);
    for (idx, xi) in polyads.iter().enumerate() {
        let d = xi.d();
        for mask in 0..1usize << d {
            let top = corner(xi.top(), xi.bottom(), mask);
            let bottom = corner(xi.top(), xi.bottom(), (1 << d) - 1 - mask);
            let perm = Polyad::new(top.clone(), bottom.clone())?;
            let edges = corners(&perm).into_iter().map(|(e, _)| e).collect();
            out.push(Element {
                top,
                bottom,
                edges,
                record: idx,
            });
        }
    }
    Ok(out)
}

/// `i ↦ [(i′, record)]` from a direct scan of all permutations.
pub fn brute_incidence(polyads: &[Polyad]) -> Result<BTreeMap<EdgeIndex, Vec<(EdgeIndex, usize)>>> {
    let mut map: BTreeMap<EdgeIndex, Vec<(EdgeIndex, usize)>> = BTreeMap::new();
    for el in expand(polyads)? {
        map.entry(el.top).or_default().push((el.bottom, el.record));
    }
    for v in map.values_mut() {
        v.sort();
    }
    Ok(map)
}

/// `S_i = Σ_{ξ ∈ Ξ_a : i ∈ ℰ(ξ)} ∇ℓ_ξ` for every edge touched by some polyad.
pub fn brute_edge_scores(
    polyads: &[Polyad],
    gradients: &[Vec<f64>],
) -> Result<BTreeMap<EdgeIndex, Vec<f64>>> {
    let mut out: BTreeMap<EdgeIndex, Vec<f64>> = BTreeMap::new();
    for el in expand(polyads)? {
        let g = &gradients[el.record];
        for e in &el.edges {
            let acc = out.entry(e.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (a, v) in acc.iter_mut().zip(g) {
                *a += v;
            }
        }
    }
    Ok(out)
}

fn pair_sum(
    polyads: &[Polyad],
    gradients: &[Vec<f64>],
    p: usize,
    weight: impl Fn(usize) -> f64,
) -> Result<DMatrix<f64>> {
    let elements = expand(polyads)?;
    let mut out = DMatrix::zeros(p, p);
    for a in &elements {
        for b in &elements {
            let shared = a.edges.intersection(&b.edges).count();
            let w = weight(shared);
            if w == 0.0 {
                continue;
            }
            let (ga, gb) = (&gradients[a.record], &gradients[b.record]);
            for i in 0..p {
                for j in 0..p {
                    out[(i, j)] += w * ga[i] * gb[j];
                }
            }
        }
    }
    Ok(out)
}

/// `Σ_{(ξ,ξ′) ∈ Ξ_a²} |ℰ(ξ) ∩ ℰ(ξ′)| ∇ℓ_ξ ∇ℓ_ξ′ᵀ`, the expanded edge-score meat.
pub fn brute_omega(polyads: &[Polyad], gradients: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    pair_sum(polyads, gradients, p, |shared| shared as f64)
}

/// `Σ_{(ξ,ξ′) ∈ Ξ_a² sharing an edge} ∇ℓ_ξ ∇ℓ_ξ′ᵀ`.
pub fn brute_pair_covariance(
    polyads: &[Polyad],
    gradients: &[Vec<f64>],
    p: usize,
) -> Result<DMatrix<f64>> {
    pair_sum(
        polyads,
        gradients,
        p,
        |shared| if shared > 0 { 1.0 } else { 0.0 },
    )
}

/// Number of edges two polyads have in common.
pub fn shared_edges(a: &Polyad, b: &Polyad) -> usize {
    let ea: BTreeSet<_> = corners(a).into_iter().map(|(e, _)| e).collect();
    corners(b)
        .into_iter()
        .filter(|(e, _)| ea.contains(e))
        .count()
}
