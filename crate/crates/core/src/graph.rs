//! Sparse D-partite count graphs, generalized degrees and polyad primitives.
//!
//! A graph stores only its positive edges. They are bucketed by the first
//! coordinate `i1`; each bucket holds the set `E_{i1}` of tails
//! `(i2, .., iD)` with a positive count. Tails are packed into a mixed-radix
//! `u64` key whose numeric order equals the lexicographic order of the tail
//! coordinates, so iterating buckets in order yields edges in lexicographic
//! order.
//!
//! Node ids are dense and 1-based in every dimension.

use std::collections::BTreeMap;
use std::fmt;

use rustc_hash::FxHashMap;
use smallvec::SmallVec;

use crate::covariates::CovariateProvider;
use crate::error::{PolyadsError, Result};

pub type Coords = SmallVec<[u32; 4]>;

/// A D-dimensional edge index `(i1, .., iD)` with 1-based coordinates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct EdgeIndex(Coords);

impl EdgeIndex {
    pub fn new(coords: &[u32]) -> Self {
        EdgeIndex(Coords::from_slice(coords))
    }

    pub fn coords(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u32>> for EdgeIndex {
    fn from(v: Vec<u32>) -> Self {
        EdgeIndex(Coords::from_vec(v))
    }
}

impl From<&[u32]> for EdgeIndex {
    fn from(v: &[u32]) -> Self {
        EdgeIndex::new(v)
    }
}

impl<const N: usize> From<[u32; N]> for EdgeIndex {
    fn from(v: [u32; N]) -> Self {
        EdgeIndex::new(&v)
    }
}

impl AsRef<[u32]> for EdgeIndex {
    fn as_ref(&self) -> &[u32] {
        &self.0
    }
}

impl std::ops::Deref for EdgeIndex {
    type Target = [u32];

    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for EdgeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// How the per-`i1` adjacency sets answer membership queries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdjacencyMode {
    /// Hash table lookup, constant time.
    #[default]
    Hash,
    /// Binary search in the sorted tail list.
    Sorted,
}

#[derive(Clone, Debug, Default)]
struct Bucket {
    tails: Vec<u64>,
    counts: Vec<u64>,
    index: Option<FxHashMap<u64, u64>>,
}

impl Bucket {
    #[inline]
    fn get(&self, tail: u64) -> u64 {
        match &self.index {
            Some(map) => map.get(&tail).copied().unwrap_or(0),
            None => match self.tails.binary_search(&tail) {
                Ok(k) => self.counts[k],
                Err(_) => 0,
            },
        }
    }

    fn set_mode(&mut self, mode: AdjacencyMode) {
        self.index = match mode {
            AdjacencyMode::Hash => Some(
                self.tails
                    .iter()
                    .copied()
                    .zip(self.counts.iter().copied())
                    .collect(),
            ),
            AdjacencyMode::Sorted => None,
        };
    }
}

/// Immutable sparse representation of a count graph `y ∈ ℕ^ℐ`.
#[derive(Clone, Debug)]
pub struct SparseCountGraph {
    dims: Vec<u32>,
    tail_strides: Vec<u64>,
    buckets: Vec<Bucket>,
    n_edges: usize,
    mode: AdjacencyMode,
}

impl SparseCountGraph {
    /// Builds a graph from `(coords, count)` pairs. Zero counts are dropped;
    /// duplicated coordinates are rejected.
    pub fn new<I, E>(dims: &[u32], edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (E, u64)>,
        E: AsRef<[u32]>,
    {
        Self::with_mode(dims, edges, AdjacencyMode::default())
    }

    pub fn with_mode<I, E>(dims: &[u32], edges: I, mode: AdjacencyMode) -> Result<Self>
    where
        I: IntoIterator<Item = (E, u64)>,
        E: AsRef<[u32]>,
    {
        if dims.len() < 2 {
            return Err(PolyadsError::InvalidGraph(format!(
                "need at least 2 dimensions, got {}",
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().position(|&n| n == 0) {
            return Err(PolyadsError::InvalidGraph(format!(
                "dimension {} is empty",
                d + 1
            )));
        }
        let mut tail_strides = vec![1u64; dims.len() - 1];
        for k in (0..tail_strides.len().saturating_sub(1)).rev() {
            tail_strides[k] = tail_strides[k + 1]
                .checked_mul(dims[k + 2] as u64)
                .ok_or_else(|| {
                    PolyadsError::InvalidGraph("tail index space exceeds 64 bits".into())
                })?;
        }
        tail_strides[0]
            .checked_mul(dims[1] as u64)
            .ok_or_else(|| PolyadsError::InvalidGraph("tail index space exceeds 64 bits".into()))?;

        let mut pending: Vec<Vec<(u64, u64)>> = vec![Vec::new(); dims[0] as usize];
        for (coords, count) in edges {
            let coords = coords.as_ref();
            if coords.len() != dims.len() {
                return Err(PolyadsError::DimensionMismatch(format!(
                    "edge {} has {} coordinates, graph has D = {}",
                    EdgeIndex::new(coords),
                    coords.len(),
                    dims.len()
                )));
            }
            for (d, (&c, &n)) in coords.iter().zip(dims).enumerate() {
                if c == 0 || c > n {
                    return Err(PolyadsError::InvalidGraph(format!(
                        "edge {} coordinate {} out of range 1..={}",
                        EdgeIndex::new(coords),
                        d + 1,
                        n
                    )));
                }
            }
            if count == 0 {
                continue;
            }
            let tail = encode_tail(&tail_strides, &coords[1..]);
            pending[coords[0] as usize - 1].push((tail, count));
        }

        let mut n_edges = 0;
        let mut buckets = Vec::with_capacity(pending.len());
        for (i1, mut entries) in pending.into_iter().enumerate() {
            entries.sort_unstable();
            if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
                let mut coords = vec![i1 as u32 + 1; dims.len()];
                decode_tail(&tail_strides, &dims[1..], w[0].0, &mut coords[1..]);
                return Err(PolyadsError::InvalidGraph(format!(
                    "duplicate edge {}",
                    EdgeIndex::from(coords)
                )));
            }
            n_edges += entries.len();
            let mut bucket = Bucket {
                tails: entries.iter().map(|e| e.0).collect(),
                counts: entries.iter().map(|e| e.1).collect(),
                index: None,
            };
            bucket.set_mode(mode);
            buckets.push(bucket);
        }

        Ok(SparseCountGraph {
            dims: dims.to_vec(),
            tail_strides,
            buckets,
            n_edges,
            mode,
        })
    }

    /// Same graph with a different adjacency lookup mode.
    pub fn to_mode(&self, mode: AdjacencyMode) -> Self {
        let mut g = self.clone();
        g.mode = mode;
        for b in &mut g.buckets {
            b.set_mode(mode);
        }
        g
    }

    pub fn d(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn mode(&self) -> AdjacencyMode {
        self.mode
    }

    /// Number of cells `n = Π n_d`.
    pub fn n_cells(&self) -> u128 {
        self.dims.iter().map(|&n| n as u128).product()
    }

    /// `|E|`, the number of positive edges.
    pub fn num_edges(&self) -> usize {
        self.n_edges
    }

    pub fn total_count(&self) -> u64 {
        self.buckets.iter().flat_map(|b| b.counts.iter()).sum()
    }

    /// Count on edge `coords`; absent or out-of-range edges read as 0.
    pub fn count(&self, coords: &[u32]) -> u64 {
        if coords.len() != self.dims.len()
            || coords
                .iter()
                .zip(&self.dims)
                .any(|(&c, &n)| c == 0 || c > n)
        {
            return 0;
        }
        let tail = encode_tail(&self.tail_strides, &coords[1..]);
        self.buckets[coords[0] as usize - 1].get(tail)
    }

    /// Positive edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeIndex, u64)> + '_ {
        self.buckets.iter().enumerate().flat_map(move |(i1, b)| {
            b.tails.iter().zip(&b.counts).map(move |(&tail, &count)| {
                let mut coords: Coords = smallvec::smallvec![0; self.dims.len()];
                coords[0] = i1 as u32 + 1;
                decode_tail(&self.tail_strides, &self.dims[1..], tail, &mut coords[1..]);
                (EdgeIndex(coords), count)
            })
        })
    }

    /// The adjacency set `E_{i1}` as sorted `(i2, .., iD)` tuples.
    pub fn neighbors(&self, i1: u32) -> Vec<EdgeIndex> {
        let Some(b) = i1.checked_sub(1).and_then(|k| self.buckets.get(k as usize)) else {
            return Vec::new();
        };
        b.tails
            .iter()
            .map(|&t| {
                let mut coords: Coords = smallvec::smallvec![0; self.dims.len() - 1];
                decode_tail(&self.tail_strides, &self.dims[1..], t, &mut coords);
                EdgeIndex(coords)
            })
            .collect()
    }

    /// `|E_{i1}|`.
    pub fn first_degree(&self, i1: u32) -> usize {
        i1.checked_sub(1)
            .and_then(|k| self.buckets.get(k as usize))
            .map_or(0, |b| b.tails.len())
    }

    pub(crate) fn tail_strides(&self) -> &[u64] {
        &self.tail_strides
    }

    /// Sorted tail keys of bucket `i1 - 1`.
    pub(crate) fn bucket_tails(&self, bucket: usize) -> &[u64] {
        &self.buckets[bucket].tails
    }

    #[inline]
    pub(crate) fn bucket_get(&self, bucket: usize, tail: u64) -> u64 {
        self.buckets[bucket].get(tail)
    }

    pub(crate) fn decode_tail_into(&self, tail: u64, out: &mut [u32]) {
        decode_tail(&self.tail_strides, &self.dims[1..], tail, out);
    }

    /// Ensures every coordinate of `xi` lies inside the graph's dimensions.
    pub fn check_polyad(&self, xi: &Polyad) -> Result<()> {
        if xi.d() != self.d() {
            return Err(PolyadsError::DimensionMismatch(format!(
                "polyad has D = {}, graph has D = {}",
                xi.d(),
                self.d()
            )));
        }
        for row in [xi.top(), xi.bottom()] {
            for (d, (&c, &n)) in row.iter().zip(&self.dims).enumerate() {
                if c == 0 || c > n {
                    return Err(PolyadsError::InvalidPolyad(format!(
                        "node {c} outside 1..={n} in dimension {}",
                        d + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

fn encode_tail(strides: &[u64], tail: &[u32]) -> u64 {
    tail.iter()
        .zip(strides)
        .map(|(&c, &s)| (c as u64 - 1) * s)
        .sum()
}

fn decode_tail(strides: &[u64], tail_dims: &[u32], mut key: u64, out: &mut [u32]) {
    for ((o, &s), _) in out.iter_mut().zip(strides).zip(tail_dims) {
        *o = (key / s) as u32 + 1;
        key %= s;
    }
}

/// A collection `𝒢` of fixed-effect levels; each level is a nonempty proper
/// subset of the axes `{0, .., D-1}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FixedEffectStructure {
    d: usize,
    levels: Vec<Vec<usize>>,
}

impl FixedEffectStructure {
    pub fn new(d: usize, levels: Vec<Vec<usize>>) -> Result<Self> {
        let mut normalized: Vec<Vec<usize>> = Vec::with_capacity(levels.len());
        for mut g in levels {
            g.sort_unstable();
            g.dedup();
            if let Some(&axis) = g.iter().find(|&&a| a >= d) {
                return Err(PolyadsError::DimensionMismatch(format!(
                    "fixed-effect level references axis {axis} but D = {d}"
                )));
            }
            if g.is_empty() || g.len() >= d {
                return Err(PolyadsError::InvalidParameter(format!(
                    "fixed-effect level {g:?} must be a nonempty proper subset of the {d} axes"
                )));
            }
            if normalized.contains(&g) {
                return Err(PolyadsError::InvalidParameter(format!(
                    "duplicate fixed-effect level {g:?}"
                )));
            }
            normalized.push(g);
        }
        Ok(FixedEffectStructure {
            d,
            levels: normalized,
        })
    }

    /// `𝒢^max`: the D subsets of cardinality D - 1.
    pub fn max_structure(d: usize) -> Self {
        let mut levels: Vec<Vec<usize>> = (0..d)
            .rev()
            .map(|skip| (0..d).filter(|&a| a != skip).collect())
            .collect();
        levels.sort();
        FixedEffectStructure { d, levels }
    }

    /// No fixed effects at all.
    pub fn none(d: usize) -> Self {
        FixedEffectStructure {
            d,
            levels: Vec::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }
}

/// Degrees `δ^g_ρ(y)` for every level `g` of a structure. Keys absent from a
/// level map have degree 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DegreeMap {
    levels: Vec<Vec<usize>>,
    degrees: Vec<BTreeMap<Coords, u64>>,
}

impl DegreeMap {
    pub fn levels(&self) -> &[Vec<usize>] {
        &self.levels
    }

    /// Degree of `rho` (the coordinates of the level's axes, in axis order).
    pub fn get(&self, level: usize, rho: &[u32]) -> u64 {
        self.degrees
            .get(level)
            .and_then(|m| m.get(rho))
            .copied()
            .unwrap_or(0)
    }

    /// Nonzero degrees of one level.
    pub fn level(&self, level: usize) -> impl Iterator<Item = (&[u32], u64)> {
        self.degrees[level].iter().map(|(k, &v)| (k.as_slice(), v))
    }
}

/// `δ(y)` computed by one pass over the positive edges.
pub fn degrees(graph: &SparseCountGraph, structure: &FixedEffectStructure) -> Result<DegreeMap> {
    if structure.d() != graph.d() {
        return Err(PolyadsError::DimensionMismatch(format!(
            "structure is for D = {}, graph has D = {}",
            structure.d(),
            graph.d()
        )));
    }
    let mut degrees = vec![BTreeMap::new(); structure.levels().len()];
    for (edge, count) in graph.edges() {
        for (g, map) in structure.levels().iter().zip(degrees.iter_mut()) {
            let rho: Coords = g.iter().map(|&a| edge[a]).collect();
            *map.entry(rho).or_insert(0) += count;
        }
    }
    Ok(DegreeMap {
        levels: structure.levels().to_vec(),
        degrees,
    })
}

/// A polyad: two rows `top = (j_1..j_D)` and `bottom = (j'_1..j'_D)` with
/// `j_d != j'_d` in every column.
///
/// Its `2^D` edges are addressed by a selector whose bit `d` picks the bottom
/// row in column `d`; the sign of selector `s` is `(-1)^popcount(s)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Polyad {
    top: EdgeIndex,
    bottom: EdgeIndex,
}

impl Polyad {
    pub fn new(top: impl Into<EdgeIndex>, bottom: impl Into<EdgeIndex>) -> Result<Self> {
        let (top, bottom) = (top.into(), bottom.into());
        if top.len() != bottom.len() {
            return Err(PolyadsError::InvalidPolyad(format!(
                "rows {top} and {bottom} differ in length"
            )));
        }
        if top.len() < 2 {
            return Err(PolyadsError::InvalidPolyad("polyads need D >= 2".into()));
        }
        if let Some(d) = top.iter().zip(bottom.iter()).position(|(a, b)| a == b) {
            return Err(PolyadsError::InvalidPolyad(format!(
                "rows {top} and {bottom} share node {} in column {}",
                top[d],
                d + 1
            )));
        }
        Ok(Polyad { top, bottom })
    }

    pub(crate) fn from_rows_unchecked(top: EdgeIndex, bottom: EdgeIndex) -> Self {
        Polyad { top, bottom }
    }

    pub fn top(&self) -> &EdgeIndex {
        &self.top
    }

    pub fn bottom(&self) -> &EdgeIndex {
        &self.bottom
    }

    pub fn d(&self) -> usize {
        self.top.len()
    }

    pub fn num_edges(&self) -> usize {
        1 << self.d()
    }

    /// Sign attached to an edge selector.
    #[inline]
    pub fn selector_sign(selector: usize) -> i8 {
        if selector.count_ones() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    pub fn edge(&self, selector: usize) -> EdgeIndex {
        EdgeIndex(
            (0..self.d())
                .map(|d| {
                    if selector >> d & 1 == 1 {
                        self.bottom[d]
                    } else {
                        self.top[d]
                    }
                })
                .collect(),
        )
    }

    /// All `2^D` edges with their signs, in selector order.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeIndex, i8)> + '_ {
        (0..self.num_edges()).map(move |s| (self.edge(s), Self::selector_sign(s)))
    }

    /// `s_ξ(i) = Π_d (1{i_d = j_d} - 1{i_d = j'_d})`.
    pub fn sign(&self, i: &[u32]) -> i8 {
        if i.len() != self.d() {
            return 0;
        }
        let mut s = 1i8;
        for ((&c, &a), &b) in i.iter().zip(self.top.iter()).zip(self.bottom.iter()) {
            s *= (c == a) as i8 - (c == b) as i8;
            if s == 0 {
                return 0;
            }
        }
        s
    }

    pub fn contains(&self, i: &[u32]) -> bool {
        self.sign(i) != 0
    }
}

impl fmt::Display for Polyad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{} / {}]", self.top, self.bottom)
    }
}

/// Sign of `i` relative to `xi`, in `{-1, 0, +1}`.
pub fn sign(xi: &Polyad, i: &[u32]) -> i8 {
    xi.sign(i)
}

/// `(m_ξ(y), M_ξ(y))`: minimum count over the `+1` edges and over the `-1`
/// edges. The orbit has `m + M + 1` elements.
pub fn orbit_bounds(graph: &SparseCountGraph, xi: &Polyad) -> (u64, u64) {
    let mut plus = u64::MAX;
    let mut minus = u64::MAX;
    for (edge, s) in xi.edges() {
        let y = graph.count(&edge);
        if s > 0 {
            plus = plus.min(y);
        } else {
            minus = minus.min(y);
        }
    }
    (plus, minus)
}

/// `T_ξ^r(y) = y + r·s_ξ`, defined for `-m_ξ <= r <= M_ξ`.
pub fn apply_transform(graph: &SparseCountGraph, xi: &Polyad, r: i64) -> Result<SparseCountGraph> {
    graph.check_polyad(xi)?;
    let (m, big_m) = orbit_bounds(graph, xi);
    let (min, max) = (-(m as i64), big_m as i64);
    if r < min || r > max {
        return Err(PolyadsError::NegativeCount { r, min, max });
    }
    if r == 0 {
        return Ok(graph.clone());
    }
    let mut edges: BTreeMap<EdgeIndex, u64> = graph.edges().collect();
    for (edge, s) in xi.edges() {
        let y = edges.get(&edge).copied().unwrap_or(0) as i64 + r * s as i64;
        if y == 0 {
            edges.remove(&edge);
        } else {
            edges.insert(edge, y as u64);
        }
    }
    SparseCountGraph::with_mode(graph.dims(), edges, graph.mode())
}

/// Generalized difference-in-differences feature `X̃_ξ = Σ_i s_ξ(i) X_i`.
pub fn did_feature<C: CovariateProvider + ?Sized>(xi: &Polyad, cov: &C) -> Result<Vec<f64>> {
    let p = cov.dim();
    let mut acc = vec![0.0; p];
    let mut buf = vec![0.0; p];
    let mut missing = Vec::new();
    for (edge, s) in xi.edges() {
        if !cov.fill(&edge, &mut buf) {
            missing.push(edge);
            continue;
        }
        let s = s as f64;
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += s * x;
        }
    }
    if !missing.is_empty() {
        missing.sort();
        return Err(PolyadsError::missing_covariates(missing));
    }
    Ok(acc)
}
