//! Canonical active-polyad enumeration and the edge → polyad incidence index.
//!
//! Every active polyad has exactly one permutation in canonical form:
//! `i_d < i'_d` for `d >= 2`, `m > 0`, and `M = 0 or i_1 < i'_1`. Those
//! representatives are found by pairing positive edges: the top row's tail
//! comes from `E_{i1}` and the bottom row's tail from `E_{i1'}` (D even) or
//! `E_{i1}` (D odd).

use std::collections::BTreeSet;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::covariates::CovariateProvider;
use crate::error::{PolyadsError, Result};
use crate::graph::{did_feature, orbit_bounds, Coords, EdgeIndex, Polyad, SparseCountGraph};

/// Default cap on the number of canonical records.
pub const DEFAULT_MAX_RECORDS: usize = 100_000_000;

/// An active polyad in canonical form with its cached edge counts and DiD
/// feature.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivePolyadRecord {
    pub polyad: Polyad,
    /// `m_ξ`: minimum count over the `+1` edges.
    pub m_plus: u64,
    /// `M_ξ`: minimum count over the `-1` edges.
    pub m_minus: u64,
    /// Counts of the `2^D` edges, indexed by edge selector.
    pub edge_counts: Vec<u64>,
    /// `X̃_ξ`.
    pub did: Vec<f64>,
}

impl ActivePolyadRecord {
    /// Builds a record for any polyad (canonical or not) straight from the
    /// graph and covariates.
    pub fn from_polyad<C: CovariateProvider + ?Sized>(
        graph: &SparseCountGraph,
        polyad: Polyad,
        cov: &C,
    ) -> Result<Self> {
        graph.check_polyad(&polyad)?;
        let (m_plus, m_minus) = orbit_bounds(graph, &polyad);
        let edge_counts = (0..polyad.num_edges())
            .map(|s| graph.count(&polyad.edge(s)))
            .collect();
        let did = did_feature(&polyad, cov)?;
        Ok(ActivePolyadRecord {
            polyad,
            m_plus,
            m_minus,
            edge_counts,
            did,
        })
    }

    pub fn d(&self) -> usize {
        self.polyad.d()
    }

    pub fn orbit_size(&self) -> u64 {
        self.m_plus + self.m_minus + 1
    }

    pub fn is_active(&self) -> bool {
        self.orbit_size() >= 2
    }

    pub fn is_canonical(&self) -> bool {
        let (top, bottom) = (self.polyad.top(), self.polyad.bottom());
        self.m_plus > 0
            && (1..self.d()).all(|d| top[d] < bottom[d])
            && (self.m_minus == 0 || top[0] < bottom[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

/// Swaps the two rows in every column whose bit is set in `flip_mask`.
pub fn permute(xi: &Polyad, flip_mask: usize) -> Polyad {
    let mut top: Coords = xi.top().coords().into();
    let mut bottom: Coords = xi.bottom().coords().into();
    for d in 0..xi.d() {
        if flip_mask >> d & 1 == 1 {
            std::mem::swap(&mut top[d], &mut bottom[d]);
        }
    }
    Polyad::from_rows_unchecked(EdgeIndex::new(&top), EdgeIndex::new(&bottom))
}

/// The `2^D` column-flip permutations of `xi`, indexed by flip mask.
pub fn permutations(xi: &Polyad) -> Vec<(Polyad, Parity)> {
    (0..xi.num_edges())
        .map(|mask| {
            let parity = if mask.count_ones() % 2 == 0 {
                Parity::Even
            } else {
                Parity::Odd
            };
            (permute(xi, mask), parity)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct EnumerationConfig {
    /// Abort with a resource-guard error above this many canonical records.
    pub max_records: usize,
    /// Spread the outer `i1` loop over the rayon pool.
    pub parallel: bool,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        EnumerationConfig {
            max_records: DEFAULT_MAX_RECORDS,
            parallel: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Enumeration {
    /// Canonical records sorted by `(top, bottom)`.
    pub records: Vec<ActivePolyadRecord>,
    /// Number of innermost-loop executions (candidate tail pairs visited).
    pub loop_count: u64,
}

/// `Ξ_a★` with default settings.
pub fn enumerate_active<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    cov: &C,
) -> Result<Vec<ActivePolyadRecord>> {
    Ok(enumerate_active_with(graph, cov, &EnumerationConfig::default())?.records)
}

struct Found {
    top: EdgeIndex,
    bottom: EdgeIndex,
    m_plus: u64,
    m_minus: u64,
    edge_counts: Vec<u64>,
}

struct ScanOutput {
    found: Vec<Found>,
    loops: u64,
    overflow: bool,
}

pub fn enumerate_active_with<C: CovariateProvider + ?Sized>(
    graph: &SparseCountGraph,
    cov: &C,
    config: &EnumerationConfig,
) -> Result<Enumeration> {
    let d = graph.d();
    if d > 24 {
        return Err(PolyadsError::ResourceGuard(format!(
            "D = {d} gives 2^D edges per polyad; at most 24 dimensions are supported"
        )));
    }
    let n1 = graph.dims()[0] as usize;
    let t = d - 1;
    let decoded: Vec<Vec<u32>> = (0..n1)
        .map(|b| {
            let tails = graph.bucket_tails(b);
            let mut flat = vec![0u32; tails.len() * t];
            for (k, &tail) in tails.iter().enumerate() {
                graph.decode_tail_into(tail, &mut flat[k * t..(k + 1) * t]);
            }
            flat
        })
        .collect();

    let scan = |i1: usize| scan_first_coordinate(graph, &decoded, i1, config.max_records);
    let outputs: Vec<ScanOutput> = if config.parallel {
        (0..n1).into_par_iter().map(scan).collect()
    } else {
        (0..n1).map(scan).collect()
    };

    let loop_count = outputs.iter().map(|o| o.loops).sum();
    let total: usize = outputs.iter().map(|o| o.found.len()).sum();
    if total > config.max_records || outputs.iter().any(|o| o.overflow) {
        return Err(PolyadsError::ResourceGuard(format!(
            "more than {} canonical active polyads; the graph is too dense for pairwise enumeration",
            config.max_records
        )));
    }
    let found: Vec<Found> = outputs.into_iter().flat_map(|o| o.found).collect();

    // Covariates are read for every edge of every record; the whole set of
    // unavailable edges is reported at once.
    let featurize = |f: Found| -> std::result::Result<ActivePolyadRecord, Vec<EdgeIndex>> {
        let polyad = Polyad::from_rows_unchecked(f.top, f.bottom);
        match did_feature(&polyad, cov) {
            Ok(did) => Ok(ActivePolyadRecord {
                polyad,
                m_plus: f.m_plus,
                m_minus: f.m_minus,
                edge_counts: f.edge_counts,
                did,
            }),
            Err(_) => {
                let mut buf = vec![0.0; cov.dim()];
                Err(polyad
                    .edges()
                    .filter(|(e, _)| !cov.fill(e, &mut buf))
                    .map(|(e, _)| e)
                    .collect())
            }
        }
    };
    let results: Vec<_> = if config.parallel {
        found.into_par_iter().map(featurize).collect()
    } else {
        found.into_iter().map(featurize).collect()
    };

    let mut records = Vec::with_capacity(results.len());
    let mut missing = BTreeSet::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(edges) => missing.extend(edges),
        }
    }
    if !missing.is_empty() {
        return Err(PolyadsError::missing_covariates(
            missing.into_iter().collect(),
        ));
    }
    records.sort_unstable_by(|a, b| a.polyad.cmp(&b.polyad));
    Ok(Enumeration {
        records,
        loop_count,
    })
}

fn scan_first_coordinate(
    graph: &SparseCountGraph,
    decoded: &[Vec<u32>],
    i1: usize,
    cap: usize,
) -> ScanOutput {
    let d = graph.d();
    let t = d - 1;
    let n1 = decoded.len();
    let strides = graph.tail_strides();
    let n_sel = 1usize << d;
    let n_tail_sel = 1usize << t;
    let mut keys = vec![0u64; n_tail_sel];
    let mut counts = vec![0u64; n_sel];
    let mut out = ScanOutput {
        found: Vec::new(),
        loops: 0,
        overflow: false,
    };

    let a_tails = graph.bucket_tails(i1);
    let a_coords = &decoded[i1];
    for i1p in (0..n1).filter(|&k| k != i1) {
        let other = if d % 2 == 0 { i1p } else { i1 };
        let b_tails = graph.bucket_tails(other);
        let b_coords = &decoded[other];
        for (ka, &a_tail) in a_tails.iter().enumerate() {
            let a = &a_coords[ka * t..(ka + 1) * t];
            for (kb, &b_tail) in b_tails.iter().enumerate() {
                out.loops += 1;
                let b = &b_coords[kb * t..(kb + 1) * t];
                if !a.iter().zip(b).all(|(x, y)| x < y) {
                    continue;
                }
                // Tail keys for every mix of a/b columns.
                keys[0] = a_tail;
                for ts in 1..n_tail_sel {
                    let k = ts.trailing_zeros() as usize;
                    let delta_b = (b[k] as u64 - 1) * strides[k];
                    let delta_a = (a[k] as u64 - 1) * strides[k];
                    keys[ts] = keys[ts & (ts - 1)]
                        .wrapping_add(delta_b)
                        .wrapping_sub(delta_a);
                }
                debug_assert_eq!(keys[n_tail_sel - 1], b_tail);

                let lookup = |s: usize| {
                    let bucket = if s & 1 == 1 { i1p } else { i1 };
                    graph.bucket_get(bucket, keys[s >> 1])
                };
                let mut m_plus = u64::MAX;
                let mut alive = true;
                for s in (0..n_sel).filter(|s| s.count_ones() % 2 == 0) {
                    let y = lookup(s);
                    counts[s] = y;
                    if y == 0 {
                        alive = false;
                        break;
                    }
                    m_plus = m_plus.min(y);
                }
                if !alive {
                    continue;
                }
                let mut m_minus = u64::MAX;
                for s in (0..n_sel).filter(|s| s.count_ones() % 2 == 1) {
                    let y = lookup(s);
                    counts[s] = y;
                    m_minus = m_minus.min(y);
                }
                if m_minus > 0 && i1 > i1p {
                    continue;
                }
                if out.found.len() >= cap {
                    out.overflow = true;
                    return out;
                }
                let mut top: Coords = Coords::with_capacity(d);
                top.push(i1 as u32 + 1);
                top.extend_from_slice(a);
                let mut bottom: Coords = Coords::with_capacity(d);
                bottom.push(i1p as u32 + 1);
                bottom.extend_from_slice(b);
                out.found.push(Found {
                    top: EdgeIndex::new(&top),
                    bottom: EdgeIndex::new(&bottom),
                    m_plus,
                    m_minus,
                    edge_counts: counts.clone(),
                });
            }
        }
    }
    out
}

/// One `(i, i')` representation of an active polyad: `partner` is `i'`, and
/// `record` points at the canonical record it is a permutation of.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IncidenceEntry {
    pub partner: EdgeIndex,
    pub record: usize,
    pub parity: Parity,
}

/// Map from every edge of `ℐ_a` to the permutations `(i, i')` of active
/// polyads that have `i` as their first row.
#[derive(Clone, Debug)]
pub struct PolyadIncidence {
    keys: Vec<EdgeIndex>,
    entries: Vec<Vec<IncidenceEntry>>,
    total: usize,
}

impl PolyadIncidence {
    /// `|ℐ_a|`.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `N̂_a = Σ_i |partners(i)| = 2^D |Ξ_a★|`.
    pub fn total_entries(&self) -> usize {
        self.total
    }

    /// Sorted keys.
    pub fn keys(&self) -> &[EdgeIndex] {
        &self.keys
    }

    pub fn partners(&self, key: &EdgeIndex) -> Option<&[IncidenceEntry]> {
        self.keys
            .binary_search(key)
            .ok()
            .map(|k| self.entries[k].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EdgeIndex, &[IncidenceEntry])> {
        self.keys
            .iter()
            .zip(self.entries.iter().map(|e| e.as_slice()))
    }

    /// `Σ_i |partners(i)|²`, the work needed for the pairwise meat matrix.
    pub fn pair_work(&self) -> u128 {
        self.entries
            .iter()
            .map(|e| (e.len() as u128) * (e.len() as u128))
            .sum()
    }
}

pub fn build_incidence(records: &[ActivePolyadRecord]) -> PolyadIncidence {
    let mut map: FxHashMap<EdgeIndex, Vec<IncidenceEntry>> = FxHashMap::default();
    let mut total = 0;
    for (idx, rec) in records.iter().enumerate() {
        for (perm, parity) in permutations(&rec.polyad) {
            map.entry(perm.top().clone())
                .or_default()
                .push(IncidenceEntry {
                    partner: perm.bottom().clone(),
                    record: idx,
                    parity,
                });
            total += 1;
        }
    }
    let mut pairs: Vec<_> = map.into_iter().collect();
    pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let (keys, entries) = pairs.into_iter().unzip();
    PolyadIncidence {
        keys,
        entries,
        total,
    }
}
