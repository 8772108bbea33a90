//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line per
//! check and fails if any of its checks fail. Tests are serialized so the
//! timing checks run on an otherwise idle machine.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use common::{cells, instance, random_polyad, rng};
use nalgebra::{DMatrix, DVector};
use polyads::bench::{
    long_table, run_bench, summary_table, BenchConfig, BenchDesign, BenchReport, Density, Estimator,
};
use polyads::enumeration::{enumerate_active_with, EnumerationConfig};
use polyads::estimator::{evaluate_moments, fit, loss_gradient_hessian, polyad_loss, FitConfig};
use polyads::meta::{meta_analysis, TauMethod};
use polyads::oracle::{
    brute_active_polyads, brute_omega, brute_pair_covariance, brute_terms, shared_edges,
};
use polyads::simulate::{
    calibrate_intercept, generate_replication, sparse_regime_density, stream_rng, Noise,
    ThreeWayDesign,
};
use polyads::variance::{covariance, VarianceConfig};
use polyads::{
    apply_transform, build_incidence, degrees, enumerate_active, orbit_bounds,
    FixedEffectStructure, Polyad, SparseCountGraph,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

struct Check {
    label: String,
    pass: bool,
    detail: String,
}

fn check(label: impl Into<String>, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        label: label.into(),
        pass,
        detail: detail.into(),
    }
}

/// Prints one line per check and panics if any failed.
fn conclude(checks: Vec<Check>) {
    for c in &checks {
        println!(
            "criterion {}: {} ({})",
            c.label,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.label.as_str())
        .collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

fn rel_matrix_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / max_abs(a).max(max_abs(b)).max(f64::MIN_POSITIVE)
}

#[test]
fn criterion_01_orbit_moments_match_brute_force() {
    let _g = serial();
    let start = Instant::now();
    let (mut worst_loss, mut worst_mean, mut worst_var) = (0.0f64, 0.0f64, 0.0f64);
    let mut compared = 0usize;
    for seed in 0..1000u64 {
        let mut r = rng(10_000 + seed);
        let d = 2 + (seed % 2) as usize;
        let p = r.random_range(1..=3);
        let (g, cov) = instance(&mut r, d, 4, 6, p);
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        for rec in enumerate_active(&g, &cov).unwrap() {
            let t = brute_terms(&g, &rec.polyad, &cov, &beta).unwrap();
            let mp = evaluate_moments(&rec, &beta, u64::MAX).unwrap();
            let loss = polyad_loss(&rec, &beta).unwrap();
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
            worst_loss = worst_loss.max(rel(loss, t.loss));
            worst_mean = worst_mean.max(rel(mp.mu, t.mean));
            worst_var = worst_var.max(rel(mp.sigma2, t.variance));
            compared += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    conclude(vec![
        check(
            "1 loss/mean/variance",
            worst_loss <= 1e-12 && worst_mean <= 1e-12 && worst_var <= 1e-12,
            format!("{compared} polyads; max rel err loss {worst_loss:.2e}, mean {worst_mean:.2e}, variance {worst_var:.2e}"),
        ),
        check("1 runtime", secs < 30.0, format!("{secs:.2} s < 30 s")),
    ]);
}

#[test]
fn criterion_02_enumeration_equals_brute_force() {
    let _g = serial();
    let start = Instant::now();
    let mut mismatches = 0;
    let mut total = 0;
    for seed in 0..500u64 {
        let mut r = rng(20_000 + seed);
        let d = 2 + (seed % 2) as usize;
        let (g, cov) = instance(&mut r, d, 4, 3, 1);
        let fast: BTreeSet<Polyad> = enumerate_active(&g, &cov)
            .unwrap()
            .into_iter()
            .map(|r| r.polyad)
            .collect();
        let brute = brute_active_polyads(&g).unwrap();
        total += brute.len();
        if fast != brute {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    conclude(vec![
        check(
            "2 exact set equality",
            mismatches == 0,
            format!("{mismatches} of 500 graphs differ; {total} canonical polyads in total"),
        ),
        check("2 runtime", secs < 60.0, format!("{secs:.2} s < 60 s")),
    ]);
}

#[test]
fn criterion_03_derivatives_match_finite_differences() {
    let _g = serial();
    let cfg = FitConfig::default();
    let (mut worst_g, mut worst_h) = (0.0f64, 0.0f64);
    let mut n = 0;
    let mut seed = 30_000u64;
    while n < 100 {
        seed += 1;
        let mut r = rng(seed);
        let d = 2 + (seed % 2) as usize;
        let p = r.random_range(1..=3);
        let (g, cov) = instance(&mut r, d, 4, 6, p);
        let recs = enumerate_active(&g, &cov).unwrap();
        if recs.is_empty() {
            continue;
        }
        n += 1;
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, grad, hess) = loss_gradient_hessian(&recs, p, &beta, &cfg).unwrap();
        let h = 1e-5;
        let shifted = |k: usize, s: f64| {
            let mut b = beta.clone();
            b[k] += s;
            loss_gradient_hessian(&recs, p, &b, &cfg).unwrap()
        };
        let mut fd_grad = DVector::zeros(p);
        let mut fd_hess = DMatrix::zeros(p, p);
        for k in 0..p {
            let (lp, gp, _) = shifted(k, h);
            let (lm, gm, _) = shifted(k, -h);
            fd_grad[k] = (lp - lm) / (2.0 * h);
            for j in 0..p {
                fd_hess[(j, k)] = (gp[j] - gm[j]) / (2.0 * h);
            }
        }
        let eg = (&fd_grad - &grad).amax() / grad.amax().max(1.0);
        let eh = (&fd_hess - &hess).amax() / hess.amax().max(1.0);
        worst_g = worst_g.max(eg);
        worst_h = worst_h.max(eh);
    }
    conclude(vec![
        check(
            "3 gradient",
            worst_g < 1e-5,
            format!("max rel err {worst_g:.2e} < 1e-5 over 100 instances"),
        ),
        check(
            "3 Hessian",
            worst_h < 1e-4,
            format!("max rel err {worst_h:.2e} < 1e-4 over 100 instances"),
        ),
    ]);
}

/// Every all-dims-2 graph with counts in `0..=max`, as count vectors over
/// the cells in row-major order.
fn tiny_graphs(d: usize, max: u64) -> Vec<Vec<u64>> {
    let n = 1u32 << d;
    let base = max + 1;
    (0..base.pow(n))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let y = code % base;
                    code /= base;
                    y
                })
                .collect()
        })
        .collect()
}

fn to_graph(grid: &[Vec<u32>], counts: &[u64]) -> SparseCountGraph {
    let edges = grid
        .iter()
        .zip(counts)
        .filter(|(_, &y)| y > 0)
        .map(|(c, &y)| (c.clone(), y));
    SparseCountGraph::new(&vec![2u32; grid[0].len()], edges).unwrap()
}

fn to_counts(grid: &[Vec<u32>], g: &SparseCountGraph) -> Vec<u64> {
    grid.iter().map(|c| g.count(c)).collect()
}

#[test]
fn criterion_04_degree_preservation_and_converse() {
    let _g = serial();
    let mut violations = 0;
    for seed in 0..10_000u64 {
        let mut r = rng(40_000 + seed);
        let d = r.random_range(2..=4);
        let (g, _) = instance(&mut r, d, 4, 5, 1);
        let xi = random_polyad(&mut r, g.dims());
        let (m, big_m) = orbit_bounds(&g, &xi);
        let step = r.random_range(-(m as i64)..=big_m as i64);
        let moved = apply_transform(&g, &xi, step).unwrap();
        let st = FixedEffectStructure::max_structure(d);
        if degrees(&moved, &st).unwrap() != degrees(&g, &st).unwrap() {
            violations += 1;
        }
    }

    // Converse: on all-dims-2 grids there is one polyad up to relabeling,
    // so each degree class must be exactly the orbit of any of its members,
    // cut to the same count range.
    let mut converse = Vec::new();
    for d in [2usize, 3] {
        let st = FixedEffectStructure::max_structure(d);
        let grid = cells(&vec![2u32; d]);
        let xi = Polyad::new(vec![1u32; d], vec![2u32; d]).unwrap();
        let mut classes: BTreeMap<String, BTreeSet<Vec<u64>>> = BTreeMap::new();
        let graphs = tiny_graphs(d, 3);
        let n_graphs = graphs.len();
        for counts in graphs {
            let g = to_graph(&grid, &counts);
            classes
                .entry(format!("{:?}", degrees(&g, &st).unwrap()))
                .or_default()
                .insert(counts);
        }
        let mut mismatched = 0usize;
        for class in classes.values() {
            let first = class.iter().next().unwrap();
            let g = to_graph(&grid, first);
            let (m, big_m) = orbit_bounds(&g, &xi);
            let orbit: BTreeSet<Vec<u64>> = (-(m as i64)..=big_m as i64)
                .map(|r| to_counts(&grid, &apply_transform(&g, &xi, r).unwrap()))
                .filter(|c| c.iter().all(|&y| y <= 3))
                .collect();
            if &orbit != class {
                mismatched += 1;
            }
        }
        converse.push(check(
            format!("4 converse D={d}"),
            mismatched == 0,
            format!(
                "{n_graphs} graphs in {} degree classes, {mismatched} classes not a single orbit",
                classes.len()
            ),
        ));
    }
    let mut checks = vec![check(
        "4 degree preservation",
        violations == 0,
        format!("{violations} violations in 10000 random (y, polyad, r)"),
    )];
    checks.extend(converse);
    conclude(checks);
}

#[test]
fn criterion_05_variance_formulas() {
    let _g = serial();
    let (mut worst_omega, mut worst_prime) = (0.0f64, 0.0f64);
    let mut literal = (0usize, 0usize, 0.0f64);
    let mut corrected = (0usize, 0.0f64);
    let mut seed = 50_000u64;
    let mut n = 0;
    while n < 200 {
        seed += 1;
        let mut r = rng(seed);
        let d = 2 + (seed % 2) as usize;
        let p = r.random_range(1..=2);
        let (g, cov) = instance(&mut r, d, 3 + (seed % 2) as u32, 3, p);
        let recs = enumerate_active(&g, &cov).unwrap();
        if recs.is_empty() {
            continue;
        }
        let beta: Vec<f64> = (0..p).map(|_| r.random_range(-0.5..0.5)).collect();
        let cfg = VarianceConfig {
            max_pair_work: u128::MAX,
            ..VarianceConfig::default()
        };
        let inc = build_incidence(&recs);
        let Ok(c) = covariance(&recs, &inc, &beta, &cfg) else {
            continue;
        };
        n += 1;
        let grads = polyads::variance::record_gradients(&recs, &beta, cfg.truncation_l).unwrap();
        let polyads: Vec<Polyad> = recs.iter().map(|r| r.polyad.clone()).collect();
        worst_omega = worst_omega.max(rel_matrix_error(
            &c.omega_hat,
            &brute_omega(&polyads, &grads, p).unwrap(),
        ));
        let omp = c.omega_prime_hat.as_ref().unwrap();
        worst_prime = worst_prime.max(rel_matrix_error(
            omp,
            &brute_pair_covariance(&polyads, &grads, p).unwrap(),
        ));

        let isolated = (0..recs.len()).all(|a| {
            (a + 1..recs.len()).all(|b| shared_edges(&recs[a].polyad, &recs[b].polyad) < 2)
        });
        if isolated {
            let err = rel_matrix_error(&c.sigma_hat, c.sigma_prime_hat.as_ref().unwrap());
            literal.0 += 1;
            if err <= 1e-10 {
                literal.1 += 1;
            }
            literal.2 = literal.2.max(err);
            let factor = (1u64 << (3 * d)) as f64 - (1u64 << (2 * d)) as f64;
            let mut within = DMatrix::zeros(p, p);
            for gr in &grads {
                let v = DVector::from_column_slice(gr);
                within += &v * v.transpose();
            }
            let diff = &c.omega_hat - omp;
            corrected.0 += 1;
            corrected.1 = corrected.1.max(rel_matrix_error(&diff, &(within * factor)));
        }
    }
    conclude(vec![
        check(
            "5 edge-score meat vs pair sums",
            worst_omega <= 1e-10,
            format!("max rel err {worst_omega:.2e} over 200 instances"),
        ),
        check(
            "5 shared-edge meat vs pair sums",
            worst_prime <= 1e-10,
            format!("max rel err {worst_prime:.2e} over 200 instances"),
        ),
        check(
            "5 equal sandwiches without multi-edge sharing",
            literal.0 > 0 && literal.1 == literal.0,
            format!(
                "{} of {} qualifying instances agree to 1e-10; max rel err {:.2e}",
                literal.1, literal.0, literal.2
            ),
        ),
        check(
            "5 within-class difference identity",
            corrected.0 > 0 && corrected.1 <= 1e-10,
            format!(
                "difference equals (2^3D - 2^2D) sum g g' on {} instances; max rel err {:.2e}",
                corrected.0, corrected.1
            ),
        ),
    ]);
}

const MC_REPLICATIONS: u64 = 200;
const MC_SEED: u64 = 1;

struct McRun {
    report: BenchReport,
    seconds: f64,
}

fn mc_design(noise: Noise) -> BenchDesign {
    BenchDesign {
        label: match noise {
            Noise::Poisson => "poisson".into(),
            Noise::NegBin { .. } => "negbin".into(),
        },
        design: ThreeWayDesign {
            noise,
            ..ThreeWayDesign::new(30, 30)
        },
        density: Density::Target(0.1),
    }
}

fn run_mc(noise: Noise, estimators: Vec<Estimator>) -> McRun {
    let mut cfg = BenchConfig::new(vec![mc_design(noise)], MC_REPLICATIONS);
    cfg.seed = MC_SEED;
    cfg.estimators = estimators;
    let start = Instant::now();
    let report = run_bench(&cfg).unwrap();
    McRun {
        report,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn poisson_mc() -> &'static McRun {
    static RUN: OnceLock<McRun> = OnceLock::new();
    RUN.get_or_init(|| run_mc(Noise::Poisson, vec![Estimator::Polyads, Estimator::Ppml]))
}

fn polyads_checks(n: &str, run: &McRun) -> Vec<Check> {
    let row = run
        .report
        .summary
        .iter()
        .find(|r| r.estimator == Estimator::Polyads)
        .unwrap();
    let se_mean = row.sd / (row.succeeded as f64).sqrt();
    vec![
        check(
            format!("{n} polyads bias"),
            row.mean_error.abs() <= 3.0 * se_mean,
            format!(
                "|mean err| {:.4} <= 3 x SE {:.4}",
                row.mean_error.abs(),
                se_mean
            ),
        ),
        check(
            format!("{n} polyads coverage"),
            (0.90..=0.98).contains(&row.coverage),
            format!(
                "{:.3} in [0.90, 0.98] over {} replications",
                row.coverage, row.succeeded
            ),
        ),
    ]
}

#[test]
fn criterion_06_poisson_monte_carlo() {
    let _g = serial();
    let run = poisson_mc();
    let mut checks = polyads_checks("6", run);
    let get = |e| {
        run.report
            .summary
            .iter()
            .find(|r| r.estimator == e)
            .unwrap()
    };
    let (ours, ppml) = (get(Estimator::Polyads), get(Estimator::Ppml));
    checks.push(check(
        "6 PPML bias ordering",
        ppml.mean_error > 0.0 && ppml.mean_error > ours.mean_error.abs(),
        format!(
            "PPML mean err {:.4} > 0 and > polyads {:.4}",
            ppml.mean_error,
            ours.mean_error.abs()
        ),
    ));
    checks.push(check(
        "6 runtime",
        run.seconds < 15.0 * 60.0,
        format!(
            "{:.1} s < 900 s on {} worker(s)",
            run.seconds,
            rayon::current_num_threads()
        ),
    ));
    conclude(checks);
}

#[test]
fn criterion_07_negbin_monte_carlo() {
    let _g = serial();
    let run = run_mc(Noise::NegBin { rate: 0.1 }, vec![Estimator::Polyads]);
    let mut checks = polyads_checks("7", &run);
    checks.push(check(
        "7 runtime",
        run.seconds < 20.0 * 60.0,
        format!(
            "{:.1} s < 1200 s on {} worker(s)",
            run.seconds,
            rayon::current_num_threads()
        ),
    ));
    conclude(checks);
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_08_sparse_regime_scaling() {
    let _g = serial();
    const REPS: u64 = 4;
    const TIMING_RUNS: usize = 3;
    let mut points = Vec::new();
    let mut worst_c = 0.0f64;
    let mut summary = Vec::new();
    for n in [20_000usize, 80_000, 320_000] {
        let side = ((n / 5) as f64).sqrt().round() as u32;
        let mut design = ThreeWayDesign::new(side, side);
        design.seed = 8_000 + n as u64;
        design.intercept_c =
            calibrate_intercept(&design, sparse_regime_density(design.n_cells())).unwrap();
        let mut edges_sum = 0.0;
        for rep in 0..REPS {
            let ds = generate_replication(&design, rep).unwrap();
            let e = ds.graph.num_edges() as f64;
            edges_sum += e;
            let mut best = Duration::MAX;
            let mut loops = 0;
            for _ in 0..TIMING_RUNS {
                let t = Instant::now();
                let en =
                    enumerate_active_with(&ds.graph, &ds.covariates, &EnumerationConfig::default())
                        .unwrap();
                let _ = fit(&en.records, 1, &FitConfig::default(), &[0.0]);
                best = best.min(t.elapsed());
                loops = en.loop_count;
            }
            worst_c = worst_c.max(loops as f64 / (e * e));
            points.push((e.ln(), best.as_secs_f64().ln()));
        }
        summary.push(format!("n={n}: |E|~{:.0}", edges_sum / REPS as f64));
    }
    let slope = least_squares_slope(&points);
    conclude(vec![
        check(
            "8 time slope",
            (1.5..=2.3).contains(&slope),
            format!(
                "log-log slope {slope:.3} in [1.5, 2.3]; {}",
                summary.join(", ")
            ),
        ),
        check(
            "8 loop counter",
            worst_c < 3.0,
            format!("max loops/|E|^2 = {worst_c:.3} < 3"),
        ),
    ]);
}

#[test]
fn criterion_09_newton_behavior() {
    let _g = serial();
    let run = poisson_mc();
    let ours: Vec<_> = run
        .report
        .outcomes
        .iter()
        .filter(|o| o.estimator == Estimator::Polyads)
        .collect();
    let mut steps: Vec<usize> = ours
        .iter()
        .filter(|o| o.converged)
        .map(|o| o.iterations)
        .collect();
    steps.sort_unstable();
    let median = if steps.is_empty() {
        usize::MAX
    } else {
        steps[steps.len() / 2]
    };
    let rate = steps.len() as f64 / ours.len() as f64;
    conclude(vec![
        check(
            "9 median Newton steps",
            median <= 10,
            format!("median {median} <= 10"),
        ),
        check(
            "9 convergence rate",
            rate >= 0.99,
            format!("{:.3} >= 0.99 over {} replications", rate, ours.len()),
        ),
    ]);
}

fn bench_tables(workers: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap();
    let designs = vec![
        mc_design(Noise::Poisson),
        mc_design(Noise::NegBin { rate: 0.1 }),
    ];
    let mut cfg = BenchConfig::new(designs, 12);
    cfg.seed = 77;
    cfg.deterministic = true;
    pool.install(|| {
        let r = run_bench(&cfg).unwrap();
        format!("{}{}", summary_table(&r, &cfg), long_table(&r, &cfg))
    })
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let a = bench_tables(1);
    let b = bench_tables(1);
    let c = bench_tables(4);
    conclude(vec![
        check(
            "10 repeated run",
            a == b,
            format!("{} bytes, identical: {}", a.len(), a == b),
        ),
        check(
            "10 worker counts 1 and 4",
            a == c,
            format!("identical: {}", a == c),
        ),
    ]);
}

/// Iterated DerSimonian–Laird: `τ² ← max(0, τ² + (Q(τ²) − (k − 1)) / (S1 − S2/S1))`.
fn iterated_dl(studies: &[(f64, f64)]) -> (f64, f64) {
    let k = studies.len() as f64;
    let mut tau2 = 0.0f64;
    for _ in 0..100_000 {
        let w: Vec<f64> = studies.iter().map(|(_, v)| 1.0 / (v + tau2)).collect();
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        let mean = studies.iter().zip(&w).map(|((y, _), w)| w * y).sum::<f64>() / s1;
        let q: f64 = studies
            .iter()
            .zip(&w)
            .map(|((y, _), w)| w * (y - mean).powi(2))
            .sum();
        let next = (tau2 + (q - (k - 1.0)) / (s1 - s2 / s1)).max(0.0);
        if (next - tau2).abs() <= 1e-15 * next.max(1.0) {
            tau2 = next;
            break;
        }
        tau2 = next;
    }
    let w: Vec<f64> = studies.iter().map(|(_, v)| 1.0 / (v + tau2)).collect();
    let mean = studies.iter().zip(&w).map(|((y, _), w)| w * y).sum::<f64>() / w.iter().sum::<f64>();
    (mean, tau2)
}

#[test]
fn criterion_11_meta_analysis() {
    let _g = serial();
    let mut worst = 0.0f64;
    let mut heterogeneous = 0;
    for seed in 0..50u64 {
        let mut r = stream_rng(110_000 + seed, 0);
        let k = r.random_range(3..=12);
        let tau = 0.5;
        let studies: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                let v = r.random_range(0.01..0.2);
                let y = Normal::new(1.0, (v + tau * tau as f64).sqrt())
                    .unwrap()
                    .sample(&mut r);
                (y, v)
            })
            .collect();
        let m = meta_analysis(&studies).unwrap();
        let (mean, tau2) = iterated_dl(&studies);
        if m.tau2 > 0.0 {
            heterogeneous += 1;
        }
        worst = worst
            .max((m.pooled - mean).abs())
            .max((m.tau2 - tau2).abs());
    }
    let equal = meta_analysis(&[(0.7, 0.05); 6]).unwrap();
    conclude(vec![
        check(
            "11 pooled estimate vs scalar fixed point",
            worst <= 1e-8 && heterogeneous > 0,
            format!("max abs diff {worst:.2e} over 50 synthetic meta-analyses ({heterogeneous} with tau2 > 0)"),
        ),
        check(
            "11 equal studies",
            equal.tau2 == 0.0 && equal.method == TauMethod::PauleMandel && (equal.pooled - 0.7).abs() < 1e-15,
            format!("tau2 = {}, pooled = {}", equal.tau2, equal.pooled),
        ),
    ]);
}
