//! Monte Carlo harness comparing the polyads estimator with PPML on
//! simulated three-way designs.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;

use crate::baseline::{ppml_fit, PpmlConfig};
use crate::enumeration::{build_incidence, enumerate_active_with, EnumerationConfig};
use crate::error::{PolyadsError, Result};
use crate::estimator::{fit, FitConfig};
use crate::graph::FixedEffectStructure;
use crate::simulate::{
    calibrate_intercept, generate_replication, sparse_regime_density, ThreeWayDesign,
};
use crate::variance::{covariance, VarianceConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Polyads,
    Ppml,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Polyads => "polyads",
            Estimator::Ppml => "ppml",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "polyads" => Ok(Estimator::Polyads),
            "ppml" => Ok(Estimator::Ppml),
            _ => Err(PolyadsError::InvalidParameter(format!(
                "unknown estimator {s:?}"
            ))),
        }
    }
}

/// How the intercept of a design is chosen.
#[derive(Clone, Debug, PartialEq)]
pub enum Density {
    /// Use `design.intercept_c` as given.
    Fixed,
    /// Calibrate to this share of positive cells.
    Target(f64),
    /// Calibrate to `|E| ≈ 4√n`.
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchDesign {
    pub label: String,
    pub design: ThreeWayDesign,
    pub density: Density,
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub designs: Vec<BenchDesign>,
    pub replications: u64,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    pub fit: FitConfig,
    pub ppml: PpmlConfig,
    /// Leave wall times out of the tables so identical runs match byte for byte.
    pub deterministic: bool,
}

impl BenchConfig {
    pub fn new(designs: Vec<BenchDesign>, replications: u64) -> Self {
        BenchConfig {
            designs,
            replications,
            estimators: vec![Estimator::Polyads, Estimator::Ppml],
            seed: 0,
            fit: FitConfig::default(),
            ppml: PpmlConfig::default(),
            deterministic: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub design: usize,
    pub rep: u64,
    pub estimator: Estimator,
    pub beta_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub converged: bool,
    pub iterations: usize,
    pub n_edges: usize,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub design: String,
    pub estimator: Estimator,
    pub replications: usize,
    pub succeeded: usize,
    pub mean_error: f64,
    pub median_error: f64,
    pub sd: f64,
    /// Share of successful replications whose 95% interval covers `β★`.
    pub coverage: f64,
    pub convergence_rate: f64,
    pub mean_wall_seconds: f64,
    pub median_iterations: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    /// Designs with their resolved intercepts.
    pub designs: Vec<BenchDesign>,
    pub outcomes: Vec<Outcome>,
    pub summary: Vec<SummaryRow>,
}

/// Seed of design `k`, spread so designs never share a stream.
fn design_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn resolve(config: &BenchConfig) -> Result<Vec<BenchDesign>> {
    config
        .designs
        .iter()
        .enumerate()
        .map(|(k, bd)| {
            let mut design = bd.design.clone();
            design.seed = design_seed(config.seed, k);
            design.validate()?;
            match bd.density {
                Density::Fixed => {}
                Density::Target(t) => design.intercept_c = calibrate_intercept(&design, t)?,
                Density::Sparse => {
                    design.intercept_c =
                        calibrate_intercept(&design, sparse_regime_density(design.n_cells()))?
                }
            }
            Ok(BenchDesign {
                label: bd.label.clone(),
                design,
                density: bd.density.clone(),
            })
        })
        .collect()
}

fn run_polyads(
    ds: &crate::simulate::SimulatedDataset,
    config: &BenchConfig,
) -> Result<(f64, f64, (f64, f64), bool, usize)> {
    let enum_cfg = EnumerationConfig {
        parallel: false,
        ..EnumerationConfig::default()
    };
    let records = enumerate_active_with(&ds.graph, &ds.covariates, &enum_cfg)?.records;
    let res = fit(&records, 1, &config.fit, &[0.0])?;
    let inc = build_incidence(&records);
    let var_cfg = VarianceConfig {
        truncation_l: config.fit.truncation_l,
        ..VarianceConfig::default()
    };
    let cov = covariance(&records, &inc, &res.beta_hat, &var_cfg)?;
    let se = cov.preferred_sigma()[(0, 0)].max(0.0).sqrt();
    Ok((
        res.beta_hat[0],
        se,
        cov.preferred_ci()[0],
        res.converged,
        res.newton_steps(),
    ))
}

fn run_ppml(
    ds: &crate::simulate::SimulatedDataset,
    config: &BenchConfig,
) -> Result<(f64, f64, (f64, f64), bool, usize)> {
    let structure = FixedEffectStructure::max_structure(3);
    let res = ppml_fit(&ds.graph, &ds.covariates, &structure, &config.ppml)?;
    let b = res.beta_hat[0];
    let se = res.robust_se[0];
    Ok((
        b,
        se,
        (b - 1.96 * se, b + 1.96 * se),
        res.converged,
        res.iterations,
    ))
}

fn run_one(designs: &[BenchDesign], config: &BenchConfig, k: usize, rep: u64) -> Vec<Outcome> {
    let dataset = generate_replication(&designs[k].design, rep);
    config
        .estimators
        .iter()
        .map(|&est| {
            let start = Instant::now();
            let result = dataset.as_ref().map_err(|e| e.to_string()).and_then(|ds| {
                match est {
                    Estimator::Polyads => run_polyads(ds, config),
                    Estimator::Ppml => run_ppml(ds, config),
                }
                .map_err(|e| e.to_string())
            });
            let wall_seconds = start.elapsed().as_secs_f64();
            let n_edges = dataset.as_ref().map_or(0, |d| d.graph.num_edges());
            match result {
                Ok((b, se, ci, converged, iterations)) => Outcome {
                    design: k,
                    rep,
                    estimator: est,
                    beta_hat: Some(b),
                    se: Some(se),
                    ci: Some(ci),
                    converged,
                    iterations,
                    n_edges,
                    wall_seconds,
                    error: None,
                },
                Err(msg) => Outcome {
                    design: k,
                    rep,
                    estimator: est,
                    beta_hat: None,
                    se: None,
                    ci: None,
                    converged: false,
                    iterations: 0,
                    n_edges,
                    wall_seconds,
                    error: Some(msg),
                },
            }
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn summarize(
    designs: &[BenchDesign],
    outcomes: &[Outcome],
    estimators: &[Estimator],
) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (k, bd) in designs.iter().enumerate() {
        for &est in estimators {
            let group: Vec<&Outcome> = outcomes
                .iter()
                .filter(|o| o.design == k && o.estimator == est)
                .collect();
            let ok: Vec<&Outcome> = group
                .iter()
                .copied()
                .filter(|o| o.beta_hat.is_some())
                .collect();
            let beta_star = bd.design.beta_star;
            let errors: Vec<f64> = ok.iter().map(|o| o.beta_hat.unwrap() - beta_star).collect();
            let n = errors.len() as f64;
            let mean_error = errors.iter().sum::<f64>() / n;
            let sd = if errors.len() > 1 {
                (errors.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            let covered = ok
                .iter()
                .filter(|o| {
                    o.ci.is_some_and(|(lo, hi)| lo <= beta_star && beta_star <= hi)
                })
                .count();
            let converged: Vec<&Outcome> = group.iter().copied().filter(|o| o.converged).collect();
            rows.push(SummaryRow {
                design: bd.label.clone(),
                estimator: est,
                replications: group.len(),
                succeeded: ok.len(),
                mean_error,
                median_error: median(errors.clone()),
                sd,
                coverage: covered as f64 / n,
                convergence_rate: converged.len() as f64 / group.len().max(1) as f64,
                mean_wall_seconds: group.iter().map(|o| o.wall_seconds).sum::<f64>()
                    / group.len().max(1) as f64,
                median_iterations: median(converged.iter().map(|o| o.iterations as f64).collect()),
            });
        }
    }
    rows
}

/// Runs every (design, replication) pair on the current rayon pool.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    if config.replications == 0 {
        return Err(PolyadsError::InvalidParameter(
            "replications must be ≥ 1".into(),
        ));
    }
    if config.designs.is_empty() || config.estimators.is_empty() {
        return Err(PolyadsError::InvalidParameter(
            "bench needs at least one design and one estimator".into(),
        ));
    }
    let designs = resolve(config)?;
    let jobs: Vec<(usize, u64)> = (0..designs.len())
        .flat_map(|k| (0..config.replications).map(move |r| (k, r)))
        .collect();
    let outcomes: Vec<Outcome> = jobs
        .par_iter()
        .map(|&(k, rep)| run_one(&designs, config, k, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let summary = summarize(&designs, &outcomes, &config.estimators);
    Ok(BenchReport {
        designs,
        outcomes,
        summary,
    })
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "NA".into()
    }
}

fn noise_label(design: &ThreeWayDesign) -> String {
    match design.noise {
        crate::simulate::Noise::Poisson => "poisson".into(),
        crate::simulate::Noise::NegBin { rate } => format!("negbin:{rate}"),
    }
}

/// `# key=value` lines describing the run (worker count excluded).
pub fn config_header(report: &BenchReport, config: &BenchConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# polyads {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "# seed={}", config.seed);
    let _ = writeln!(s, "# replications={}", config.replications);
    let names: Vec<_> = config.estimators.iter().map(|e| e.name()).collect();
    let _ = writeln!(s, "# estimators={}", names.join(","));
    let _ = writeln!(s, "# deterministic={}", config.deterministic);
    let f = &config.fit;
    let _ = writeln!(
        s,
        "# fit=max_iterations:{},gradient_tolerance:{},truncation_l:{},ridge_epsilon:{},damped:{}",
        f.max_iterations, f.gradient_tolerance, f.truncation_l, f.ridge_epsilon, f.damped
    );
    for bd in &report.designs {
        let d = &bd.design;
        let density = match bd.density {
            Density::Fixed => "fixed".to_string(),
            Density::Target(t) => format!("{t}"),
            Density::Sparse => "sparse".to_string(),
        };
        let _ = writeln!(
            s,
            "# design.{}=n1:{},n2:{},n3:{},beta_star:{},fe_std:{},ar_coef:{},noise_scale:{},noise:{},density:{},intercept_c:{}",
            bd.label,
            d.n1,
            d.n2,
            d.n3,
            d.beta_star,
            d.fe_std,
            d.ar_coef,
            d.noise_scale,
            noise_label(d),
            density,
            d.intercept_c
        );
    }
    s
}

/// Summary table, one row per (design, estimator).
pub fn summary_table(report: &BenchReport, config: &BenchConfig) -> String {
    let mut s = config_header(report, config);
    s.push_str("design,estimator,replications,succeeded,mean_error,median_error,sd,coverage,convergence_rate,mean_wall_seconds,median_iterations\n");
    for r in &report.summary {
        let wall = if config.deterministic {
            "NA".to_string()
        } else {
            fmt_f(r.mean_wall_seconds)
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.design,
            r.estimator.name(),
            r.replications,
            r.succeeded,
            fmt_f(r.mean_error),
            fmt_f(r.median_error),
            fmt_f(r.sd),
            fmt_f(r.coverage),
            fmt_f(r.convergence_rate),
            wall,
            fmt_f(r.median_iterations)
        );
    }
    s
}

/// One row per (design, replication, estimator), for plotting.
pub fn long_table(report: &BenchReport, config: &BenchConfig) -> String {
    let mut s = config_header(report, config);
    s.push_str("design,rep,estimator,n_edges,beta_hat,error,se,ci_lower,ci_upper,covered,converged,iterations,wall_seconds,status\n");
    for o in &report.outcomes {
        let bd = &report.designs[o.design];
        let beta_star = bd.design.beta_star;
        let opt = |v: Option<f64>| v.map_or("NA".to_string(), fmt_f);
        let covered = o.ci.map_or("NA".to_string(), |(lo, hi)| {
            (lo <= beta_star && beta_star <= hi).to_string()
        });
        let wall = if config.deterministic {
            "NA".to_string()
        } else {
            fmt_f(o.wall_seconds)
        };
        let status = o.error.as_deref().map_or("ok".to_string(), |e| {
            format!("\"error: {}\"", e.replace('"', "'"))
        });
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            bd.label,
            o.rep,
            o.estimator.name(),
            o.n_edges,
            opt(o.beta_hat),
            opt(o.beta_hat.map(|b| b - beta_star)),
            opt(o.se),
            opt(o.ci.map(|c| c.0)),
            opt(o.ci.map(|c| c.1)),
            covered,
            o.converged,
            o.iterations,
            wall,
            status
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_replication_single_row() {
        let mut d = ThreeWayDesign::new(6, 6);
        d.intercept_c = 0.5;
        let cfg = BenchConfig::new(
            vec![BenchDesign {
                label: "tiny".into(),
                design: d,
                density: Density::Fixed,
            }],
            1,
        );
        let cfg = BenchConfig {
            estimators: vec![Estimator::Polyads],
            ..cfg
        };
        let report = run_bench(&cfg).unwrap();
        assert_eq!(report.summary.len(), 1);
        assert_eq!(report.summary[0].replications, 1);
        let table = summary_table(&report, &cfg);
        assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 2);
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(vec![]).is_nan());
    }
}
