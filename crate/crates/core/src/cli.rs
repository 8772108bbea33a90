//! Command-line front end: `fit`, `simulate`, `bench` and `meta`.
//!
//! Every command writes `key=value` text headed by the effective config and
//! the library version. A `--config` file holds `flag=value` lines that are
//! applied before the command-line flags, so explicit flags win.
//!
//! Exit codes: 0 success, 2 input error, 3 non-convergence, 4 resource guard.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use log::warn;

use crate::bench::{
    config_header, long_table, run_bench, summary_table, BenchConfig, BenchDesign, Density,
    Estimator,
};
use crate::covariates::CovariateProvider;
use crate::enumeration::{
    build_incidence, enumerate_active_with, EnumerationConfig, DEFAULT_MAX_RECORDS,
};
use crate::error::{PolyadsError, Result};
use crate::estimator::{fit, FitConfig, FitResult};
use crate::formula::FormulaCovariates;
use crate::io;
use crate::meta::{meta_analysis, TauMethod};
use crate::simulate::{
    calibrate_intercept, generate_three_way, sparse_regime_density, Noise, ThreeWayDesign,
};
use crate::variance::{covariance, VarianceConfig, DEFAULT_MAX_PAIR_WORK};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "polyads",
    version,
    about = "Polyads estimator for multi-way count data"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// File of `flag=value` lines applied before the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "POLYADS_WORKERS", default_value_t = 0)]
    workers: usize,

    /// Fixed reduction order and no wall-clock fields, for byte-identical reruns.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the polyads estimator to an edge file.
    Fit(FitArgs),
    /// Draw one dataset from the three-way design and export it.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison of polyads and PPML over a design grid.
    Bench(BenchArgs),
    /// Random-effects pooling of per-subsample estimates.
    Meta(MetaArgs),
}

#[derive(Debug, Args)]
struct NewtonArgs {
    #[arg(long, default_value_t = FitConfig::default().max_iterations)]
    max_iterations: usize,
    #[arg(long, default_value_t = FitConfig::default().gradient_tolerance)]
    gradient_tolerance: f64,
    /// Orbit length above which the conditional law is truncated.
    #[arg(long, default_value_t = FitConfig::default().truncation_l)]
    truncation_l: u64,
    #[arg(long, default_value_t = 0.0)]
    ridge_epsilon: f64,
    /// Halve Newton steps until the loss decreases.
    #[arg(long)]
    damped: bool,
}

impl NewtonArgs {
    fn config(&self) -> FitConfig {
        FitConfig {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            truncation_l: self.truncation_l,
            ridge_epsilon: self.ridge_epsilon,
            damped: self.damped,
            ..FitConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Edge file with header `i1,...,iD,y`.
    #[arg(long)]
    edges: PathBuf,
    /// Covariate file with header `i1,...,iD,x1,...,xp`, or `formula:<spec>`.
    #[arg(long)]
    covariates: String,
    /// Report destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    newton: NewtonArgs,
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// Skip the pair-sum variance above this many partner pairs.
    #[arg(long, default_value_t = DEFAULT_MAX_PAIR_WORK)]
    max_pair_work: u128,
    /// Abort enumeration above this many canonical polyads.
    #[arg(long, default_value_t = DEFAULT_MAX_RECORDS)]
    max_records: usize,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long, default_value_t = 5)]
    n3: u32,
    #[arg(long, default_value_t = 1.0)]
    beta_star: f64,
    #[arg(long, default_value_t = 0.25)]
    fe_std: f64,
    #[arg(long, default_value_t = 0.5)]
    ar_coef: f64,
    #[arg(long, default_value_t = 0.25)]
    noise_scale: f64,
}

impl DesignArgs {
    fn design(&self, n1: u32, n2: u32, noise: Noise, seed: u64) -> ThreeWayDesign {
        ThreeWayDesign {
            n3: self.n3,
            beta_star: self.beta_star,
            fe_std: self.fe_std,
            ar_coef: self.ar_coef,
            noise_scale: self.noise_scale,
            noise,
            seed,
            ..ThreeWayDesign::new(n1, n2)
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    n1: u32,
    #[arg(long)]
    n2: u32,
    #[command(flatten)]
    design: DesignArgs,
    /// `poisson` or `negbin:RATE`.
    #[arg(long, default_value = "poisson", value_parser = parse_noise)]
    noise: Noise,
    /// Target share of positive cells.
    #[arg(long, conflicts_with_all = ["sparse_regime", "intercept"])]
    density: Option<f64>,
    /// Target `|E| ≈ 4√n`.
    #[arg(long, conflicts_with = "intercept")]
    sparse_regime: bool,
    /// Use this intercept instead of calibrating one.
    #[arg(long, allow_negative_numbers = true)]
    intercept: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Comma-separated `N1xN2` grid sizes.
    #[arg(long, default_value = "30x30", value_delimiter = ',', value_parser = parse_size)]
    sizes: Vec<(u32, u32)>,
    /// Comma-separated noise models (`poisson`, `negbin:RATE`).
    #[arg(long, default_value = "poisson", value_delimiter = ',', value_parser = parse_noise)]
    noise: Vec<Noise>,
    /// Comma-separated target densities, or `sparse` for `|E| ≈ 4√n`.
    #[arg(long, default_value = "0.1", value_delimiter = ',', value_parser = parse_density)]
    densities: Vec<Density>,
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long, default_value_t = 200)]
    replications: u64,
    #[arg(long, default_value = "polyads,ppml", value_delimiter = ',', value_parser = Estimator::parse)]
    estimators: Vec<Estimator>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    newton: NewtonArgs,
    /// Summary table destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Long-format per-replication table.
    #[arg(long)]
    long_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetaArgs {
    /// CSV with columns `beta` and `var`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_noise(s: &str) -> std::result::Result<Noise, String> {
    match s.split_once(':') {
        None if s == "poisson" => Ok(Noise::Poisson),
        None if s == "negbin" => Ok(Noise::NegBin { rate: 0.1 }),
        Some(("negbin", rate)) => rate
            .parse::<f64>()
            .ok()
            .filter(|r| *r > 0.0 && r.is_finite())
            .map(|rate| Noise::NegBin { rate })
            .ok_or_else(|| format!("bad NegBin rate {rate:?}")),
        _ => Err(format!("unknown noise {s:?}; use poisson or negbin:RATE")),
    }
}

fn parse_size(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s
        .split_once('x')
        .ok_or_else(|| format!("size {s:?} is not N1xN2"))?;
    let n = |v: &str| v.parse::<u32>().map_err(|e| format!("size {s:?}: {e}"));
    Ok((n(a)?, n(b)?))
}

fn parse_density(s: &str) -> std::result::Result<Density, String> {
    if s == "sparse" {
        return Ok(Density::Sparse);
    }
    s.parse::<f64>()
        .ok()
        .filter(|d| *d > 0.0 && *d < 1.0)
        .map(Density::Target)
        .ok_or_else(|| format!("density {s:?} must be in (0, 1) or `sparse`"))
}

fn noise_label(noise: Noise) -> String {
    match noise {
        Noise::Poisson => "poisson".into(),
        Noise::NegBin { rate } => format!("negbin:{rate}"),
    }
}

/// Exit code for a library error.
pub fn exit_code(err: &PolyadsError) -> i32 {
    match err {
        PolyadsError::ResourceGuard(_) => EXIT_RESOURCE,
        _ => EXIT_INPUT,
    }
}

/// Splices `--config` entries in right after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut iter = args.iter().enumerate();
    while let Some((_, a)) = iter.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = iter.next().map(|(_, v)| PathBuf::from(v));
        } else if let Some(v) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(v));
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let entries = io::read_key_values(&path)?;
    let root = Cli::command();
    let names: Vec<String> = root
        .get_subcommands()
        .map(|c| c.get_name().to_string())
        .collect();
    let Some(pos) = args
        .iter()
        .position(|a| names.iter().any(|n| a.to_str() == Some(n)))
    else {
        return Ok(args);
    };
    let sub = root
        .find_subcommand(args[pos].to_str().unwrap_or_default())
        .expect("subcommand located above");
    let mut injected = Vec::new();
    for (key, value) in entries {
        let key = key.replace('_', "-");
        let arg = sub
            .get_arguments()
            .chain(root.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                PolyadsError::parse(
                    path.display().to_string(),
                    format!("unknown option {key:?}"),
                )
            })?;
        if key == "config" {
            continue;
        }
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => {
                    return Err(PolyadsError::parse(
                        path.display().to_string(),
                        format!("{key} expects true or false, got {value:?}"),
                    ))
                }
            }
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return EXIT_INPUT;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Fit(a) => cmd_fit(a, cli.deterministic),
        Command::Simulate(a) => cmd_simulate(a).map(|()| EXIT_OK),
        Command::Bench(a) => cmd_bench(a, cli.deterministic).map(|()| EXIT_OK),
        Command::Meta(a) => cmd_meta(a).map(|()| EXIT_OK),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

enum LoadedCovariates {
    File(crate::covariates::SparseCovariates),
    Formula(FormulaCovariates),
}

impl LoadedCovariates {
    fn provider(&self) -> &dyn CovariateProvider {
        match self {
            LoadedCovariates::File(c) => c,
            LoadedCovariates::Formula(c) => c,
        }
    }
}

fn load_covariates(arg: &str, dims: &[u32]) -> Result<(Vec<String>, LoadedCovariates)> {
    if let Some(spec) = arg.strip_prefix("formula:") {
        let f = FormulaCovariates::parse(spec, dims, Path::new("."))?;
        let names = f.names().to_vec();
        Ok((names, LoadedCovariates::Formula(f)))
    } else {
        let (names, cov) = io::read_covariates(Path::new(arg), dims.len())?;
        Ok((names, LoadedCovariates::File(cov)))
    }
}

fn cmd_fit(args: &FitArgs, deterministic: bool) -> Result<i32> {
    let fit_cfg = args.newton.config();
    fit_cfg.validate()?;
    let var_cfg = VarianceConfig {
        ci_level: args.ci_level,
        max_pair_work: args.max_pair_work,
        truncation_l: fit_cfg.truncation_l,
    };
    if !(args.ci_level > 0.0 && args.ci_level < 1.0) {
        return Err(PolyadsError::InvalidParameter(format!(
            "ci_level must be in (0, 1), got {}",
            args.ci_level
        )));
    }
    let graph = io::read_edges(&args.edges)?.into_graph()?;
    let (names, cov) = load_covariates(&args.covariates, graph.dims())?;
    let p = names.len();

    let mut r = String::new();
    let _ = writeln!(r, "# polyads {VERSION}");
    let _ = writeln!(r, "command=fit");
    let _ = writeln!(r, "version={VERSION}");
    let _ = writeln!(r, "config.edges={}", args.edges.display());
    let _ = writeln!(r, "config.covariates={}", args.covariates);
    let _ = writeln!(r, "config.max_iterations={}", fit_cfg.max_iterations);
    let _ = writeln!(
        r,
        "config.gradient_tolerance={}",
        fit_cfg.gradient_tolerance
    );
    let _ = writeln!(r, "config.truncation_l={}", fit_cfg.truncation_l);
    let _ = writeln!(r, "config.ridge_epsilon={}", fit_cfg.ridge_epsilon);
    let _ = writeln!(r, "config.damped={}", fit_cfg.damped);
    let _ = writeln!(r, "config.ci_level={}", var_cfg.ci_level);
    let _ = writeln!(r, "config.max_pair_work={}", var_cfg.max_pair_work);
    let _ = writeln!(r, "config.max_records={}", args.max_records);
    let _ = writeln!(r, "config.deterministic={deterministic}");
    let dims: Vec<String> = graph.dims().iter().map(u32::to_string).collect();
    let _ = writeln!(r, "dims={}", dims.join(","));
    let _ = writeln!(r, "features={}", names.join(","));
    let _ = writeln!(r, "n_edges={}", graph.num_edges());
    let _ = writeln!(r, "total_count={}", graph.total_count());

    let t0 = Instant::now();
    let enum_cfg = EnumerationConfig {
        max_records: args.max_records,
        ..EnumerationConfig::default()
    };
    let enumeration = enumerate_active_with(&graph, cov.provider(), &enum_cfg)?;
    let t_enum = t0.elapsed().as_secs_f64();
    let records = enumeration.records;
    let e = graph.num_edges().max(1) as f64;
    let _ = writeln!(r, "n_canonical={}", records.len());
    let _ = writeln!(r, "n_active={}", records.len() << graph.d());
    let _ = writeln!(r, "loop_count={}", enumeration.loop_count);
    let _ = writeln!(
        r,
        "loop_count_per_edge_squared={}",
        enumeration.loop_count as f64 / (e * e)
    );

    let t1 = Instant::now();
    let fitted = fit(&records, p, &fit_cfg, &vec![0.0; p]);
    let t_newton = t1.elapsed().as_secs_f64();
    let fitted: FitResult = match fitted {
        Ok(f) => f,
        Err(err) => {
            let _ = writeln!(r, "status=error");
            let _ = writeln!(r, "error={err}");
            emit(args.out.as_deref(), &r)?;
            return Err(err);
        }
    };
    let _ = writeln!(r, "converged={}", fitted.converged);
    let _ = writeln!(r, "newton_steps={}", fitted.newton_steps());
    let _ = writeln!(r, "loss={}", fitted.loss);
    let _ = writeln!(r, "gradient_norm={}", fitted.gradient_norm);
    for (k, it) in fitted.iterations.iter().enumerate() {
        let _ = writeln!(
            r,
            "trace.{k}=beta:{};loss:{};gradient_norm:{}",
            join(it.beta.iter().copied()),
            it.loss,
            it.gradient_norm
        );
    }
    for (name, b) in names.iter().zip(&fitted.beta_hat) {
        let _ = writeln!(r, "beta.{name}={b}");
    }

    let t2 = Instant::now();
    let incidence = build_incidence(&records);
    let cov_result = covariance(&records, &incidence, &fitted.beta_hat, &var_cfg);
    let t_var = t2.elapsed().as_secs_f64();
    match &cov_result {
        Ok(c) => {
            let _ = writeln!(r, "omega_touches={}", c.omega_touches);
            let _ = writeln!(r, "omega_prime_touches={}", c.omega_prime_touches);
            for (k, name) in names.iter().enumerate() {
                let _ = writeln!(r, "se.{name}={}", c.sigma_hat[(k, k)].max(0.0).sqrt());
                let _ = writeln!(r, "ci.{name}={},{}", c.ci[k].0, c.ci[k].1);
                match (&c.sigma_prime_hat, &c.ci_prime) {
                    (Some(s), Some(ci)) => {
                        let _ = writeln!(r, "se_prime.{name}={}", s[(k, k)].max(0.0).sqrt());
                        let _ = writeln!(r, "ci_prime.{name}={},{}", ci[k].0, ci[k].1);
                    }
                    _ => {
                        let _ = writeln!(r, "se_prime.{name}=NA");
                        let _ = writeln!(r, "ci_prime.{name}=NA");
                    }
                }
            }
        }
        Err(err) => {
            warn!("variance not available: {err}");
            let _ = writeln!(r, "variance_error={err}");
        }
    }
    if !deterministic {
        let _ = writeln!(r, "time.enumeration_seconds={t_enum}");
        let _ = writeln!(r, "time.newton_seconds={t_newton}");
        let _ = writeln!(r, "time.variance_seconds={t_var}");
    }
    let status = if fitted.converged {
        "ok"
    } else {
        "not_converged"
    };
    let _ = writeln!(r, "status={status}");
    emit(args.out.as_deref(), &r)?;
    if !fitted.converged {
        return Ok(EXIT_NOT_CONVERGED);
    }
    cov_result?;
    Ok(EXIT_OK)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut design = args.design.design(args.n1, args.n2, args.noise, args.seed);
    design.validate()?;
    let target = if let Some(c) = args.intercept {
        design.intercept_c = c;
        None
    } else if args.sparse_regime {
        Some(sparse_regime_density(design.n_cells()))
    } else {
        Some(args.density.unwrap_or(0.1))
    };
    if let Some(t) = target {
        design.intercept_c = calibrate_intercept(&design, t)?;
    }
    let data = generate_three_way(&design)?;
    fs::create_dir_all(&args.out_dir)?;
    let mut edges = Vec::new();
    io::write_edges(&data.graph, &mut edges)?;
    fs::write(args.out_dir.join("edges.csv"), edges)?;
    let mut cov = Vec::new();
    io::write_dense_covariates(&data.covariates, &["x1".to_string()], &mut cov)?;
    fs::write(args.out_dir.join("covariates.csv"), cov)?;

    let mut r = String::new();
    let _ = writeln!(r, "# polyads {VERSION}");
    let _ = writeln!(r, "command=simulate");
    let _ = writeln!(r, "version={VERSION}");
    let _ = writeln!(r, "config.n1={}", design.n1);
    let _ = writeln!(r, "config.n2={}", design.n2);
    let _ = writeln!(r, "config.n3={}", design.n3);
    let _ = writeln!(r, "config.beta_star={}", design.beta_star);
    let _ = writeln!(r, "config.fe_std={}", design.fe_std);
    let _ = writeln!(r, "config.ar_coef={}", design.ar_coef);
    let _ = writeln!(r, "config.noise_scale={}", design.noise_scale);
    let _ = writeln!(r, "config.noise={}", noise_label(design.noise));
    let _ = writeln!(r, "config.seed={}", design.seed);
    match target {
        Some(t) => {
            let _ = writeln!(r, "config.target_density={t}");
        }
        None => {
            let _ = writeln!(r, "config.target_density=NA");
        }
    }
    let _ = writeln!(r, "intercept_c={}", design.intercept_c);
    let _ = writeln!(r, "true_beta={}", join(data.true_beta.iter().copied()));
    let _ = writeln!(r, "n_cells={}", design.n_cells());
    let _ = writeln!(r, "n_edges={}", data.graph.num_edges());
    let _ = writeln!(r, "realized_density={}", data.realized_density);
    fs::write(args.out_dir.join("dataset.txt"), &r)?;
    emit(None, &r)
}

fn cmd_bench(args: &BenchArgs, deterministic: bool) -> Result<()> {
    let mut designs = Vec::new();
    for &(n1, n2) in &args.sizes {
        for &noise in &args.noise {
            for density in &args.densities {
                let d = match density {
                    Density::Target(t) => t.to_string(),
                    Density::Sparse => "sparse".into(),
                    Density::Fixed => "fixed".into(),
                };
                designs.push(BenchDesign {
                    label: format!("{n1}x{n2}_{}_{d}", noise_label(noise)),
                    design: args.design.design(n1, n2, noise, 0),
                    density: density.clone(),
                });
            }
        }
    }
    if args.replications == 0 {
        return Err(PolyadsError::InvalidParameter(
            "replications must be ≥ 1".into(),
        ));
    }
    let mut config = BenchConfig::new(designs, args.replications);
    config.estimators = args.estimators.clone();
    config.seed = args.seed;
    config.fit = args.newton.config();
    config.deterministic = deterministic;
    let report = run_bench(&config)?;
    if let Some(path) = &args.long_out {
        fs::write(path, long_table(&report, &config))?;
    }
    let summary = summary_table(&report, &config);
    debug_assert!(summary.starts_with(&config_header(&report, &config)));
    emit(args.out.as_deref(), &summary)
}

fn cmd_meta(args: &MetaArgs) -> Result<()> {
    let rows = io::read_meta_rows(&args.input)?;
    let m = meta_analysis(&rows)?;
    let mut r = String::new();
    let _ = writeln!(r, "# polyads {VERSION}");
    let _ = writeln!(r, "command=meta");
    let _ = writeln!(r, "version={VERSION}");
    let _ = writeln!(r, "config.input={}", args.input.display());
    let _ = writeln!(r, "studies={}", rows.len());
    let _ = writeln!(r, "pooled={}", m.pooled);
    let _ = writeln!(r, "se={}", m.se);
    let _ = writeln!(r, "ci={},{}", m.ci.0, m.ci.1);
    let _ = writeln!(r, "tau2={}", m.tau2);
    let method = match m.method {
        TauMethod::PauleMandel => "paule_mandel",
        TauMethod::DerSimonianLaird => "dersimonian_laird",
    };
    let _ = writeln!(r, "method={method}");
    let _ = writeln!(r, "converged={}", m.converged);
    let _ = writeln!(r, "iterations={}", m.iterations);
    emit(args.out.as_deref(), &r)
}
