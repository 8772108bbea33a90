use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polyads(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyads"))
        .args(args)
        .env_remove("POLYADS_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn report(text: &str) -> HashMap<String, String> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn simulate(dir: &Path, n: u32, seed: u64) {
    let o = polyads(&[
        "simulate",
        "--n1",
        &n.to_string(),
        "--n2",
        &n.to_string(),
        "--density",
        "0.1",
        "--seed",
        &seed.to_string(),
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

fn fit_args<'a>(dir: &'a Path, edges: &'a str, cov: &'a str) -> Vec<String> {
    vec![
        "fit".into(),
        "--edges".into(),
        dir.join(edges).display().to_string(),
        "--covariates".into(),
        dir.join(cov).display().to_string(),
    ]
}

fn run(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    polyads(&refs)
}

#[test]
fn simulate_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 50, 4);
    let meta = report(&fs::read_to_string(dir.path().join("dataset.txt")).unwrap());
    assert_eq!(meta["true_beta"], "1");
    let density: f64 = meta["realized_density"].parse().unwrap();
    assert!((density - 0.1).abs() < 0.01, "{density}");

    let o = run(&fit_args(dir.path(), "edges.csv", "covariates.csv"));
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(text.starts_with("# polyads "));
    let r = report(&text);
    for key in [
        "version",
        "config.max_iterations",
        "n_canonical",
        "n_active",
        "loop_count",
        "trace.0",
        "beta.x1",
        "ci.x1",
        "ci_prime.x1",
        "time.enumeration_seconds",
        "time.newton_seconds",
        "time.variance_seconds",
    ] {
        assert!(r.contains_key(key), "missing {key}");
    }
    assert_eq!(r["status"], "ok");
    let n_canonical: usize = r["n_canonical"].parse().unwrap();
    assert_eq!(r["n_active"].parse::<usize>().unwrap(), 8 * n_canonical);
    let beta: f64 = r["beta.x1"].parse().unwrap();
    assert!((beta - 1.0).abs() < 1.0, "{beta}");
}

#[test]
fn simulate_is_reproducible_and_sparse_regime_targets_four_root_n() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulate(a.path(), 20, 8);
    simulate(b.path(), 20, 8);
    for f in ["edges.csv", "covariates.csv", "dataset.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    let o = polyads(&[
        "simulate",
        "--n1",
        "60",
        "--n2",
        "60",
        "--sparse-regime",
        "--out-dir",
        c.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&stdout(&o));
    let n: f64 = r["n_cells"].parse().unwrap();
    let e: f64 = r["n_edges"].parse().unwrap();
    assert!(
        (e / (4.0 * n.sqrt()) - 1.0).abs() < 0.3,
        "{e} edges for n = {n}"
    );
}

#[test]
fn deterministic_fit_reports_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 25, 2);
    let mut args = fit_args(dir.path(), "edges.csv", "covariates.csv");
    args.insert(0, "--deterministic".into());
    let a = run(&args);
    let mut args4 = args.clone();
    args4.splice(0..0, ["--workers".to_string(), "4".to_string()]);
    let b = run(&args4);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(!stdout(&a).contains("time."));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 25, 2);
    let conf = dir.path().join("run.conf");
    fs::write(
        &conf,
        "max_iterations=1\ngradient_tolerance=1e-14\nci_level=0.9\n",
    )
    .unwrap();
    let mut args = fit_args(dir.path(), "edges.csv", "covariates.csv");
    args.extend(["--config".into(), conf.display().to_string()]);
    let o = run(&args);
    // One Newton step cannot reach 1e-14: partial report and exit code 3.
    assert_eq!(o.status.code(), Some(3));
    let r = report(&stdout(&o));
    assert_eq!(r["config.max_iterations"], "1");
    assert_eq!(r["config.ci_level"], "0.9");
    assert_eq!(r["status"], "not_converged");
    assert!(r.contains_key("beta.x1"));

    args.extend([
        "--max-iterations".into(),
        "50".into(),
        "--gradient-tolerance".into(),
        "1e-8".into(),
    ]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&stdout(&o))["config.max_iterations"], "50");
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 15, 1);
    let d = dir.path();

    let o = run(&fit_args(d, "missing.csv", "covariates.csv"));
    assert_eq!(o.status.code(), Some(2));

    // Covariates only for positive edges: zero-count corners are missing.
    let edges = fs::read_to_string(d.join("edges.csv")).unwrap();
    let mut partial = String::from("i1,i2,i3,x1\n");
    for line in edges.lines().skip(2) {
        let f: Vec<&str> = line.split(',').collect();
        partial.push_str(&format!("{},{},{},0.5\n", f[0], f[1], f[2]));
    }
    fs::write(d.join("partial.csv"), partial).unwrap();
    let o = run(&fit_args(d, "edges.csv", "partial.csv"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("missing covariates"), "{err}");

    // A constant feature has a zero DiD contrast everywhere.
    let cov = fs::read_to_string(d.join("covariates.csv")).unwrap();
    let constant: String = cov
        .lines()
        .enumerate()
        .map(|(k, l)| {
            if k == 0 {
                format!("{l}\n")
            } else {
                let (head, _) = l.rsplit_once(',').unwrap();
                format!("{head},2.5\n")
            }
        })
        .collect();
    fs::write(d.join("constant.csv"), constant).unwrap();
    let o = run(&fit_args(d, "edges.csv", "constant.csv"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("collinear"));

    fs::write(d.join("bad.csv"), "i1,i2,i3,y\n1,2,x,1\n").unwrap();
    let o = run(&fit_args(d, "bad.csv", "covariates.csv"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:2"));

    let o = polyads(&["fit", "--nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resource_guard_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), 15, 1);
    let mut args = fit_args(dir.path(), "edges.csv", "covariates.csv");
    args.extend(["--max-records".into(), "1".into()]);
    assert_eq!(run(&args).status.code(), Some(4));
}

#[test]
fn formula_covariates_reproduce_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("edges.csv"),
        "i1,i2,y\n1,1,3\n2,2,1\n1,2,1\n3,1,2\n2,3,4\n3,3,1\n",
    )
    .unwrap();
    fs::write(
        d.join("rows.csv"),
        "node,x,city\n1,0.1,a\n2,0.7,b\n3,-0.4,a\n",
    )
    .unwrap();
    fs::write(
        d.join("cols.csv"),
        "node,x,city\n1,0.3,b\n2,-0.2,a\n3,0.9,a\n",
    )
    .unwrap();
    let mut cov = String::from("i1,i2,gap,same\n");
    let (rx, rc) = ([0.1, 0.7, -0.4], ["a", "b", "a"]);
    let (cx, cc) = ([0.3, -0.2, 0.9], ["b", "a", "a"]);
    for i in 0..3 {
        for j in 0..3 {
            let gap = f64::abs(rx[i] - cx[j]);
            let same = u8::from(rc[i] == cc[j]);
            cov.push_str(&format!("{},{},{gap},{same}\n", i + 1, j + 1));
        }
    }
    fs::write(d.join("cov.csv"), cov).unwrap();
    let spec = format!(
        "formula:d1={};d2={};gap=math::abs(d1.x-d2.x);same=d1.city==d2.city",
        d.join("rows.csv").display(),
        d.join("cols.csv").display()
    );
    let edges = d.join("edges.csv").display().to_string();
    let from_file = polyads(&[
        "--deterministic",
        "fit",
        "--edges",
        &edges,
        "--covariates",
        d.join("cov.csv").to_str().unwrap(),
    ]);
    let from_formula = polyads(&[
        "--deterministic",
        "fit",
        "--edges",
        &edges,
        "--covariates",
        &spec,
    ]);
    let strip = |o: &Output| -> Vec<String> {
        stdout(o)
            .lines()
            .filter(|l| !l.starts_with("config.covariates"))
            .map(str::to_string)
            .collect()
    };
    assert_eq!(strip(&from_file), strip(&from_formula));
    assert!(report(&stdout(&from_formula)).contains_key("beta.same"));
}

#[test]
fn bench_with_one_replication_and_long_table() {
    let dir = tempfile::tempdir().unwrap();
    let long = dir.path().join("long.csv");
    let o = polyads(&[
        "--deterministic",
        "bench",
        "--replications",
        "1",
        "--sizes",
        "12x12",
        "--long-out",
        long.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert!(text.contains("# polyads "));
    let long = fs::read_to_string(long).unwrap();
    assert_eq!(long.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn meta_pools_rows_and_rejects_a_single_study() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.csv");
    fs::write(&f, "beta,var\n1.0,0.04\n1.0,0.09\n1.0,0.01\n").unwrap();
    let o = polyads(&["meta", "--input", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&stdout(&o));
    assert_eq!(r["tau2"], "0");
    assert_eq!(r["pooled"].parse::<f64>().unwrap(), 1.0);

    fs::write(&f, "beta,var\n1.0,0.04\n").unwrap();
    assert_eq!(
        polyads(&["meta", "--input", f.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}
