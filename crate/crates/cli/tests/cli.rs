use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn subopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subopt")).args(args).env_remove("SUBOPT_THREADS").output().expect("spawn subopt")
}

fn ok(args: &[&str]) -> String {
    let out = subopt(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, model: &str, n: usize, delta: f64, seed: u64) -> String {
    ok(&[
        "generate", "--model", model, "--n", &n.to_string(), "--delta", &delta.to_string(), "--seed",
        &seed.to_string(), "--out-dir", p(dir),
    ]);
    dir.join("data.csv").to_str().unwrap().to_string()
}

fn parse_rows(path: &str) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

/// `quantity,value` output as a lookup.
fn field(csv: &str, key: &str) -> String {
    csv.lines().find_map(|l| l.strip_prefix(&format!("{key},"))).unwrap_or_else(|| panic!("no {key} in {csv}")).into()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    for (rank, i) in idx.into_iter().enumerate() {
        r[i] = rank as f64;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn generate_writes_expected_shape_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let data_a = generate(&a, "linear", 100_000, 0.0, 7);
    generate(&b, "linear", 100_000, 0.0, 7);
    let rows = parse_rows(&data_a);
    assert_eq!(rows.len(), 100_000);
    assert!(rows.iter().all(|r| r.len() == 7 && r[0] == 1.0));
    assert_eq!(fs::read(&data_a).unwrap(), fs::read(b.join("data.csv")).unwrap());
    assert!(fs::read_to_string(a.join("truth.txt")).unwrap().contains("theta_true"));

    let c = tmp.path().join("c");
    generate(&c, "logistic", 2_000, 0.5, 7);
    let rows = parse_rows(c.join("data.csv").to_str().unwrap());
    assert!(rows.iter().all(|r| r.len() == 7 && (r[6] == 0.0 || r[6] == 1.0)));
}

#[test]
fn misspecified_linear_noise_grows_with_first_covariate() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "linear", 20_000, 0.5, 3);
    let out = ok(&["fit", "--input", &data, "--model", "linear", "--out-dir", p(tmp.path())]);
    let theta: Vec<f64> = (0..6).map(|j| field(&out, &format!("theta_{j}")).parse().unwrap()).collect();
    let rows = parse_rows(&data);
    let x1: Vec<f64> = rows.iter().map(|r| r[1].abs()).collect();
    let resid: Vec<f64> =
        rows.iter().map(|r| (r[6] - r[..6].iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>()).abs()).collect();
    let rho = pearson(&ranks(&x1), &ranks(&resid));
    assert!(rho > 0.1, "spearman {rho}");
}

#[test]
fn fit_modes_report_expected_quantities() {
    let tmp = TempDir::new().unwrap();
    let data = generate(&tmp.path().join("d"), "linear", 100_000, 0.0, 1);
    let out_dir = tmp.path().join("fit");
    let full = ok(&["fit", "--input", &data, "--model", "linear", "--out-dir", p(&out_dir)]);
    assert!(field(&full, "grad_norm").parse::<f64>().unwrap() <= 1e-10);
    assert_eq!(fs::read_to_string(out_dir.join("fit.csv")).unwrap(), full);

    let weighted = ok(&[
        "fit", "--input", &data, "--model", "linear", "--mode", "weighted", "--sampler", "hessian", "--fraction",
        "0.01", "--ci", "0.95", "--candidate", "-1,1,1,1,1,1", "--format", "json", "--out-dir", p(&out_dir),
    ]);
    assert!(weighted.contains("\"n\": 1000"), "{weighted}");
    assert!(weighted.contains("\"in_region\""));
    assert!(out_dir.join("fit.json").exists());
}

#[test]
fn report_and_plan_commands_write_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = generate(&tmp.path().join("d"), "logistic", 20_000, 0.0, 2);
    let dir = tmp.path().join("r");
    let report = ok(&[
        "report", "--input", &data, "--model", "logistic", "--sampler", "grad", "--fraction", "0.05", "--predict",
        "1,0,0,0,0,0", "--out-dir", p(&dir),
    ]);
    for key in ["amse_trace", "msehat_trace", "ci_statistic", "covers90", "covers95", "mspe_amse"] {
        field(&report, key);
    }
    ok(&["plan", "--input", &data, "--model", "logistic", "--sampler", "lev", "--out-dir", p(&dir)]);
    let plan = fs::read_to_string(dir.join("plan.csv")).unwrap();
    assert_eq!(plan.lines().count(), 20_001);
}

#[test]
fn exit_codes_follow_failure_kind() {
    let tmp = TempDir::new().unwrap();
    let data = generate(tmp.path(), "linear", 5_000, 0.0, 1);
    let out = tmp.path().join("o");
    let tiny = subopt(&[
        "fit", "--input", &data, "--model", "linear", "--mode", "weighted", "--size", "3", "--out-dir", p(&out),
    ]);
    assert_eq!(tiny.status.code(), Some(4), "{}", String::from_utf8_lossy(&tiny.stderr));

    let missing = subopt(&["fit", "--input", p(&tmp.path().join("nope.csv")), "--model", "linear"]);
    assert_eq!(missing.status.code(), Some(3));

    assert_eq!(subopt(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(subopt(&["experiment", "--preset", "nope", "--out-dir", p(&out)]).status.code(), Some(2));
}

fn small_experiment(preset: &str, dir: &Path, threads: &str) -> String {
    ok(&[
        "--threads", threads, "experiment", "--preset", preset, "--reps", "3", "--rows", "4000", "--fractions",
        "0.02,0.05", "--points", "--out-dir", p(dir),
    ]);
    fs::read_to_string(dir.join("report.csv")).unwrap()
}

#[test]
fn experiment_presets_have_expected_shape() {
    let tmp = TempDir::new().unwrap();
    let lin = small_experiment("paper-linear", &tmp.path().join("lin"), "1");
    let lines: Vec<&str> = lin.lines().collect();
    assert!(lines[0].starts_with("model,method,weighting,fraction,n,"));
    assert_eq!(lines.len(), 1 + 4 * 2);
    assert!(lin.contains("LEV"));

    let log = small_experiment("paper-logistic", &tmp.path().join("log"), "1");
    assert_eq!(log.lines().count(), 1 + 3 * 2);
    assert!(!log.contains("LEV"));
    let slopes = fs::read_to_string(tmp.path().join("log/slopes.csv")).unwrap();
    assert_eq!(slopes.lines().count(), 1 + 3);
    assert!(tmp.path().join("log/points.csv").exists());
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let one = small_experiment("paper-logistic", &tmp.path().join("t1"), "1");
    let four = small_experiment("paper-logistic", &tmp.path().join("t4"), "4");
    assert_eq!(one, four);
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let tmp = TempDir::new().unwrap();
    let data = generate(&tmp.path().join("d"), "linear", 10_000, 1.0, 5);
    let first = tmp.path().join("first");
    ok(&[
        "report", "--input", &data, "--model", "linear", "--sampler", "grad", "--fraction", "0.05", "--seed", "9",
        "--out-dir", p(&first),
    ]);
    let manifest = fs::read_to_string(first.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("# subopt run manifest"));
    assert!(manifest.contains("sampler = "), "{manifest}");
    assert!(manifest.contains("elapsed_seconds"));

    let second = tmp.path().join("second");
    ok(&["replay", p(&first.join("manifest.txt")), "--out-dir", p(&second)]);
    assert_eq!(fs::read(first.join("report.csv")).unwrap(), fs::read(second.join("report.csv")).unwrap());

    let exp = tmp.path().join("exp");
    small_experiment("paper-linear", &exp, "1");
    let again = tmp.path().join("exp2");
    ok(&["replay", p(&exp.join("manifest.txt")), "--out-dir", p(&again)]);
    assert_eq!(fs::read(exp.join("report.csv")).unwrap(), fs::read(again.join("report.csv")).unwrap());
}

#[test]
fn config_file_runs_like_the_equivalent_flags() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    fs::write(
        &cfg,
        "# small run\nmodel = linear\nrows = 4000\ndelta = 1\nfractions = 0.02, 0.05\nreplications = 3\n\
         methods = UNIF, GRAD\nweightings = IPW, Equal\nseed = 4\n",
    )
    .unwrap();
    let dir = tmp.path().join("cfg");
    ok(&["experiment", "--config", p(&cfg), "--out-dir", p(&dir)]);
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 2 * 2 * 2);
    assert!(report.contains("Equal"));

    fs::write(&cfg, "model = linear\nrows = ten\n").unwrap();
    assert_eq!(subopt(&["experiment", "--config", p(&cfg), "--out-dir", p(&dir)]).status.code(), Some(2));
}
