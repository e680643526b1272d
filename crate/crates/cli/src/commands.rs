use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::Parser;
use serde_json::{json, Map, Value};
use subopt::sampling::{build_plan, default_pilot_size, fit_pilot, with_uniform_fallback, Pilot, DEFAULT_FLOOR};
use subopt::simulate::{
    run_experiment, stream_rng, write_points_csv, write_report_csv, write_slopes_csv, ExperimentConfig,
    GeneratorKind, GeneratorSpec, Preset,
};
use subopt::solver::{solve_full, solve_subsample_equal, solve_subsample_weighted};
use subopt::uncertainty::{amse, ci_statistic, mse_estimate, mspe};
use subopt::{ConfidenceSpec, Dataset, LossKind, LossModel, Sampler, SamplingPlan};

use crate::manifest;
use crate::{
    Cli, ExperimentArgs, FitArgs, Format, GenerateArgs, Mode, ModelArg, PlanArgs, ReplayArgs, ReportArgs,
    SubsampleArgs, Failure,
};

type CmdResult = Result<(), Failure>;

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("cannot create {}: {e}", path.display())))
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
}

pub fn generate(a: &GenerateArgs, argv: &[String]) -> CmdResult {
    let kind = match a.model {
        ModelArg::Linear => GeneratorKind::LinearAr,
        ModelArg::Logistic => GeneratorKind::LogisticDiag,
    };
    let spec = GeneratorSpec::new(kind, a.n, a.delta, a.seed);
    spec.validate()?;
    let body = format!("model = {}\nrows = {}\ndelta = {:?}\nseed = {}\n", kind, a.n, a.delta, a.seed);
    let guard = manifest::write(&a.out_dir, argv, &body, &["data.csv", "truth.txt"])?;
    let data = spec.generate()?;
    let mut w = create(&a.out_dir.join("data.csv"))?;
    data.to_csv_writer(&mut w)?;
    w.flush()?;
    let truth = format!("{body}theta_true = {}\n", join(spec.theta_true().as_slice()));
    fs::write(a.out_dir.join("truth.txt"), truth)?;
    guard.finish()?;
    println!("wrote {} rows x {} columns to {}", data.n_rows(), data.n_cols() + 1, a.out_dir.join("data.csv").display());
    Ok(())
}

fn loss_kind(m: ModelArg) -> LossKind {
    match m {
        ModelArg::Linear => LossKind::Squared,
        ModelArg::Logistic => LossKind::Logistic,
    }
}

fn load(sub: &SubsampleArgs) -> Result<(Dataset, LossModel), Failure> {
    if !sub.input.exists() {
        return Err(Failure::io(format!("{} does not exist", sub.input.display())));
    }
    let data = Dataset::read_csv(&sub.input, true)?;
    let model = LossModel::new(loss_kind(sub.model), data.n_cols());
    model.validate(&data)?;
    Ok((data, model))
}

/// Draw size from `--size` or `--fraction`, if either is given.
fn draw_size(sub: &SubsampleArgs, n_rows: usize) -> Result<Option<usize>, Failure> {
    let n = match (sub.size, sub.fraction) {
        (Some(n), _) => Some(n),
        (None, Some(f)) => {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Failure::usage(format!("--fraction {f} must lie in (0, 1]")));
            }
            Some((f * n_rows as f64).round() as usize)
        }
        (None, None) => None,
    };
    if n == Some(0) {
        return Err(Failure::usage("the subsample size rounds to 0"));
    }
    Ok(n)
}

fn plan_resolved_body(sub: &SubsampleArgs, n: Option<usize>, beta: f64, n0: Option<usize>) -> String {
    let mut s = format!(
        "input = {}\nmodel = {}\nsampler = {}\nfloor_beta = {beta:?}\nseed = {}\n",
        sub.input.display(),
        sub.model.name(),
        sub.sampler.sampler(),
        sub.seed
    );
    if let Some(n) = n {
        s.push_str(&format!("n = {n}\n"));
    }
    if let Some(n0) = n0 {
        s.push_str(&format!("pilot_size = {n0}\n"));
    }
    s
}

struct Prepared {
    data: Dataset,
    model: LossModel,
    n: Option<usize>,
    plan: SamplingPlan,
    pilot: Option<Pilot>,
    rng: rand_chacha::ChaCha8Rng,
}

struct Resolved {
    data: Dataset,
    model: LossModel,
    n: Option<usize>,
    beta: f64,
    n0: Option<usize>,
}

fn resolve(sub: &SubsampleArgs) -> Result<Resolved, Failure> {
    let (data, model) = load(sub)?;
    let n = draw_size(sub, data.n_rows())?;
    let sampler = sub.sampler.sampler();
    let beta = sub.floor_beta.unwrap_or(if sampler == Sampler::Uniform { 0.0 } else { DEFAULT_FLOOR });
    let n0 = sampler.needs_pilot().then(|| {
        sub.pilot_size
            .unwrap_or_else(|| default_pilot_size(n.unwrap_or(data.n_rows()), model.dim()).max(model.dim()))
    });
    Ok(Resolved { data, model, n, beta, n0 })
}

fn prepare(r: Resolved, sub: &SubsampleArgs) -> Result<Prepared, Failure> {
    let sampler = sub.sampler.sampler();
    let mut rng = stream_rng(sub.seed, &[sampler.id()]);
    let pilot = match r.n0 {
        Some(n0) => Some(fit_pilot(&r.model, &r.data, n0, &mut rng)?),
        None => None,
    };
    let plan = build_plan(sampler, &r.model, &r.data, pilot.as_ref(), r.beta);
    let plan = if sub.fallback_uniform { with_uniform_fallback(plan, r.data.n_rows()) } else { plan }?;
    Ok(Prepared { data: r.data, model: r.model, n: r.n, plan, pilot, rng })
}

/// Ordered key/value output, rendered as `quantity,value` CSV or a JSON object.
struct Output {
    fields: Map<String, Value>,
}

impl Output {
    fn new() -> Self {
        Self { fields: Map::new() }
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.fields.insert(key.to_string(), value.into());
    }

    fn put_vec(&mut self, key: &str, values: &[f64]) {
        self.fields.insert(key.to_string(), json!(values));
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.fields).expect("json") + "\n",
            Format::Csv => {
                let mut s = String::from("quantity,value\n");
                for (k, v) in &self.fields {
                    match v {
                        Value::Array(items) => {
                            for (j, item) in items.iter().enumerate() {
                                s.push_str(&format!("{k}_{j},{}\n", scalar(item)));
                            }
                        }
                        other => s.push_str(&format!("{k},{}\n", scalar(other))),
                    }
                }
                s
            }
        }
    }

    fn emit(&self, format: Format, dir: &Path, stem: &str) -> CmdResult {
        let text = self.render(format);
        let ext = if format == Format::Json { "json" } else { "csv" };
        fs::write(dir.join(format!("{stem}.{ext}")), &text)?;
        print!("{text}");
        Ok(())
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.as_f64().map(|x| format!("{x:?}")).unwrap_or_else(|| n.to_string()),
        other => other.to_string(),
    }
}

fn output_name(format: Format, stem: &str) -> String {
    format!("{stem}.{}", if format == Format::Json { "json" } else { "csv" })
}

pub fn fit(a: &FitArgs, argv: &[String]) -> CmdResult {
    if a.ci.is_some() && a.mode != Mode::Weighted {
        return Err(Failure::usage("--ci needs --mode weighted"));
    }
    if a.candidate.is_some() && a.ci.is_none() {
        return Err(Failure::usage("--candidate needs --ci"));
    }
    let ci = a.ci.map(ConfidenceSpec::new).transpose()?;
    let r = resolve(&a.sub)?;
    if a.mode != Mode::Full && r.n.is_none() {
        return Err(Failure::usage("subsampled fits need --fraction or --size"));
    }
    if let Some(c) = &a.candidate {
        if c.len() != r.model.dim() {
            return Err(Failure::usage(format!("--candidate has {} entries, expected {}", c.len(), r.model.dim())));
        }
    }
    let mut body = plan_resolved_body(&a.sub, r.n, r.beta, r.n0);
    body.push_str(&format!("mode = {:?}\n", a.mode).to_lowercase());
    if let Some(q) = a.ci {
        body.push_str(&format!("ci = {q:?}\n"));
    }
    let guard = manifest::write(&a.out_dir, argv, &body, &[&output_name(a.format, "fit")])?;

    let mut out = Output::new();
    out.put("model", a.sub.model.name());
    out.put("mode", format!("{:?}", a.mode).to_lowercase());
    match a.mode {
        Mode::Full => {
            let (data, model) = (r.data, r.model);
            let sol = solve_full(&model, &data)?;
            out.put("N", data.n_rows());
            out.put_vec("theta", sol.theta.as_slice());
            out.put("grad_norm", sol.grad_norm);
            out.put("iterations", sol.iterations);
            out.put("objective", sol.objective);
        }
        Mode::Weighted | Mode::Equal => {
            let mut p = prepare(r, &a.sub)?;
            let n = p.n.expect("checked above");
            let draw = p.plan.draw(n, &mut p.rng);
            let init = p.pilot.as_ref().map(|p| &p.theta0);
            out.put("sampler", a.sub.sampler.sampler().label());
            out.put("N", p.data.n_rows());
            out.put("n", n);
            let sol = if a.mode == Mode::Weighted {
                solve_subsample_weighted(&p.model, &p.data, &draw, init)?
            } else {
                solve_subsample_equal(&p.model, &p.data, &draw, init)?
            };
            out.put_vec("theta", sol.theta.as_slice());
            out.put("grad_norm", sol.grad_norm);
            out.put("iterations", sol.iterations);
            if let Some(spec) = ci {
                let est = mse_estimate(&p.model, &p.data, &draw, &sol.theta)?;
                let threshold = spec.threshold(p.model.dim());
                out.put("msehat_trace", est.trace());
                out.put("ci_level", spec.level());
                out.put("chi2_threshold", threshold);
                if let Some(c) = &a.candidate {
                    let c = subopt::Theta::from_column_slice(c);
                    let stat = ci_statistic(&sol.theta, &c, &est)?;
                    out.put("ci_statistic", stat);
                    out.put("in_region", stat <= threshold);
                }
            }
        }
    }
    out.emit(a.format, &a.out_dir, "fit")?;
    guard.finish()
}

pub fn plan(a: &PlanArgs, argv: &[String]) -> CmdResult {
    let r = resolve(&a.sub)?;
    let body = plan_resolved_body(&a.sub, r.n, r.beta, r.n0);
    let guard = manifest::write(&a.out_dir, argv, &body, &["plan.csv"])?;
    let p = prepare(r, &a.sub)?;
    let path = a.out_dir.join("plan.csv");
    let mut w = create(&path)?;
    p.plan.write_csv(&mut w)?;
    w.flush()?;
    let probs = p.plan.probs();
    let n_rows = probs.len() as f64;
    let min = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = probs.iter().copied().fold(0.0, f64::max);
    println!(
        "{} plan over {} rows (floor {}): min N·π = {:.4}, max N·π = {:.4}; wrote {}",
        p.plan.sampler(),
        probs.len(),
        p.plan.floor(),
        min * n_rows,
        max * n_rows,
        path.display()
    );
    guard.finish()
}

pub fn report(a: &ReportArgs, argv: &[String]) -> CmdResult {
    let levels: Vec<ConfidenceSpec> = a.ci.iter().map(|&q| ConfidenceSpec::new(q)).collect::<Result<_, _>>()?;
    let r = resolve(&a.sub)?;
    let Some(n) = r.n else {
        return Err(Failure::usage("report needs --fraction or --size"));
    };
    if let Some(x) = &a.predict {
        if x.len() != r.model.dim() {
            return Err(Failure::usage(format!("--predict has {} entries, expected {}", x.len(), r.model.dim())));
        }
    }
    let mut body = plan_resolved_body(&a.sub, r.n, r.beta, r.n0);
    body.push_str(&format!("levels = {}\n", join(&a.ci)));
    let guard = manifest::write(&a.out_dir, argv, &body, &[&output_name(a.format, "report")])?;

    let mut p = prepare(r, &a.sub)?;
    let full = solve_full(&p.model, &p.data)?;
    let amse_est = amse(&p.model, &p.data, &p.plan, &full.theta, n)?;
    let draw = p.plan.draw(n, &mut p.rng);
    let init = p.pilot.as_ref().map(|p| &p.theta0);
    let sub = solve_subsample_weighted(&p.model, &p.data, &draw, init)?;
    let est = mse_estimate(&p.model, &p.data, &draw, &sub.theta)?;
    let stat = ci_statistic(&sub.theta, &full.theta, &est)?;

    let mut out = Output::new();
    out.put("model", a.sub.model.name());
    out.put("sampler", a.sub.sampler.sampler().label());
    out.put("N", p.data.n_rows());
    out.put("n", n);
    out.put_vec("theta_full", full.theta.as_slice());
    out.put_vec("theta_sub", sub.theta.as_slice());
    out.put("squared_error", (&sub.theta - &full.theta).norm_squared());
    out.put("amse_trace", amse_est.trace());
    out.put("msehat_trace", est.trace());
    out.put_vec("amse_diag", amse_est.matrix.diagonal().as_slice());
    out.put_vec("msehat_diag", est.matrix.diagonal().as_slice());
    out.put("ci_statistic", stat);
    for spec in &levels {
        let pct = (spec.level() * 100.0).round() as i64;
        out.put(&format!("covers{pct}"), stat <= spec.threshold(p.model.dim()));
    }
    if let Some(x) = &a.predict {
        let g = subopt::Theta::from_column_slice(x);
        out.put("mspe_amse", mspe(&g, &amse_est));
        out.put("mspe_msehat", mspe(&g, &est));
    }
    out.emit(a.format, &a.out_dir, "report")?;
    guard.finish()
}

/// Reads a config file that is either a full experiment config or a preset selection
/// (`preset`, `replications`, `seed`).
fn configs_from_file(path: &Path, a: &ExperimentArgs) -> Result<(String, Vec<(String, ExperimentConfig)>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    let pairs: Vec<(&str, &str)> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.trim(), v.trim())))
        .collect();
    if let Some((_, name)) = pairs.iter().find(|(k, _)| *k == "preset") {
        let get = |key: &str| pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let reps = match get("replications") {
            Some(v) => Some(v.parse().map_err(|_| Failure::usage(format!("bad replications {v:?}")))?),
            None => None,
        };
        let seed = match get("seed") {
            Some(v) => Some(v.parse().map_err(|_| Failure::usage(format!("bad seed {v:?}")))?),
            None => None,
        };
        return preset_configs(name, a.reps.or(reps), a.seed.or(seed));
    }
    let mut c = ExperimentConfig::parse(&text)?;
    if let Some(r) = a.reps {
        c.replications = r;
    }
    if let Some(s) = a.seed {
        c.master_seed = s;
    }
    Ok((c.to_text(), vec![(c.generator.kind.to_string(), c)]))
}

fn preset_configs(
    name: &str,
    reps: Option<usize>,
    seed: Option<u64>,
) -> Result<(String, Vec<(String, ExperimentConfig)>), Failure> {
    let preset: Preset = name.parse()?;
    let reps = reps.unwrap_or(1000);
    let seed = seed.unwrap_or(1);
    let configs = preset.configs(reps, seed);
    let body = if configs.len() == 1 {
        configs[0].1.to_text()
    } else {
        format!("preset = {preset}\nreplications = {reps}\nseed = {seed}\n")
    };
    Ok((body, configs))
}

pub fn experiment(a: &ExperimentArgs, argv: &[String]) -> CmdResult {
    let (mut body, mut configs) = match (&a.preset, &a.config) {
        (Some(name), None) => preset_configs(name, a.reps, a.seed)?,
        (None, Some(path)) => configs_from_file(path, a)?,
        _ => return Err(Failure::usage("experiment needs --preset or --config")),
    };
    let overridden = a.fractions.is_some() || a.methods.is_some() || a.rows.is_some();
    let methods: Option<Vec<Sampler>> =
        a.methods.as_ref().map(|m| m.iter().map(|s| s.parse()).collect()).transpose()?;
    for (_, c) in &mut configs {
        if let Some(f) = &a.fractions {
            c.fractions = f.clone();
        }
        if let Some(m) = &methods {
            c.methods = m.clone();
        }
        if let Some(r) = a.rows {
            c.generator.n_rows = r;
        }
        c.validate()?;
    }
    if overridden && configs.len() == 1 {
        body = configs[0].1.to_text();
    }

    let mut outputs = vec!["report.csv", "slopes.csv"];
    if a.points {
        outputs.push("points.csv");
    }
    if configs.len() == 1 {
        let (_, c) = &configs[0];
        let guard = manifest::write(&a.out_dir, argv, &body, &outputs)?;
        run_one(c, &a.out_dir, a.points)?;
        return guard.finish();
    }
    let labels: Vec<String> = configs.iter().map(|(l, _)| format!("{l}/")).collect();
    let top: Vec<&str> = labels.iter().map(String::as_str).collect();
    let guard = manifest::write(&a.out_dir, argv, &body, &top)?;
    for (label, c) in &configs {
        let dir = a.out_dir.join(label);
        let sub = manifest::write(&dir, argv, &c.to_text(), &outputs)?;
        println!("== {label}");
        run_one(c, &dir, a.points)?;
        sub.finish()?;
    }
    guard.finish()
}

fn run_one(c: &ExperimentConfig, dir: &Path, points: bool) -> CmdResult {
    let report = run_experiment(c)?;
    let mut w = create(&dir.join("report.csv"))?;
    write_report_csv(&report, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("slopes.csv"))?;
    write_slopes_csv(&report, &mut w)?;
    w.flush()?;
    if points {
        let mut w = create(&dir.join("points.csv"))?;
        write_points_csv(&report, &mut w)?;
        w.flush()?;
    }
    let flagged: usize = report.cells.iter().map(|c| c.flags.total()).sum();
    for (m, fit) in &report.slopes {
        println!("{} {}: slope {:.3} (R² {:.3})", report.model.name(), m, fit.slope, fit.r_squared);
    }
    println!("{} cells, {flagged} flagged replications; wrote {}", report.cells.len(), dir.display());
    Ok(())
}

pub fn replay(a: &ReplayArgs) -> CmdResult {
    let mut argv = manifest::read_argv(&a.manifest)?;
    if let Some(dir) = &a.out_dir {
        argv = manifest::with_out_dir(argv, dir);
    }
    if argv.get(1).map(String::as_str) == Some("replay") {
        return Err(Failure::usage("a manifest cannot replay a replay"));
    }
    let cli = Cli::try_parse_from(&argv).map_err(|e| Failure::usage(e.to_string()))?;
    crate::run(cli, &argv)
}
