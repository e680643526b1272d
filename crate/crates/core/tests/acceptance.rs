//! Desk-scale acceptance run: N = 100 000, d = 6.
//!
//! Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subopt::sampling::uniform_plan;
use subopt::simulate::{
    run_records, summarize, write_report_csv, ExperimentConfig, ExperimentReport, GeneratorKind, Preset, Weighting,
};
use subopt::solver::{solve_full, solve_subsample_weighted};
use subopt::special::chi2_quantile;
use subopt::uncertainty::{amse, mse_estimate};
use subopt::{LossKind, LossModel, Sampler};

const SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v.is_finite() && v >= lo && v <= hi
}

/// Collects every violation as text; passes when there are none.
fn all_within<'a>(items: impl Iterator<Item = (String, f64)>, lo: f64, hi: f64) -> Outcome {
    let mut worst: Vec<String> = Vec::new();
    let mut count = 0;
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (label, v) in items {
        count += 1;
        min = min.min(v);
        max = max.max(v);
        if !within(v, lo, hi) {
            worst.push(format!("{label}={v:.4}"));
        }
    }
    let detail = if worst.is_empty() {
        format!("{count} values in [{min:.4}, {max:.4}]")
    } else {
        format!("{} of {count} outside [{lo}, {hi}]: {}", worst.len(), worst.join(" "))
    };
    check(worst.is_empty() && count > 0, detail)
}

fn label(r: &ExperimentReport, m: Sampler, f: f64) -> String {
    format!("{}/{}/{f}", r.model.name(), m.label())
}

fn preset(p: Preset, reps: usize) -> ExperimentConfig {
    p.configs(reps, SEED).remove(0).1
}

fn criterion_1(reports: &[&ExperimentReport]) -> Outcome {
    all_within(
        reports.iter().flat_map(|r| r.slopes.iter().map(move |(m, fit)| (format!("{}/{}", r.model.name(), m), fit.slope))),
        -1.2,
        -0.8,
    )
}

fn ratio_cells<'a>(
    reports: &'a [&'a ExperimentReport],
    pick: impl Fn(&subopt::simulate::IpwSummary) -> f64 + Copy + 'a,
) -> impl Iterator<Item = (String, f64)> + 'a {
    reports.iter().flat_map(move |r| {
        r.cells
            .iter()
            .filter(|c| c.fraction >= 0.01)
            .map(move |c| (label(r, c.method, c.fraction), pick(c.ipw.as_ref().unwrap())))
    })
}

fn criterion_4(reports: &[&ExperimentReport]) -> Outcome {
    let mut bad = Vec::new();
    let (mut lo95, mut hi95, mut lo90, mut hi90) = (1.0f64, 0.0f64, 1.0f64, 0.0f64);
    for r in reports {
        for c in &r.cells {
            for &(q, cov) in &c.ipw.as_ref().unwrap().coverage {
                let (lo, hi) = if q == 0.95 { (0.915, 0.975) } else { (0.855, 0.935) };
                if q == 0.95 {
                    lo95 = lo95.min(cov);
                    hi95 = hi95.max(cov);
                } else {
                    lo90 = lo90.min(cov);
                    hi90 = hi90.max(cov);
                }
                if !within(cov, lo, hi) {
                    bad.push(format!("{}@{q}={cov:.3}", label(r, c.method, c.fraction)));
                }
            }
        }
    }
    let detail = format!("q=0.95 in [{lo95:.3}, {hi95:.3}], q=0.90 in [{lo90:.3}, {hi90:.3}]");
    let detail = if bad.is_empty() { detail } else { format!("{detail}; outside: {}", bad.join(" ")) };
    check(bad.is_empty(), detail)
}

fn criterion_5(reports: &[&ExperimentReport]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in reports {
        let mut rel = Vec::new();
        for c in r.cells_for(Sampler::Hessian) {
            let unif = r.cell(Sampler::Uniform, c.fraction).unwrap().primary_trace();
            rel.push(c.primary_trace() / unif);
        }
        let mean = rel.iter().sum::<f64>() / rel.len() as f64;
        let max = rel.iter().copied().fold(0.0, f64::max);
        pass &= max <= 1.05 && mean < 1.0;
        parts.push(format!("{}: Hessian/UNIF max {max:.3}, mean {mean:.3}", r.model.name()));
    }
    check(pass, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let mut ratios = Vec::new();
    for (_, mut c) in Preset::AppendixE.configs(300, SEED) {
        if c.generator.kind != GeneratorKind::LinearAr || c.generator.delta == 0.5 {
            continue;
        }
        c.fractions = vec![0.01];
        c.methods = vec![Sampler::Leverage, Sampler::Gradient, Sampler::Hessian];
        c.weightings = vec![Weighting::Ipw, Weighting::Equal];
        let report = summarize(&run_records(&c).unwrap(), None);
        for cell in &report.cells {
            ratios.push((c.generator.delta, cell.method, cell.equal_ipw_ratio.unwrap_or(f64::NAN)));
        }
    }
    let get = |delta: f64, m: Sampler| ratios.iter().find(|r| r.0 == delta && r.1 == m).map_or(f64::NAN, |r| r.2);
    let (g0, h0, l0, l1) = (
        get(0.0, Sampler::Gradient),
        get(0.0, Sampler::Hessian),
        get(0.0, Sampler::Leverage),
        get(1.0, Sampler::Leverage),
    );
    let extra: Vec<String> = ratios
        .iter()
        .filter(|r| r.0 == 1.0 && r.1 != Sampler::Leverage)
        .map(|r| format!("{}@δ=1 {:.3}", r.1.label(), r.2))
        .collect();
    check(
        g0 > 2.0 && h0 > 2.0 && l0 < 1.0 && l1 > 1.2,
        format!(
            "equal/IPW: GRAD@δ=0 {g0:.3} (>2), Hessian@δ=0 {h0:.3} (>2), LEV@δ=0 {l0:.3} (<1), LEV@δ=1 {l1:.3} (>1.2); {}",
            extra.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let (mut g_worst, mut h_worst) = (0.0f64, 0.0f64);
    for case in 0..200u64 {
        let kind = if case % 2 == 0 { LossKind::Squared } else { LossKind::Logistic };
        let data = random_dataset(kind, 10, 5, case);
        let theta = DVector::from_fn(5, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let (g, h) = finite_difference_errors(&LossModel::new(kind, 5), &data, &theta, case as usize % 10);
        g_worst = g_worst.max(g);
        h_worst = h_worst.max(h);
    }
    if g_worst > 1e-5 || h_worst > 1e-4 {
        failures.push(format!("finite differences {g_worst:.1e}/{h_worst:.1e}"));
    }

    let mut unbiased = 0.0f64;
    for case in 0..100u64 {
        let kind = if case % 2 == 0 { LossKind::Squared } else { LossKind::Logistic };
        let n_rows = 1 + case as usize % 5;
        let data = random_dataset(kind, n_rows, 3, case);
        let plan = if case % 3 == 0 { uniform_plan(n_rows) } else { skewed_plan(n_rows, case) };
        let theta = DVector::from_fn(3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        unbiased = unbiased.max(unbiasedness_gap(&LossModel::new(kind, 3), &data, &plan, &theta));
    }
    if unbiased > 1e-12 {
        failures.push(format!("unbiasedness gap {unbiased:.1e}"));
    }

    let mut ols_gap = 0.0f64;
    for case in 0..50u64 {
        let data = random_dataset(LossKind::Squared, 20 + 10 * case as usize, 6, case);
        let sol = solve_full(&LossModel::squared(6), &data).unwrap();
        ols_gap = ols_gap.max(rel_err(sol.theta.as_slice(), ols_closed_form(&data).as_slice()));
    }
    if ols_gap > 1e-8 {
        failures.push(format!("Newton vs OLS {ols_gap:.1e}"));
    }

    let (mut asym, mut neg) = (0.0f64, 0.0f64);
    for case in 0..40u64 {
        let kind = if case % 2 == 0 { LossKind::Squared } else { LossKind::Logistic };
        let data = random_dataset(kind, 400, 4, case);
        let model = LossModel::new(kind, 4);
        let full = solve_full(&model, &data).unwrap();
        let plan = skewed_plan(400, case);
        let a = amse(&model, &data, &plan, &full.theta, 60).unwrap();
        let draw = plan.draw(60, &mut rng);
        let mut mats = vec![a.matrix];
        if let Ok(sub) = solve_subsample_weighted(&model, &data, &draw, None) {
            mats.push(mse_estimate(&model, &data, &draw, &sub.theta).unwrap().matrix);
        }
        for m in &mats {
            let (s, e) = symmetry_and_psd(m);
            asym = asym.max(s);
            neg = neg.min(e);
        }
    }
    if asym > 1e-10 || neg < -1e-10 {
        failures.push(format!("sandwich asymmetry {asym:.1e}, min eigen ratio {neg:.1e}"));
    }

    let mut scale_gap = 0.0f64;
    for (case, c) in [(0u64, 2.0), (1, 0.25), (2, -3.0), (3, 10.0)] {
        for kind in [LossKind::Squared, LossKind::Logistic] {
            let data = random_dataset(kind, 2_000, 4, case);
            let (gap, same) = hessian_scale_gap(&LossModel::new(kind, 4), &data, c, case);
            scale_gap = scale_gap.max(if same { gap } else { f64::INFINITY });
        }
    }
    if scale_gap > 1e-8 {
        failures.push(format!("Hessian-plan scale invariance {scale_gap:.1e}"));
    }

    let mut chi2_gap = 0.0f64;
    for k in 1..1000 {
        let q = k as f64 / 1000.0;
        chi2_gap = chi2_gap.max((chi2_quantile(2, q) / chi2_dof2_oracle(q) - 1.0).abs());
        chi2_gap = chi2_gap.max((chi2_quantile(1, q) / chi2_dof1_oracle(q) - 1.0).abs());
    }
    if chi2_gap > 1e-8 {
        failures.push(format!("chi2 quantile {chi2_gap:.1e}"));
    }

    let p_uniform = draw_gof_p_value(&uniform_plan(10), 1_000_000, SEED);
    let p_skewed = draw_gof_p_value(&skewed_plan(20, SEED), 200_000, SEED);
    if p_uniform <= 1e-4 || p_skewed <= 1e-4 {
        failures.push(format!("draw GOF p = {p_uniform:.2e}, {p_skewed:.2e}"));
    }

    let mut small = ExperimentConfig::new(subopt::simulate::GeneratorSpec::logistic(5_000, 0.5, 8), SEED);
    small.fractions = vec![0.02, 0.04];
    small.replications = 10;
    small.weightings = vec![Weighting::Ipw, Weighting::Equal];
    let csv_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let run = pool.install(|| run_records(&small).unwrap());
        let mut buf = Vec::new();
        write_report_csv(&summarize(&run, None), &mut buf).unwrap();
        (run.records, buf)
    };
    if csv_with(1) != csv_with(4) {
        failures.push("thread-count determinism".into());
    }

    let detail = format!(
        "fd {g_worst:.1e}/{h_worst:.1e}, unbiased {unbiased:.1e}, ols {ols_gap:.1e}, sandwich {asym:.1e}/{neg:.1e}, \
         scale {scale_gap:.1e}, chi2 {chi2_gap:.1e}, gof p {p_uniform:.3}/{p_skewed:.3}, threads 1 vs 4 identical: {}",
        !failures.iter().any(|f| f.starts_with("thread"))
    );
    if failures.is_empty() {
        check(true, detail)
    } else {
        check(false, format!("{detail}; failed: {}", failures.join(", ")))
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    let lin_run = run_records(&preset(Preset::PaperLinear, 1000)).expect("linear experiment");
    let log_run = run_records(&preset(Preset::PaperLogistic, 1000)).expect("logistic experiment");
    let lin = summarize(&lin_run, None);
    let log = summarize(&log_run, None);
    let lin300 = summarize(&lin_run, Some(300));
    let log300 = summarize(&log_run, Some(300));
    let both = [&lin, &log];

    results.push(("1 O(1/n) rate: log-log slopes in [-1.2, -0.8], 300 reps", criterion_1(&[&lin300, &log300])));
    results.push((
        "2 AMSE ratio in [0.85, 1.12], fractions >= 0.01, 1000 reps",
        all_within(ratio_cells(&both, |s| s.amse_ratio), 0.85, 1.12),
    ));
    results.push((
        "3 mse-hat ratio in [0.85, 1.12], fractions >= 0.01, 1000 reps",
        all_within(ratio_cells(&both, |s| s.msehat_ratio), 0.85, 1.12),
    ));
    results.push(("4 coverage: q=0.95 in [0.915, 0.975], q=0.90 in [0.855, 0.935]", criterion_4(&both)));
    results.push(("5 Hessian <= 1.05 x UNIF per fraction, smaller on average", criterion_5(&both)));
    results.push(("6 equal/IPW ratios at fraction 0.01, 300 reps", criterion_6()));
    results.push(("7 property suites and thread-count determinism", criterion_7()));

    let flagged: usize = both.iter().flat_map(|r| r.cells.iter()).map(|c| c.flags.total()).sum();
    let unif = |r: &ExperimentReport, f: f64| r.cell(Sampler::Uniform, f).unwrap().ipw.clone().unwrap();
    let grad = log.cell(Sampler::Gradient, 0.04).unwrap().ipw.clone().unwrap();
    let examples = [
        ("linear UNIF 0.01 AMSE ratio ~ 0.953 +- 0.1", unif(&lin, 0.01).amse_ratio, 0.853, 1.053),
        ("logistic GRAD 0.04 mse-hat ratio ~ 0.992 +- 0.1", grad.msehat_ratio, 0.892, 1.092),
        ("linear UNIF 0.01 coverage at 0.95 in [0.92, 0.975]", unif(&lin, 0.01).coverage[1].1, 0.92, 0.975),
    ];

    let mut all_pass = true;
    for (name, o) in &results {
        all_pass &= o.pass;
        println!("[{}] criterion {name} :: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    for (name, v, lo, hi) in examples {
        let pass = within(v, lo, hi);
        all_pass &= pass;
        println!("[{}] example {name} :: {v:.4}", if pass { "PASS" } else { "FAIL" });
    }
    println!("flagged replications (excluded): {flagged}; elapsed {:.0}s", start.elapsed().as_secs_f64());
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
