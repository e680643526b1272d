//! Replicated subsampling experiments over one synthetic population.
//!
//! Replication `r` of cell `(method, fraction)` draws all of its randomness (pilot,
//! subsample) from [`stream_rng`]`(master_seed, [method, fraction index, r])`. Records
//! are collected in task order and reduced sequentially, so reports are bit-identical
//! for any rayon thread count.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::{LossKind, LossModel, Theta};
use crate::sampling::{build_plan, fit_pilot, Pilot, Sampler, SamplingPlan, DEFAULT_FLOOR};
use crate::simulate::generators::GeneratorSpec;
use crate::simulate::streams::stream_rng;
use crate::solver::{solve_full, solve_subsample_equal, solve_subsample_weighted};
use crate::uncertainty::{amse, ci_statistic, mse_estimate, ConfidenceSpec};

/// Stream key of the fixed reference pilot used for AMSE.
const REFERENCE_KEY: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Weighting {
    /// Inverse-probability weighting, `θ̂_n`.
    Ipw,
    /// Equal weighting, `θ̃_n`.
    Equal,
}

impl Weighting {
    pub fn label(self) -> &'static str {
        match self {
            Weighting::Ipw => "IPW",
            Weighting::Equal => "Equal",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ipw" | "weighted" => Ok(Weighting::Ipw),
            "equal" => Ok(Weighting::Equal),
            other => Err(Error::invalid(format!("unknown weighting {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub generator: GeneratorSpec,
    pub fractions: Vec<f64>,
    pub replications: usize,
    pub methods: Vec<Sampler>,
    pub weightings: Vec<Weighting>,
    pub confidence_levels: Vec<f64>,
    pub master_seed: u64,
    /// Floor mix `β` for non-uniform plans.
    pub floor_beta: f64,
    /// Replication pilots use `n₀ = min(n, pilot_cap)`.
    pub pilot_cap: usize,
}

impl ExperimentConfig {
    pub const DEFAULT_FRACTIONS: [f64; 5] = [0.005, 0.01, 0.02, 0.04, 0.08];

    pub fn new(generator: GeneratorSpec, master_seed: u64) -> Self {
        Self {
            generator,
            fractions: Self::DEFAULT_FRACTIONS.to_vec(),
            replications: 1000,
            methods: Sampler::ALL.to_vec(),
            weightings: vec![Weighting::Ipw],
            confidence_levels: vec![0.90, 0.95],
            master_seed,
            floor_beta: DEFAULT_FLOOR,
            pilot_cap: 2000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::invalid("fractions must be non-empty and lie in (0, 1]"));
        }
        if self.replications == 0 {
            return Err(Error::invalid("need at least one replication"));
        }
        if self.methods.is_empty() || self.methods.contains(&Sampler::Custom) {
            return Err(Error::invalid("methods must be a non-empty subset of UNIF, LEV, GRAD, Hessian"));
        }
        if self.weightings.is_empty() {
            return Err(Error::invalid("need at least one weighting"));
        }
        for &q in &self.confidence_levels {
            ConfidenceSpec::new(q)?;
        }
        if !(0.0..1.0).contains(&self.floor_beta) {
            return Err(Error::invalid("floor_beta must lie in [0, 1)"));
        }
        let d = self.generator.model().dim();
        for &f in &self.fractions {
            if self.subsample_size(f) < 1 {
                return Err(Error::invalid(format!("fraction {f} gives an empty subsample")));
            }
        }
        if self.pilot_cap < d {
            return Err(Error::invalid(format!("pilot cap must be at least the dimension {d}")));
        }
        Ok(())
    }

    /// `round(fraction · N)`.
    pub fn subsample_size(&self, fraction: f64) -> usize {
        (fraction * self.generator.n_rows as f64).round() as usize
    }

    fn pilot_size(&self, n: usize, dim: usize) -> usize {
        n.min(self.pilot_cap).max(dim)
    }
}

/// Why a replication was excluded from aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flag {
    SingularHessian,
    NoConvergence,
    DegeneratePlan,
    Other,
}

impl From<&Error> for Flag {
    fn from(e: &Error) -> Self {
        match e {
            Error::SingularHessian | Error::SingularGram => Flag::SingularHessian,
            Error::NoConvergence(_) => Flag::NoConvergence,
            Error::DegeneratePlan => Flag::DegeneratePlan,
            _ => Flag::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpwOutcome {
    /// `θ̂_n − θ̂_N`.
    pub deviation: DVector<f64>,
    pub msehat_trace: f64,
    /// `(θ̂_n − θ̂_N)ᵀ mse⁻¹ (θ̂_n − θ̂_N)`.
    pub ci_statistic: f64,
    /// Membership of `θ̂_N` per confidence level.
    pub covered: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub method: Sampler,
    pub fraction_index: usize,
    pub rep: usize,
    pub n: usize,
    pub ipw: Option<IpwOutcome>,
    /// `θ̃_n − θ̂_N`.
    pub equal: Option<DVector<f64>>,
    pub flag: Option<Flag>,
}

/// Everything a replication needs that is shared across replications of one cell.
#[derive(Debug, Clone, Copy)]
pub struct ReplicationSetup<'a> {
    pub model: &'a LossModel,
    pub data: &'a Dataset,
    pub theta_full: &'a Theta,
    pub method: Sampler,
    /// Plan shared by every replication for samplers without a pilot.
    pub fixed_plan: Option<&'a SamplingPlan>,
    pub weightings: &'a [Weighting],
    /// `(q, χ²_d(q))` pairs.
    pub thresholds: &'a [(f64, f64)],
    pub fraction_index: usize,
    pub n: usize,
    pub pilot_size: usize,
    pub floor_beta: f64,
}

/// One Monte Carlo replication: plan (refitting the pilot when the method needs one),
/// draw, solve, and score. Failures become a flag on the record.
pub fn run_replication<R: Rng + ?Sized>(setup: &ReplicationSetup<'_>, rep: usize, rng: &mut R) -> ReplicationRecord {
    let mut record = ReplicationRecord {
        method: setup.method,
        fraction_index: setup.fraction_index,
        rep,
        n: setup.n,
        ipw: None,
        equal: None,
        flag: None,
    };
    if let Err(e) = replicate_into(setup, rng, &mut record) {
        record.flag = Some(Flag::from(&e));
    }
    record
}

fn replicate_into<R: Rng + ?Sized>(setup: &ReplicationSetup<'_>, rng: &mut R, record: &mut ReplicationRecord) -> Result<()> {
    let (model, data) = (setup.model, setup.data);
    let owned_plan;
    let mut pilot: Option<Pilot> = None;
    let plan = match setup.fixed_plan {
        Some(p) => p,
        None => {
            pilot = Some(fit_pilot(model, data, setup.pilot_size, rng)?);
            owned_plan = build_plan(setup.method, model, data, pilot.as_ref(), setup.floor_beta)?;
            &owned_plan
        }
    };
    let draw = plan.draw(setup.n, rng);
    let init = pilot.as_ref().map(|p| &p.theta0);

    if setup.weightings.contains(&Weighting::Ipw) {
        let sol = solve_subsample_weighted(model, data, &draw, init)?;
        let est = mse_estimate(model, data, &draw, &sol.theta)?;
        let stat = ci_statistic(&sol.theta, setup.theta_full, &est)?;
        record.ipw = Some(IpwOutcome {
            deviation: &sol.theta - setup.theta_full,
            msehat_trace: est.trace(),
            ci_statistic: stat,
            covered: setup.thresholds.iter().map(|&(_, t)| stat <= t).collect(),
        });
    }
    if setup.weightings.contains(&Weighting::Equal) {
        let sol = solve_subsample_equal(model, data, &draw, init)?;
        record.equal = Some(&sol.theta - setup.theta_full);
    }
    Ok(())
}

/// Raw output of an experiment before aggregation.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub model: LossModel,
    pub theta_full: Theta,
    /// Trace of the reference AMSE per `(method, fraction)`, in config order; `None` when
    /// the reference plan could not be built.
    pub amse_traces: Vec<Vec<Option<f64>>>,
    /// Records ordered by method, then fraction, then replication.
    pub records: Vec<ReplicationRecord>,
}

/// Generates the population, solves it, and runs every replication.
pub fn run_records(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let data = config.generator.generate()?;
    let model = config.generator.model();
    let theta_full = solve_full(&model, &data)?.theta;
    let d = model.dim();

    let thresholds: Vec<(f64, f64)> = config
        .confidence_levels
        .iter()
        .map(|&q| Ok((q, ConfidenceSpec::new(q)?.threshold(d))))
        .collect::<Result<_>>()?;

    let fixed_plans: Vec<Option<SamplingPlan>> = config
        .methods
        .iter()
        .map(|&m| if m.needs_pilot() { Ok(None) } else { build_plan(m, &model, &data, None, config.floor_beta).map(Some) })
        .collect::<Result<_>>()?;

    let amse_traces = config
        .methods
        .iter()
        .zip(&fixed_plans)
        .map(|(&method, fixed)| {
            config
                .fractions
                .iter()
                .enumerate()
                .map(|(fi, &f)| {
                    let n = config.subsample_size(f);
                    let plan = match fixed {
                        Some(p) => p.clone(),
                        None => {
                            let mut rng = stream_rng(config.master_seed, &[method.id(), fi as u64, REFERENCE_KEY]);
                            let pilot = fit_pilot(&model, &data, config.pilot_size(n, d), &mut rng).ok()?;
                            build_plan(method, &model, &data, Some(&pilot), config.floor_beta).ok()?
                        }
                    };
                    amse(&model, &data, &plan, &theta_full, n).ok().map(|e| e.trace())
                })
                .collect()
        })
        .collect();

    let reps = config.replications;
    let per_method = config.fractions.len() * reps;
    let total = config.methods.len() * per_method;
    let records = (0..total)
        .into_par_iter()
        .map(|task| {
            let mi = task / per_method;
            let fi = (task % per_method) / reps;
            let rep = task % reps;
            let method = config.methods[mi];
            let n = config.subsample_size(config.fractions[fi]);
            let setup = ReplicationSetup {
                model: &model,
                data: &data,
                theta_full: &theta_full,
                method,
                fixed_plan: fixed_plans[mi].as_ref(),
                weightings: &config.weightings,
                thresholds: &thresholds,
                fraction_index: fi,
                n,
                pilot_size: config.pilot_size(n, d),
                floor_beta: config.floor_beta,
            };
            let mut rng = stream_rng(config.master_seed, &[method.id(), fi as u64, rep as u64]);
            run_replication(&setup, rep, &mut rng)
        })
        .collect();

    Ok(ExperimentRun { config: config.clone(), model, theta_full, amse_traces, records })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlagCounts {
    pub singular_hessian: usize,
    pub no_convergence: usize,
    pub degenerate_plan: usize,
    pub other: usize,
}

impl FlagCounts {
    pub fn total(&self) -> usize {
        self.singular_hessian + self.no_convergence + self.degenerate_plan + self.other
    }

    fn add(&mut self, flag: Flag) {
        match flag {
            Flag::SingularHessian => self.singular_hessian += 1,
            Flag::NoConvergence => self.no_convergence += 1,
            Flag::DegeneratePlan => self.degenerate_plan += 1,
            Flag::Other => self.other += 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IpwSummary {
    /// Replication average of `(θ̂_n − θ̂_N)(θ̂_n − θ̂_N)ᵀ`.
    pub emp_mse: DMatrix<f64>,
    pub trace_emp_mse: f64,
    pub amse_trace: f64,
    /// `tr(AMSE) / tr(empirical MSE)`.
    pub amse_ratio: f64,
    pub msehat_mean_trace: f64,
    /// `mean tr(mse-hat) / tr(empirical MSE)`.
    pub msehat_ratio: f64,
    /// `(q, coverage)` pairs.
    pub coverage: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct EqualSummary {
    pub emp_mse: DMatrix<f64>,
    pub trace_emp_mse: f64,
}

#[derive(Debug, Clone)]
pub struct CellSummary {
    pub method: Sampler,
    pub fraction: f64,
    pub n: usize,
    pub replications: usize,
    /// Replications that entered the aggregates.
    pub valid: usize,
    pub flags: FlagCounts,
    pub ipw: Option<IpwSummary>,
    pub equal: Option<EqualSummary>,
    /// `tr(empMSE of θ̃_n) / tr(empMSE of θ̂_n)` when both weightings ran.
    pub equal_ipw_ratio: Option<f64>,
}

impl CellSummary {
    /// Trace of the empirical MSE of the primary weighting (IPW when present).
    pub fn primary_trace(&self) -> f64 {
        self.ipw
            .as_ref()
            .map(|s| s.trace_emp_mse)
            .or_else(|| self.equal.as_ref().map(|s| s.trace_emp_mse))
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub model: LossKind,
    pub config: ExperimentConfig,
    pub theta_full: Theta,
    pub cells: Vec<CellSummary>,
    /// `(method, fit)` for every method with at least two usable fractions.
    pub slopes: Vec<(Sampler, SlopeFit)>,
}

impl ExperimentReport {
    pub fn cell(&self, method: Sampler, fraction: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.method == method && c.fraction == fraction)
    }

    pub fn cells_for(&self, method: Sampler) -> impl Iterator<Item = &CellSummary> + '_ {
        self.cells.iter().filter(move |c| c.method == method)
    }
}

fn outer_mean<'a>(devs: impl Iterator<Item = &'a DVector<f64>>, d: usize) -> (DMatrix<f64>, usize) {
    let mut acc = DMatrix::zeros(d, d);
    let mut count = 0;
    for v in devs {
        acc += v * v.transpose();
        count += 1;
    }
    if count > 0 {
        acc /= count as f64;
    } else {
        acc.fill(f64::NAN);
    }
    (acc, count)
}

fn summarize_cell(run: &ExperimentRun, mi: usize, fi: usize, records: &[&ReplicationRecord]) -> CellSummary {
    let config = &run.config;
    let d = run.model.dim();
    let mut flags = FlagCounts::default();
    for r in records {
        if let Some(f) = r.flag {
            flags.add(f);
        }
    }
    let ok: Vec<&ReplicationRecord> = records.iter().copied().filter(|r| r.flag.is_none()).collect();
    let valid = ok.len();

    let ipw = config.weightings.contains(&Weighting::Ipw).then(|| {
        let outcomes: Vec<&IpwOutcome> = ok.iter().filter_map(|r| r.ipw.as_ref()).collect();
        let (emp_mse, count) = outer_mean(outcomes.iter().map(|o| &o.deviation), d);
        let trace_emp_mse = emp_mse.trace();
        let amse_trace = run.amse_traces[mi][fi].unwrap_or(f64::NAN);
        let msehat_mean_trace = outcomes.iter().map(|o| o.msehat_trace).sum::<f64>() / count as f64;
        let coverage = config
            .confidence_levels
            .iter()
            .enumerate()
            .map(|(li, &q)| (q, outcomes.iter().filter(|o| o.covered[li]).count() as f64 / count as f64))
            .collect();
        IpwSummary {
            emp_mse,
            trace_emp_mse,
            amse_trace,
            amse_ratio: amse_trace / trace_emp_mse,
            msehat_mean_trace,
            msehat_ratio: msehat_mean_trace / trace_emp_mse,
            coverage,
        }
    });
    let equal = config.weightings.contains(&Weighting::Equal).then(|| {
        let (emp_mse, _) = outer_mean(ok.iter().filter_map(|r| r.equal.as_ref()), d);
        EqualSummary { trace_emp_mse: emp_mse.trace(), emp_mse }
    });
    let equal_ipw_ratio = match (&ipw, &equal) {
        (Some(i), Some(e)) => Some(e.trace_emp_mse / i.trace_emp_mse),
        _ => None,
    };
    let fraction = config.fractions[fi];
    CellSummary {
        method: config.methods[mi],
        fraction,
        n: config.subsample_size(fraction),
        replications: records.len(),
        valid,
        flags,
        ipw,
        equal,
        equal_ipw_ratio,
    }
}

/// Aggregates records into per-cell summaries. `rep_limit` keeps only replications with
/// index below the limit, which reproduces a shorter run with the same seed exactly.
pub fn summarize(run: &ExperimentRun, rep_limit: Option<usize>) -> ExperimentReport {
    let config = &run.config;
    let limit = rep_limit.unwrap_or(usize::MAX);
    let mut cells = Vec::with_capacity(config.methods.len() * config.fractions.len());
    for mi in 0..config.methods.len() {
        for fi in 0..config.fractions.len() {
            let method = config.methods[mi];
            let records: Vec<&ReplicationRecord> = run
                .records
                .iter()
                .filter(|r| r.method == method && r.fraction_index == fi && r.rep < limit)
                .collect();
            cells.push(summarize_cell(run, mi, fi, &records));
        }
    }
    let mut report = ExperimentReport {
        model: run.model.kind(),
        config: config.clone(),
        theta_full: run.theta_full.clone(),
        cells,
        slopes: Vec::new(),
    };
    report.slopes = config.methods.iter().filter_map(|&m| mse_slope(&report, m).map(|s| (m, s))).collect();
    report
}

/// Runs and aggregates an experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(summarize(&run_records(config)?, None))
}

/// Ordinary least-squares fit of `log trace` against `log n`.
pub fn loglog_slope(ns: &[f64], traces: &[f64]) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(traces)
        .filter(|(n, t)| **n > 0.0 && **t > 0.0 && t.is_finite())
        .map(|(n, t)| (n.ln(), t.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(SlopeFit { slope, intercept: my - slope * mx, r_squared })
}

/// Log-log slope of the empirical MSE trace against `n` for `method`.
pub fn mse_slope(report: &ExperimentReport, method: Sampler) -> Option<SlopeFit> {
    let (ns, traces): (Vec<f64>, Vec<f64>) = report.cells_for(method).map(|c| (c.n as f64, c.primary_trace())).unzip();
    loglog_slope(&ns, &traces)
}
