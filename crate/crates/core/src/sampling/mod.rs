//! Sampling-probability plans and with-replacement subsample draws.
//!
//! Every non-uniform plan mixes its normalized scores with the uniform distribution,
//! `π_i = (1 − β) s_i / Σ s + β / N`, which guarantees `N π_i ≥ β` and keeps the
//! inverse-probability weights bounded.

mod alias;
mod pilot;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::loss::LossModel;

pub use alias::AliasTable;
pub use pilot::{default_pilot_size, fit_pilot, fit_pilot_on, Pilot};

/// Default floor mix for the leverage, gradient and Hessian plans.
pub const DEFAULT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sampler {
    Uniform,
    Leverage,
    Gradient,
    Hessian,
    /// A plan built directly from caller-supplied probabilities.
    Custom,
}

impl Sampler {
    pub const ALL: [Sampler; 4] = [Sampler::Uniform, Sampler::Leverage, Sampler::Gradient, Sampler::Hessian];

    /// Label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Sampler::Uniform => "UNIF",
            Sampler::Leverage => "LEV",
            Sampler::Gradient => "GRAD",
            Sampler::Hessian => "Hessian",
            Sampler::Custom => "custom",
        }
    }

    /// Stable numeric id, used when deriving random streams.
    pub fn id(self) -> u64 {
        match self {
            Sampler::Uniform => 0,
            Sampler::Leverage => 1,
            Sampler::Gradient => 2,
            Sampler::Hessian => 3,
            Sampler::Custom => 4,
        }
    }

    /// Whether building the plan needs a pilot fit.
    pub fn needs_pilot(self) -> bool {
        matches!(self, Sampler::Gradient | Sampler::Hessian)
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unif" | "uniform" => Ok(Sampler::Uniform),
            "lev" | "leverage" => Ok(Sampler::Leverage),
            "grad" | "gradient" => Ok(Sampler::Gradient),
            "hessian" | "hess" => Ok(Sampler::Hessian),
            other => Err(Error::invalid(format!("unknown sampler {other:?}"))),
        }
    }
}

/// A probability vector over the `N` rows together with its alias table.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    sampler: Sampler,
    probs: Vec<f64>,
    floor: f64,
    table: AliasTable,
}

impl SamplingPlan {
    /// Wraps an already normalized probability vector.
    pub fn from_probs(probs: Vec<f64>, sampler: Sampler, floor: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("a plan needs at least one row"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total = compensated_sum(&probs);
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let table = AliasTable::new(&probs);
        Ok(Self { sampler, probs, floor, table })
    }

    /// Builds a plan from non-negative raw scores via [`apply_floor`].
    pub fn from_scores(scores: &[f64], floor: f64, sampler: Sampler) -> Result<Self> {
        let probs = apply_floor(scores, floor)?;
        Self::from_probs(probs, sampler, floor)
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn n_rows(&self) -> usize {
        self.probs.len()
    }

    pub fn table(&self) -> &AliasTable {
        &self.table
    }

    /// `n` independent draws with replacement.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> SampleDraw {
        let indices: Vec<usize> = (0..n).map(|_| self.table.sample(rng)).collect();
        let pi_values = indices.iter().map(|&i| self.probs[i]).collect();
        SampleDraw { indices, pi_values, sampler: self.sampler }
    }

    /// Writes `index,probability` lines with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["index", "probability"])?;
        for (i, p) in self.probs.iter().enumerate() {
            wtr.write_record([i.to_string(), p.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// The with-replacement subsample `S`: drawn row indices (repeats kept) and their `π`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDraw {
    indices: Vec<usize>,
    pi_values: Vec<f64>,
    sampler: Sampler,
}

impl SampleDraw {
    /// Pairs indices with probabilities taken from `plan`.
    pub fn from_plan_indices(plan: &SamplingPlan, indices: Vec<usize>) -> Result<Self> {
        let mut pi_values = Vec::with_capacity(indices.len());
        for &i in &indices {
            match plan.probs.get(i) {
                Some(&p) if p > 0.0 => pi_values.push(p),
                Some(_) => return Err(Error::invalid(format!("row {i} has zero probability"))),
                None => return Err(Error::invalid(format!("row {i} is out of range"))),
            }
        }
        if indices.is_empty() {
            return Err(Error::invalid("a draw needs at least one row"));
        }
        Ok(Self { indices, pi_values, sampler: plan.sampler })
    }

    /// Every row exactly once under uniform `π = 1/N`, so `n = N`.
    pub fn enumerate_uniform(n_rows: usize) -> Self {
        let p = 1.0 / n_rows as f64;
        Self { indices: (0..n_rows).collect(), pi_values: vec![p; n_rows], sampler: Sampler::Uniform }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pi_values(&self) -> &[f64] {
        &self.pi_values
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `(index, π)` pairs in draw order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.pi_values.iter().copied())
    }

    /// The same multiset ordered by row index.
    pub fn sorted(&self) -> Self {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&k| self.indices[k]);
        self.permuted(&order)
    }

    /// The same multiset in a different order; `order` is a permutation of `0..n`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            indices: order.iter().map(|&k| self.indices[k]).collect(),
            pi_values: order.iter().map(|&k| self.pi_values[k]).collect(),
            sampler: self.sampler,
        }
    }
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `π_i = (1 − β) s_i / Σ s + β / N`.
pub fn apply_floor(raw_scores: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("floor mix β = {beta} is outside [0, 1)")));
    }
    if raw_scores.is_empty() {
        return Err(Error::invalid("no scores"));
    }
    if raw_scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::invalid("scores must be finite and non-negative"));
    }
    let total = compensated_sum(raw_scores);
    if total <= 0.0 {
        return Err(Error::DegeneratePlan);
    }
    let n = raw_scores.len() as f64;
    let mix = (1.0 - beta) / total;
    let base = beta / n;
    Ok(raw_scores.iter().map(|s| mix * s + base).collect())
}

/// All `π_i = 1/N`.
pub fn uniform_plan(n_rows: usize) -> SamplingPlan {
    assert!(n_rows >= 1, "uniform plan needs N >= 1");
    SamplingPlan::from_probs(vec![1.0 / n_rows as f64; n_rows], Sampler::Uniform, 0.0)
        .expect("uniform probabilities are valid")
}

/// Statistical leverages `h_ii = x_iᵀ (XᵀX)⁻¹ x_i`.
pub fn leverage_scores(data: &Dataset) -> Result<Vec<f64>> {
    let gram_inv = SpdFactor::new(&data.gram()).ok_or(Error::SingularGram)?.inverse();
    let d = data.n_cols();
    let mut buf = vec![0.0; d];
    Ok(data
        .rows()
        .map(|x| {
            mat_vec(gram_inv.as_slice(), d, x, &mut buf);
            x.iter().zip(&buf).map(|(a, b)| a * b).sum::<f64>().max(0.0)
        })
        .collect())
}

pub fn leverage_plan(data: &Dataset, beta: f64) -> Result<SamplingPlan> {
    SamplingPlan::from_scores(&leverage_scores(data)?, beta, Sampler::Leverage)
}

/// `‖∇f(θ̂₀; x_i)‖` for every row.
pub fn gradient_scores(model: &LossModel, data: &Dataset, pilot: &Pilot) -> Vec<f64> {
    let mut g = vec![0.0; model.dim()];
    (0..data.n_rows())
        .map(|i| {
            model.point_grad_into(data, &pilot.theta0, i, &mut g);
            norm(&g)
        })
        .collect()
}

pub fn gradient_plan(model: &LossModel, data: &Dataset, pilot: &Pilot, beta: f64) -> Result<SamplingPlan> {
    SamplingPlan::from_scores(&gradient_scores(model, data, pilot), beta, Sampler::Gradient)
}

/// `‖Σ̂₀⁻¹ ∇f(θ̂₀; x_i)‖` for every row: the length of each row's Newton direction.
/// `Σ̂₀` is factorized once and its inverse reused across all rows.
pub fn hessian_scores(model: &LossModel, data: &Dataset, pilot: &Pilot) -> Result<Vec<f64>> {
    let d = model.dim();
    let inv = SpdFactor::new(&pilot.sigma0).ok_or(Error::SingularHessian)?.inverse();
    let mut g = vec![0.0; d];
    let mut dir = vec![0.0; d];
    Ok((0..data.n_rows())
        .map(|i| {
            model.point_grad_into(data, &pilot.theta0, i, &mut g);
            mat_vec(inv.as_slice(), d, &g, &mut dir);
            norm(&dir)
        })
        .collect())
}

pub fn hessian_plan(model: &LossModel, data: &Dataset, pilot: &Pilot, beta: f64) -> Result<SamplingPlan> {
    SamplingPlan::from_scores(&hessian_scores(model, data, pilot)?, beta, Sampler::Hessian)
}

/// Replaces a [`Error::DegeneratePlan`] with the uniform plan; other outcomes pass through.
pub fn with_uniform_fallback(plan: Result<SamplingPlan>, n_rows: usize) -> Result<SamplingPlan> {
    match plan {
        Err(Error::DegeneratePlan) => Ok(uniform_plan(n_rows)),
        other => other,
    }
}

/// Builds the plan for `sampler`. Pilot-based samplers require `pilot`.
pub fn build_plan(
    sampler: Sampler,
    model: &LossModel,
    data: &Dataset,
    pilot: Option<&Pilot>,
    beta: f64,
) -> Result<SamplingPlan> {
    let need_pilot = || pilot.ok_or_else(|| Error::invalid(format!("{sampler} sampling needs a pilot")));
    match sampler {
        Sampler::Uniform => Ok(uniform_plan(data.n_rows())),
        Sampler::Leverage => leverage_plan(data, beta),
        Sampler::Gradient => gradient_plan(model, data, need_pilot()?, beta),
        Sampler::Hessian => hessian_plan(model, data, need_pilot()?, beta),
        Sampler::Custom => Err(Error::invalid("custom plans are built with SamplingPlan::from_probs")),
    }
}

/// `out = A x` for a column-major `d × d` matrix.
#[inline]
fn mat_vec(a_col_major: &[f64], d: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (j, &xj) in x.iter().enumerate() {
        let col = &a_col_major[j * d..(j + 1) * d];
        out.iter_mut().zip(col).for_each(|(o, a)| *o += a * xj);
    }
}

#[inline]
fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}
