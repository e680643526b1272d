//! How far is `θ̂_n` from `θ̂_N`?
//!
//! Both MSE quantities here are sandwiches `B⁻¹ M B⁻¹`:
//!
//! * [`amse`] uses the full data: `B = Σ = ∇²F_U(θ̂_N)` and
//!   `M = (1/n)(1/N²) Σ_{i∈U} ∇f ∇fᵀ / π_i` at `θ̂_N`.
//! * [`mse_estimate`] uses only the subsample: `B = Σ̂ = ∇²F_S(θ̂_n)` and
//!   `M = (1/n²)(1/N²) Σ_{i∈S} ∇f ∇fᵀ / π_i²` at `θ̂_n`.
//!
//! The plug-in estimate drives the chi-square confidence ellipsoid for `θ̂_N`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{mirror_lower, quad_form, rank_one_lower, sandwich, SpdFactor};
use crate::loss::{LossModel, Theta};
use crate::sampling::{SampleDraw, SamplingPlan};
use crate::special::chi2_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateKind {
    /// Full-data asymptotic MSE.
    Amse,
    /// Subsample plug-in estimate.
    MseHat,
}

#[derive(Debug, Clone)]
pub struct SandwichEstimate {
    pub matrix: DMatrix<f64>,
    pub kind: EstimateKind,
    pub bread: DMatrix<f64>,
    pub meat: DMatrix<f64>,
    pub n: usize,
}

impl SandwichEstimate {
    fn from_parts(bread: DMatrix<f64>, meat: DMatrix<f64>, kind: EstimateKind, n: usize) -> Result<Self> {
        let bread_inv = SpdFactor::new(&bread).ok_or(Error::SingularHessian)?.inverse();
        let matrix = sandwich(&bread_inv, &meat);
        Ok(Self { matrix, kind, bread, meat, n })
    }

    /// Scalar summary `E‖θ̂_n − θ̂_N‖²`.
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `AMSE(θ̂_n) = Σ⁻¹ [(1/n)(1/N²) Σ_{i∈U} ∇f(θ̂_N;x_i) ∇fᵀ(θ̂_N;x_i) / π_i] Σ⁻¹`.
///
/// `theta_full` must be the full-data solution `θ̂_N`; this is not checked.
pub fn amse(
    model: &LossModel,
    data: &Dataset,
    plan: &SamplingPlan,
    theta_full: &Theta,
    n: usize,
) -> Result<SandwichEstimate> {
    if plan.n_rows() != data.n_rows() {
        return Err(Error::invalid("plan and dataset disagree on N"));
    }
    if n == 0 {
        return Err(Error::invalid("subsample size must be positive"));
    }
    let d = model.dim();
    let big_n = data.n_rows() as f64;
    let scale = 1.0 / (n as f64 * big_n * big_n);
    let mut meat = DMatrix::zeros(d, d);
    let mut g = vec![0.0; d];
    for (i, &pi) in plan.probs().iter().enumerate() {
        model.point_grad_into(data, theta_full, i, &mut g);
        if pi > 0.0 {
            rank_one_lower(&mut meat, &g, scale / pi);
        } else if g.iter().any(|v| *v != 0.0) {
            // A row with a non-zero gradient that can never be drawn: the estimator is biased.
            return Err(Error::invalid(format!("row {i} has π = 0 but a non-zero gradient")));
        }
    }
    mirror_lower(&mut meat);
    let bread = model.full_hess(data, theta_full);
    SandwichEstimate::from_parts(bread, meat, EstimateKind::Amse, n)
}

/// `mse(θ̂_n) = Σ̂⁻¹ [(1/n²)(1/N²) Σ_{i∈S} ∇f(θ̂_n;x_i) ∇fᵀ(θ̂_n;x_i) / π_i²] Σ̂⁻¹`,
/// repeats in the draw counted and summed in row order. A singular `Σ̂` means the draw fell outside the event
/// on which the estimate is defined and yields [`Error::SingularHessian`].
pub fn mse_estimate(model: &LossModel, data: &Dataset, draw: &SampleDraw, theta_sub: &Theta) -> Result<SandwichEstimate> {
    if draw.is_empty() {
        return Err(Error::invalid("empty draw"));
    }
    let d = model.dim();
    let n = draw.len();
    let nn = n as f64 * data.n_rows() as f64;
    let scale = 1.0 / (nn * nn);
    let mut meat = DMatrix::zeros(d, d);
    let mut g = vec![0.0; d];
    let draw = &draw.sorted();
    for (i, pi) in draw.iter() {
        model.point_grad_into(data, theta_sub, i, &mut g);
        rank_one_lower(&mut meat, &g, scale / (pi * pi));
    }
    mirror_lower(&mut meat);
    let bread = model.weighted_hess(data, draw, theta_sub);
    SandwichEstimate::from_parts(bread, meat, EstimateKind::MseHat, n)
}

/// Mean squared prediction error of a smooth functional `g`: `∇gᵀ · MSE · ∇g`.
pub fn mspe(g_grad: &DVector<f64>, est: &SandwichEstimate) -> f64 {
    assert_eq!(g_grad.len(), est.dim(), "gradient length must match the estimate");
    quad_form(&est.matrix, g_grad).max(0.0)
}

/// Confidence level `q` of a chi-square ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceSpec {
    level: f64,
}

impl ConfidenceSpec {
    pub fn new(level: f64) -> Result<Self> {
        if level > 0.0 && level < 1.0 {
            Ok(Self { level })
        } else {
            Err(Error::invalid(format!("confidence level {level} is outside (0, 1)")))
        }
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// `χ²_d(q)`.
    pub fn threshold(&self, dof: usize) -> f64 {
        chi2_quantile(dof, self.level)
    }
}

/// `(θ̂_n − c)ᵀ est⁻¹ (θ̂_n − c)`.
pub fn ci_statistic(theta_sub: &Theta, candidate: &Theta, est: &SandwichEstimate) -> Result<f64> {
    let diff = theta_sub - candidate;
    let factor = SpdFactor::new(&est.matrix).ok_or(Error::SingularHessian)?;
    Ok(diff.dot(&factor.solve(&diff)))
}

/// Whether `candidate` lies in the ellipsoid
/// `{c : (θ̂_n − c)ᵀ est⁻¹ (θ̂_n − c) ≤ χ²_d(q)}`.
pub fn in_confidence_region(
    theta_sub: &Theta,
    candidate: &Theta,
    est: &SandwichEstimate,
    spec: &ConfidenceSpec,
) -> Result<bool> {
    let stat = ci_statistic(theta_sub, candidate, est)?;
    Ok(stat <= spec.threshold(est.dim()))
}
