//! Damped Newton method with Armijo backtracking and ridge escalation.
//!
//! One solver serves every objective in the crate: the full-data risk `F_U`, the
//! inverse-probability-weighted subsample risk `F_S`, the equally weighted variant
//! and the unweighted pilot risk on `S₀`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::loss::{Evaluation, LossModel, Theta};
use crate::sampling::SampleDraw;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
const MAX_RIDGE_DOUBLINGS: usize = 6;
const STEP_TOL: f64 = 1e-14;
/// Iterates beyond this norm are treated as divergence (e.g. separable logistic data).
pub const THETA_BOUND: f64 = 1e6;
/// Convergence to a point whose curvature has collapsed by this factor relative to the
/// start signals a minimizer at infinity rather than a genuine solution.
const CURVATURE_COLLAPSE: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// `F_U(θ) = (1/N) Σ_i f(θ; x_i)`.
    FullData,
    /// `F_S(θ) = (1/(N n)) Σ_{i∈S} f(θ; x_i)/π_i`.
    WeightedSubsample(&'a SampleDraw),
    /// `(1/n) Σ_{i∈S} f(θ; x_i)`.
    EqualSubsample(&'a SampleDraw),
    /// `(1/n₀) Σ_{i∈S₀} f(θ; x_i)` over explicit indices.
    PilotSubset(&'a [usize]),
}

impl Objective<'_> {
    pub fn evaluate(&self, model: &LossModel, data: &Dataset, theta: &Theta, with_hess: bool) -> Evaluation {
        match *self {
            Objective::FullData => model.full_eval(data, theta, with_hess),
            Objective::WeightedSubsample(draw) => model.weighted_eval(data, draw, theta, with_hess),
            Objective::EqualSubsample(draw) => model.equal_weight_eval(data, draw, theta, with_hess),
            Objective::PilotSubset(idx) => {
                let w = 1.0 / idx.len() as f64;
                model.evaluate(data, theta, idx.iter().map(|&i| (i, w)), with_hess)
            }
        }
    }

    pub fn value(&self, model: &LossModel, data: &Dataset, theta: &Theta) -> f64 {
        self.evaluate(model, data, theta, false).loss
    }

    fn is_empty(&self) -> bool {
        match *self {
            Objective::FullData => false,
            Objective::WeightedSubsample(d) | Objective::EqualSubsample(d) => d.is_empty(),
            Objective::PilotSubset(idx) => idx.is_empty(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveSpec<'a> {
    pub objective: Objective<'a>,
    pub init: Theta,
    pub tol_grad: f64,
    pub max_iter: usize,
    pub ridge0: f64,
}

impl<'a> SolveSpec<'a> {
    /// Defaults: start at zero, relative gradient tolerance `1e-10`, 100 iterations, no ridge.
    pub fn new(objective: Objective<'a>, dim: usize) -> Self {
        Self { objective, init: DVector::zeros(dim), tol_grad: 1e-10, max_iter: 100, ridge0: 0.0 }
    }

    pub fn with_init(mut self, init: Theta) -> Self {
        self.init = init;
        self
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub theta: Theta,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective Hessian at `theta`.
    pub final_hess: DMatrix<f64>,
    /// Objective value at `theta`.
    pub objective: f64,
    /// Objective value after each accepted iteration, starting with the initial point.
    pub trace: Vec<f64>,
}

/// Factorizes `h + λI`, escalating `λ` from `ridge0` when needed.
fn factor_with_ridge(h: &DMatrix<f64>, ridge0: f64) -> Option<SpdFactor> {
    let d = h.nrows();
    let shifted = |lambda: f64| {
        let mut m = h.clone();
        for k in 0..d {
            m[(k, k)] += lambda;
        }
        m
    };
    let first = if ridge0 > 0.0 { SpdFactor::new(&shifted(ridge0)) } else { SpdFactor::new(h) };
    if first.is_some() {
        return first;
    }
    let mut lambda = ridge0.max(1e-8 * h.trace() / d as f64);
    if !(lambda > 0.0) {
        return None;
    }
    for _ in 0..=MAX_RIDGE_DOUBLINGS {
        if let Some(f) = SpdFactor::new(&shifted(lambda)) {
            return Some(f);
        }
        lambda *= 2.0;
    }
    None
}

fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Minimizes the objective in `spec`.
///
/// Each iteration solves `H p = −g` by Cholesky (with ridge escalation if `H` is not
/// numerically positive definite), then backtracks by halving until the Armijo
/// condition holds. Converges when `‖g‖ ≤ tol·max(1, ‖g₀‖)` or the step is below
/// `1e-14`. The Hessian at the returned point must factor without ridge, otherwise
/// the result is [`Error::SingularHessian`]. Divergence past [`THETA_BOUND`], an
/// exhausted iteration budget, or convergence onto collapsed curvature (a minimizer at
/// infinity) yield [`Error::NoConvergence`] carrying the last iterate.
pub fn newton_solve(model: &LossModel, data: &Dataset, spec: &SolveSpec<'_>) -> Result<Solution> {
    if spec.objective.is_empty() {
        return Err(Error::invalid("objective has no rows"));
    }
    if spec.init.len() != model.dim() || spec.init.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial θ must be finite with the model's dimension"));
    }
    if !(spec.tol_grad > 0.0) || spec.max_iter == 0 {
        return Err(Error::invalid("tol_grad must be positive and max_iter at least 1"));
    }
    let obj = &spec.objective;
    let mut theta = spec.init.clone();
    let mut eval = obj.evaluate(model, data, &theta, true);
    let initial_curvature = eval.hess.as_ref().map_or(0.0, |h| h.trace() / h.nrows() as f64);
    let g0 = eval.grad.norm();
    let threshold = spec.tol_grad * g0.max(1.0);
    let mut trace = vec![eval.loss];
    let mut iterations = 0;
    let mut converged = eval.grad.norm() <= threshold;

    while !converged && iterations < spec.max_iter {
        let hess = eval.hess.as_ref().expect("hessian requested");
        let factor = factor_with_ridge(hess, spec.ridge0).ok_or(Error::SingularHessian)?;
        let step = -factor.solve(&eval.grad);
        let slope = eval.grad.dot(&step);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let candidate = &theta + t * &step;
            let value = obj.value(model, data, &candidate);
            if value.is_finite() && value <= eval.loss + ARMIJO_C * t * slope {
                accepted = Some(candidate);
                break;
            }
            t *= 0.5;
        }
        let next = match accepted {
            Some(c) => c,
            None => {
                // Armijo can fail from rounding alone once the decrease is below the
                // objective's ulp; take the full step if it still shrinks the gradient.
                let candidate = &theta + &step;
                let probe = obj.evaluate(model, data, &candidate, false);
                if probe.grad.norm() < eval.grad.norm() {
                    t = 1.0;
                    candidate
                } else {
                    break;
                }
            }
        };
        iterations += 1;
        let step_norm = t * step.norm();
        theta = next;
        eval = obj.evaluate(model, data, &theta, true);
        trace.push(eval.loss);
        if theta.norm() > THETA_BOUND || !eval.loss.is_finite() {
            break;
        }
        converged = eval.grad.norm() <= threshold || step_norm <= STEP_TOL;
    }

    let grad_norm = eval.grad.norm();
    let final_hess = eval.hess.expect("hessian requested");
    let diverged = theta.norm() > THETA_BOUND;
    if converged && !diverged && SpdFactor::new(&final_hess).is_none() {
        return Err(Error::SingularHessian);
    }
    let collapsed = converged && min_eigenvalue(&final_hess) < CURVATURE_COLLAPSE * initial_curvature;
    let solution = Solution {
        theta,
        grad_norm,
        iterations,
        converged: converged && !diverged && !collapsed,
        objective: eval.loss,
        final_hess,
        trace,
    };
    if !solution.converged {
        return Err(Error::NoConvergence(Box::new(solution)));
    }
    Ok(solution)
}

/// `θ̂_N`: Newton on the full-data risk from zero.
pub fn solve_full(model: &LossModel, data: &Dataset) -> Result<Solution> {
    newton_solve(model, data, &SolveSpec::new(Objective::FullData, model.dim()))
}

/// `θ̂_n`: Newton on the inverse-probability-weighted subsample risk. Sums run in
/// row order, so the result does not depend on the order of the draw.
pub fn solve_subsample_weighted(
    model: &LossModel,
    data: &Dataset,
    draw: &SampleDraw,
    init: Option<&Theta>,
) -> Result<Solution> {
    let draw = draw.sorted();
    let mut spec = SolveSpec::new(Objective::WeightedSubsample(&draw), model.dim());
    if let Some(t) = init {
        spec.init = t.clone();
    }
    newton_solve(model, data, &spec)
}

/// `θ̃_n`: Newton on the equally weighted subsample risk.
pub fn solve_subsample_equal(
    model: &LossModel,
    data: &Dataset,
    draw: &SampleDraw,
    init: Option<&Theta>,
) -> Result<Solution> {
    let draw = draw.sorted();
    let mut spec = SolveSpec::new(Objective::EqualSubsample(&draw), model.dim());
    if let Some(t) = init {
        spec.init = t.clone();
    }
    newton_solve(model, data, &spec)
}
