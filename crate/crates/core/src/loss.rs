//! Per-point losses and their first two derivatives, aggregated over the full
//! population, an inverse-probability-weighted draw, or an equally weighted draw.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{mirror_lower, rank_one_lower};
use crate::sampling::SampleDraw;

/// Coefficient vector `θ`.
pub type Theta = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// `f = (y − xᵀθ)²/2`. Without a response it is mean estimation, `f = ‖x − θ‖²/2`.
    Squared,
    /// `f = log(1 + exp(xᵀθ)) − y·xᵀθ` with `y ∈ {0, 1}`.
    Logistic,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Squared => "linear",
            LossKind::Logistic => "logistic",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "squared" | "ls" => Ok(LossKind::Squared),
            "logistic" | "logit" => Ok(LossKind::Logistic),
            other => Err(Error::invalid(format!("unknown model {other:?}"))),
        }
    }
}

/// Loss value, gradient and (optionally) Hessian of a weighted sum of point losses.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub grad: DVector<f64>,
    pub hess: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossModel {
    kind: LossKind,
    dim: usize,
}

/// Scalar pieces of a GLM-style loss at margin `m = xᵀθ`: the loss, `∂f/∂m` and `∂²f/∂m²`.
#[derive(Debug, Clone, Copy)]
struct MarginTerms {
    loss: f64,
    slope: f64,
    curvature: f64,
}

#[inline]
fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(m))` without overflow.
#[inline]
fn softplus(m: f64) -> f64 {
    if m > 0.0 {
        m + (-m).exp().ln_1p()
    } else {
        m.exp().ln_1p()
    }
}

#[inline]
fn dot(x: &[f64], theta: &[f64]) -> f64 {
    x.iter().zip(theta).map(|(a, b)| a * b).sum()
}

impl LossModel {
    pub fn new(kind: LossKind, dim: usize) -> Self {
        assert!(dim >= 1, "a loss model needs at least one parameter");
        Self { kind, dim }
    }

    pub fn squared(dim: usize) -> Self {
        Self::new(LossKind::Squared, dim)
    }

    pub fn logistic(dim: usize) -> Self {
        Self::new(LossKind::Logistic, dim)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Checks that `data` fits this model: column count, response presence and, for
    /// logistic loss, binary labels.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if data.n_cols() != self.dim {
            return Err(Error::invalid(format!(
                "model has dimension {} but data has {} columns",
                self.dim,
                data.n_cols()
            )));
        }
        match (self.kind, data.response()) {
            (LossKind::Logistic, None) => Err(Error::invalid("logistic loss needs a response")),
            (LossKind::Logistic, Some(y)) => match y.iter().position(|&v| v != 0.0 && v != 1.0) {
                Some(i) => Err(Error::invalid(format!("logistic response at row {i} is not 0/1"))),
                None => Ok(()),
            },
            (LossKind::Squared, _) => Ok(()),
        }
    }

    #[inline]
    fn margin_terms(&self, m: f64, y: f64) -> MarginTerms {
        match self.kind {
            LossKind::Squared => {
                let r = m - y;
                MarginTerms { loss: 0.5 * r * r, slope: r, curvature: 1.0 }
            }
            LossKind::Logistic => {
                let p = sigmoid(m);
                MarginTerms { loss: softplus(m) - y * m, slope: p - y, curvature: p * (1.0 - p) }
            }
        }
    }

    pub fn point_loss(&self, data: &Dataset, theta: &Theta, i: usize) -> f64 {
        let x = data.row(i);
        match data.y(i) {
            Some(y) => self.margin_terms(dot(x, theta.as_slice()), y).loss,
            None => 0.5 * x.iter().zip(theta.iter()).map(|(a, t)| (t - a) * (t - a)).sum::<f64>(),
        }
    }

    /// Writes `∇f(θ; x_i)` into `out`.
    #[inline]
    pub fn point_grad_into(&self, data: &Dataset, theta: &Theta, i: usize, out: &mut [f64]) {
        let x = data.row(i);
        match data.y(i) {
            Some(y) => {
                let s = self.margin_terms(dot(x, theta.as_slice()), y).slope;
                out.iter_mut().zip(x).for_each(|(o, xv)| *o = s * xv);
            }
            None => out.iter_mut().zip(x.iter().zip(theta.iter())).for_each(|(o, (a, t))| *o = t - a),
        }
    }

    pub fn point_grad(&self, data: &Dataset, theta: &Theta, i: usize) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        self.point_grad_into(data, theta, i, g.as_mut_slice());
        g
    }

    pub fn point_hess(&self, data: &Dataset, theta: &Theta, i: usize) -> DMatrix<f64> {
        let x = data.row(i);
        match data.y(i) {
            Some(y) => {
                let w = self.margin_terms(dot(x, theta.as_slice()), y).curvature;
                let mut h = DMatrix::zeros(self.dim, self.dim);
                rank_one_lower(&mut h, x, w);
                mirror_lower(&mut h);
                h
            }
            None => DMatrix::identity(self.dim, self.dim),
        }
    }

    /// `Σ_k w_k f(θ; x_{i_k})` with its gradient and optionally its Hessian, summed in
    /// iteration order.
    pub fn evaluate<I>(&self, data: &Dataset, theta: &Theta, rows: I, with_hess: bool) -> Evaluation
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let d = self.dim;
        let th = theta.as_slice();
        let mut loss = 0.0;
        let mut grad = DVector::zeros(d);
        let mut hess = with_hess.then(|| DMatrix::zeros(d, d));
        let mut total_weight = 0.0;
        let g = grad.as_mut_slice();
        for (i, w) in rows {
            let x = data.row(i);
            match data.y(i) {
                Some(y) => {
                    let t = self.margin_terms(dot(x, th), y);
                    loss += w * t.loss;
                    let ws = w * t.slope;
                    g.iter_mut().zip(x).for_each(|(gk, xk)| *gk += ws * xk);
                    if let Some(h) = hess.as_mut() {
                        rank_one_lower(h, x, w * t.curvature);
                    }
                }
                None => {
                    let mut sq = 0.0;
                    for k in 0..d {
                        let r = th[k] - x[k];
                        sq += r * r;
                        g[k] += w * r;
                    }
                    loss += 0.5 * w * sq;
                    total_weight += w;
                }
            }
        }
        if let Some(h) = hess.as_mut() {
            for k in 0..d {
                h[(k, k)] += total_weight;
            }
            mirror_lower(h);
        }
        Evaluation { loss, grad, hess }
    }

    fn full_rows(data: &Dataset) -> impl Iterator<Item = (usize, f64)> {
        let w = 1.0 / data.n_rows() as f64;
        (0..data.n_rows()).map(move |i| (i, w))
    }

    pub fn full_eval(&self, data: &Dataset, theta: &Theta, with_hess: bool) -> Evaluation {
        self.evaluate(data, theta, Self::full_rows(data), with_hess)
    }

    pub fn full_loss(&self, data: &Dataset, theta: &Theta) -> f64 {
        self.full_eval(data, theta, false).loss
    }

    /// `∇F_U(θ) = (1/N) Σ_i ∇f(θ; x_i)`.
    pub fn full_grad(&self, data: &Dataset, theta: &Theta) -> DVector<f64> {
        self.full_eval(data, theta, false).grad
    }

    /// `∇²F_U(θ)`; at `θ̂_N` this is the bread `Σ` of the AMSE sandwich.
    pub fn full_hess(&self, data: &Dataset, theta: &Theta) -> DMatrix<f64> {
        self.full_eval(data, theta, true).hess.expect("requested")
    }

    /// Row weights `1/(N n π_i)` of the inverse-probability-weighted subsample risk.
    pub fn ipw_rows<'a>(data: &Dataset, draw: &'a SampleDraw) -> impl Iterator<Item = (usize, f64)> + 'a {
        let scale = 1.0 / (data.n_rows() as f64 * draw.len() as f64);
        draw.iter().map(move |(i, pi)| (i, scale / pi))
    }

    pub fn equal_rows(draw: &SampleDraw) -> impl Iterator<Item = (usize, f64)> + '_ {
        let w = 1.0 / draw.len() as f64;
        draw.indices().iter().map(move |&i| (i, w))
    }

    pub fn weighted_eval(&self, data: &Dataset, draw: &SampleDraw, theta: &Theta, with_hess: bool) -> Evaluation {
        self.evaluate(data, theta, Self::ipw_rows(data, draw), with_hess)
    }

    /// `∇F_S(θ) = (1/(N n)) Σ_{i∈S} ∇f(θ; x_i)/π_i`, repeats counted.
    pub fn weighted_grad(&self, data: &Dataset, draw: &SampleDraw, theta: &Theta) -> DVector<f64> {
        self.weighted_eval(data, draw, theta, false).grad
    }

    /// `∇²F_S(θ)`; at `θ̂_n` this is the bread `Σ̂` of the subsample MSE estimate.
    pub fn weighted_hess(&self, data: &Dataset, draw: &SampleDraw, theta: &Theta) -> DMatrix<f64> {
        self.weighted_eval(data, draw, theta, true).hess.expect("requested")
    }

    pub fn equal_weight_eval(&self, data: &Dataset, draw: &SampleDraw, theta: &Theta, with_hess: bool) -> Evaluation {
        self.evaluate(data, theta, Self::equal_rows(draw), with_hess)
    }

    /// `(1/n) Σ_{i∈S} ∇f(θ; x_i)`; ignores the sampling probabilities.
    pub fn equal_weight_grad(&self, data: &Dataset, draw: &SampleDraw, theta: &Theta) -> DVector<f64> {
        self.equal_weight_eval(data, draw, theta, false).grad
    }

    pub fn equal_weight_hess(&self, data: &Dataset, draw: &SampleDraw, theta: &Theta) -> DMatrix<f64> {
        self.equal_weight_eval(data, draw, theta, true).hess.expect("requested")
    }
}
