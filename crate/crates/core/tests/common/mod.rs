//! Independent oracles shared by the property suites and the acceptance run.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use subopt::sampling::{fit_pilot, fit_pilot_on, hessian_plan, DEFAULT_FLOOR};
use subopt::{Dataset, LossKind, LossModel, SampleDraw, SamplingPlan, Sampler, Theta};

pub const FD_STEP: f64 = 1e-6;

pub fn gaussian_rows(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut r: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            r[0] = 1.0;
            r
        })
        .collect()
}

/// Random dataset for `kind` with an intercept column.
pub fn random_dataset(kind: LossKind, n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = gaussian_rows(n, d, &mut rng);
    let beta: Vec<f64> = (0..d).map(|j| 0.5 - 0.3 * j as f64).collect();
    let y = rows
        .iter()
        .map(|x| {
            let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            match kind {
                LossKind::Squared => eta + rng.sample::<f64, _>(StandardNormal),
                LossKind::Logistic => {
                    if rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp()) {
                        1.0
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    Dataset::from_rows(&rows, Some(y)).unwrap()
}

pub fn rel_err(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

/// Central differences of the point loss against `point_grad`, and of `point_grad`
/// against `point_hess`. Returns the two relative errors.
pub fn finite_difference_errors(model: &LossModel, data: &Dataset, theta: &Theta, i: usize) -> (f64, f64) {
    let d = model.dim();
    let mut g_fd = vec![0.0; d];
    let mut h_fd = DMatrix::zeros(d, d);
    for j in 0..d {
        let h = FD_STEP * theta[j].abs().max(1.0);
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        g_fd[j] = (model.point_loss(data, &tp, i) - model.point_loss(data, &tm, i)) / (2.0 * h);
        let col = (model.point_grad(data, &tp, i) - model.point_grad(data, &tm, i)) / (2.0 * h);
        h_fd.set_column(j, &col);
    }
    let g = model.point_grad(data, theta, i);
    let hess = model.point_hess(data, theta, i);
    (rel_err(&g_fd, g.as_slice()), rel_err(h_fd.as_slice(), hess.as_slice()))
}

/// Largest `|Σ_i π_i ∇F_{\{i\}}(θ) − ∇F_U(θ)|` over single-row draws, plus the same for
/// the risk value.
pub fn unbiasedness_gap(model: &LossModel, data: &Dataset, plan: &SamplingPlan, theta: &Theta) -> f64 {
    let d = model.dim();
    let mut expected_grad = DVector::zeros(d);
    let mut expected_loss = 0.0;
    for (i, &p) in plan.probs().iter().enumerate() {
        let draw = SampleDraw::from_plan_indices(plan, vec![i]).unwrap();
        let ev = model.weighted_eval(data, &draw, theta, false);
        expected_grad += ev.grad * p;
        expected_loss += ev.loss * p;
    }
    let full = model.full_eval(data, theta, false);
    (expected_grad - full.grad).amax().max((expected_loss - full.loss).abs())
}

/// Closed-form `(XᵀX)⁻¹Xᵀy` through a QR factorization.
pub fn ols_closed_form(data: &Dataset) -> Theta {
    let x = DMatrix::from_row_slice(data.n_rows(), data.n_cols(), data.features());
    let y = DVector::from_column_slice(data.response().unwrap());
    let qr = x.qr();
    qr.r().solve_upper_triangular(&(qr.q().transpose() * y)).unwrap()
}

/// Symmetry defect and the smallest eigenvalue relative to the largest.
pub fn symmetry_and_psd(m: &DMatrix<f64>) -> (f64, f64) {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let asym = (m - m.transpose()).amax() / scale;
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.max().abs().max(f64::MIN_POSITIVE);
    (asym, eig.min() / max)
}

/// Largest change in Hessian-plan probabilities when all features are scaled by `c`
/// and the pilot is refitted on the same indices; also whether the argmax moved.
pub fn hessian_scale_gap(model: &LossModel, data: &Dataset, c: f64, seed: u64) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n0 = (20 * model.dim()).min(data.n_rows());
    let pilot = fit_pilot(model, data, n0, &mut rng).unwrap();
    let scaled = data.with_scaled_features(c).unwrap();
    let pilot_c = fit_pilot_on(model, &scaled, pilot.indices.clone()).unwrap();
    let a = hessian_plan(model, data, &pilot, DEFAULT_FLOOR).unwrap();
    let b = hessian_plan(model, &scaled, &pilot_c, DEFAULT_FLOOR).unwrap();
    let gap = a.probs().iter().zip(b.probs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let argmax = |p: &[f64]| (0..p.len()).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap();
    (gap, argmax(a.probs()) == argmax(b.probs()))
}

/// Upper-tail p-value of Pearson's statistic for `n` draws from `plan`.
pub fn draw_gof_p_value(plan: &SamplingPlan, n: usize, seed: u64) -> f64 {
    let draw = plan.draw(n, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut counts = vec![0usize; plan.n_rows()];
    for &i in draw.indices() {
        counts[i] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(plan.probs())
        .map(|(&c, &p)| (c as f64 - p * n as f64).powi(2) / (p * n as f64))
        .sum();
    1.0 - ChiSquared::new((plan.n_rows() - 1) as f64).unwrap().cdf(stat)
}

/// `χ²₁(q) = z²_{(1+q)/2}` from the normal quantile.
pub fn chi2_dof1_oracle(q: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.5 + q / 2.0).powi(2)
}

/// `χ²₂(q) = −2 ln(1 − q)`.
pub fn chi2_dof2_oracle(q: f64) -> f64 {
    -2.0 * (1.0 - q).ln()
}

pub fn skewed_plan(n: usize, seed: u64) -> SamplingPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
    SamplingPlan::from_scores(&scores, 0.05, Sampler::Custom).unwrap()
}
