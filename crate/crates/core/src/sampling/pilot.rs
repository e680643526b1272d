use nalgebra::DMatrix;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::loss::{LossModel, Theta};
use crate::solver::{newton_solve, Objective, SolveSpec};

/// Pilot estimates `(θ̂₀, Σ̂₀)` from a small uniform pre-sample `S₀`.
#[derive(Debug, Clone)]
pub struct Pilot {
    pub theta0: Theta,
    /// `∇²F_{S₀}(θ̂₀)`, checked to be positive definite.
    pub sigma0: DMatrix<f64>,
    pub n0: usize,
    pub indices: Vec<usize>,
}

/// `min(n, max(500, 20·d))`.
pub fn default_pilot_size(n: usize, dim: usize) -> usize {
    n.min(500.max(20 * dim))
}

/// Draws `n0` rows uniformly with replacement and fits the unweighted pilot risk
/// `F_{S₀}(θ) = (1/n₀) Σ_{i∈S₀} f(θ; x_i)`.
pub fn fit_pilot<R: Rng + ?Sized>(model: &LossModel, data: &Dataset, n0: usize, rng: &mut R) -> Result<Pilot> {
    if n0 < model.dim() {
        return Err(Error::invalid(format!(
            "pilot size {n0} is smaller than the dimension {}",
            model.dim()
        )));
    }
    let n_rows = data.n_rows();
    let indices: Vec<usize> = (0..n0).map(|_| rng.random_range(0..n_rows)).collect();
    fit_pilot_on(model, data, indices)
}

/// Fits the pilot on a given index multiset.
pub fn fit_pilot_on(model: &LossModel, data: &Dataset, indices: Vec<usize>) -> Result<Pilot> {
    if indices.is_empty() {
        return Err(Error::invalid("pilot needs at least one row"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.n_rows()) {
        return Err(Error::invalid(format!("pilot row {bad} out of range")));
    }
    let spec = SolveSpec::new(Objective::PilotSubset(&indices), model.dim());
    let solution = newton_solve(model, data, &spec)?;
    if SpdFactor::new(&solution.final_hess).is_none() {
        return Err(Error::SingularHessian);
    }
    Ok(Pilot {
        theta0: solution.theta,
        sigma0: solution.final_hess,
        n0: indices.len(),
        indices,
    })
}
