//! Synthetic regression populations.
//!
//! * Linear: five covariates from the mixture `¾ N(0, Σ) + ¼ N(0, 4Σ)` with
//!   `Σ_ij = 0.5^|i−j|`, and `y = xᵀθ + (1 + δ|x₁|) ε` where `ε ~ N(0, 10)` (variance 10).
//! * Logistic: `x ~ N(0, diag(1,1,1,5,5))`, an independent `x₆ ~ N(0, 1)` that enters only
//!   the link, and `P(y = 1) = 1 / (1 + exp(−(xᵀθ + δ x₆²)))`.
//!
//! Both prepend an intercept column, so the fitted dimension is 6 with true intercept 0.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::loss::{LossKind, LossModel, Theta};

pub const N_COVARIATES: usize = 5;
pub const DEFAULT_COEFFICIENTS: [f64; N_COVARIATES] = [1.0, 1.0, 1.0, 0.1, 0.1];
const NOISE_VARIANCE: f64 = 10.0;
const LOGISTIC_VARIANCES: [f64; N_COVARIATES] = [1.0, 1.0, 1.0, 5.0, 5.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    LinearAr,
    LogisticDiag,
}

impl GeneratorKind {
    pub fn loss(self) -> LossKind {
        match self {
            GeneratorKind::LinearAr => LossKind::Squared,
            GeneratorKind::LogisticDiag => LossKind::Logistic,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.loss().name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<LossKind>()? {
            LossKind::Squared => GeneratorKind::LinearAr,
            LossKind::Logistic => GeneratorKind::LogisticDiag,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_rows: usize,
    /// Misspecification degree `δ ≥ 0`.
    pub delta: f64,
    pub seed: u64,
    /// Covariate coefficients; the intercept is always 0.
    pub coefficients: [f64; N_COVARIATES],
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n_rows: usize, delta: f64, seed: u64) -> Self {
        Self { kind, n_rows, delta, seed, coefficients: DEFAULT_COEFFICIENTS }
    }

    pub fn linear(n_rows: usize, delta: f64, seed: u64) -> Self {
        Self::new(GeneratorKind::LinearAr, n_rows, delta, seed)
    }

    pub fn logistic(n_rows: usize, delta: f64, seed: u64) -> Self {
        Self::new(GeneratorKind::LogisticDiag, n_rows, delta, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::invalid("generator needs N >= 1"));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::invalid(format!("δ = {} must be finite and non-negative", self.delta)));
        }
        Ok(())
    }

    /// `(0, coefficients...)`.
    pub fn theta_true(&self) -> Theta {
        let mut t = DVector::zeros(N_COVARIATES + 1);
        t.as_mut_slice()[1..].copy_from_slice(&self.coefficients);
        t
    }

    pub fn model(&self) -> LossModel {
        LossModel::new(self.kind.loss(), N_COVARIATES + 1)
    }

    /// Generates the dataset from `seed`.
    pub fn generate(&self) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            GeneratorKind::LinearAr => generate_linear(self, &mut rng),
            GeneratorKind::LogisticDiag => generate_logistic(self, &mut rng),
        }
    }
}

/// `Σ_ij = 0.5^|i−j|`.
pub fn ar_covariance(dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()))
}

pub fn generate_linear<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<Dataset> {
    generate_linear_labeled(spec, rng).map(|(data, _)| data)
}

/// Also reports, per row, whether it came from the `4Σ` component.
pub(crate) fn generate_linear_labeled<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<(Dataset, Vec<bool>)> {
    spec.validate()?;
    if spec.kind != GeneratorKind::LinearAr {
        return Err(Error::invalid("generate_linear needs a LinearAr spec"));
    }
    let chol = SpdFactor::new(&ar_covariance(N_COVARIATES)).expect("AR(1) covariance is positive definite");
    let l = chol.lower();
    let noise_sd = NOISE_VARIANCE.sqrt();
    let d = N_COVARIATES + 1;
    let mut features = Vec::with_capacity(spec.n_rows * d);
    let mut response = Vec::with_capacity(spec.n_rows);
    let mut wide = Vec::with_capacity(spec.n_rows);
    let mut z = [0.0; N_COVARIATES];
    for _ in 0..spec.n_rows {
        let is_wide = rng.random::<f64>() < 0.25;
        let scale = if is_wide { 2.0 } else { 1.0 };
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let eps: f64 = rng.sample(StandardNormal);
        features.push(1.0);
        let mut mean = 0.0;
        let mut x1 = 0.0;
        for i in 0..N_COVARIATES {
            let xi = scale * (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>();
            if i == 0 {
                x1 = xi;
            }
            mean += spec.coefficients[i] * xi;
            features.push(xi);
        }
        response.push(mean + (1.0 + spec.delta * x1.abs()) * noise_sd * eps);
        wide.push(is_wide);
    }
    Ok((Dataset::new(features, d, Some(response))?, wide))
}

pub fn generate_logistic<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<Dataset> {
    spec.validate()?;
    if spec.kind != GeneratorKind::LogisticDiag {
        return Err(Error::invalid("generate_logistic needs a LogisticDiag spec"));
    }
    let sds = LOGISTIC_VARIANCES.map(f64::sqrt);
    let d = N_COVARIATES + 1;
    let mut features = Vec::with_capacity(spec.n_rows * d);
    let mut response = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        features.push(1.0);
        let mut eta = 0.0;
        for (sd, beta) in sds.iter().zip(&spec.coefficients) {
            let z: f64 = rng.sample(StandardNormal);
            let x = sd * z;
            eta += beta * x;
            features.push(x);
        }
        let hidden: f64 = rng.sample(StandardNormal);
        eta += spec.delta * hidden * hidden;
        let p = 1.0 / (1.0 + (-eta).exp());
        let u: f64 = rng.random();
        response.push(if u < p { 1.0 } else { 0.0 });
    }
    Dataset::new(features, d, Some(response))
}
