//! Subsampled empirical-risk minimization.
//!
//! A large dataset `U` of `N` rows defines the full-data risk
//! `F_U(θ) = (1/N) Σ f(θ; x_i)`. Solving it exactly costs a pass over every row per
//! Newton iteration, so instead a with-replacement subsample `S` of size `n` is drawn
//! according to probabilities `π` and the inverse-probability-weighted risk
//! `F_S(θ) = (1/(N n)) Σ_{i∈S} f(θ; x_i) / π_i` is solved.
//!
//! The crate covers the whole workflow:
//!
//! * [`data`] and [`loss`]: datasets and per-point / aggregate gradients and Hessians.
//! * [`sampling`]: uniform, leverage, gradient and Hessian-based plans plus alias-table draws.
//! * [`solver`]: a safeguarded Newton method for full, weighted, equal-weight and pilot fits.
//! * [`uncertainty`]: the sandwich AMSE, the subsample-only MSE estimate, MSPE and
//!   chi-square confidence ellipsoids.
//! * [`simulate`]: synthetic generators and a seeded, thread-count-independent Monte Carlo engine.

pub mod data;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod sampling;
pub mod simulate;
pub mod solver;
pub mod special;
pub mod uncertainty;

pub use data::Dataset;
pub use error::{Error, Result};
pub use loss::{LossKind, LossModel, Theta};
pub use sampling::{Pilot, SampleDraw, Sampler, SamplingPlan};
pub use solver::{Objective, SolveSpec, Solution};
pub use uncertainty::{ConfidenceSpec, EstimateKind, SandwichEstimate};
