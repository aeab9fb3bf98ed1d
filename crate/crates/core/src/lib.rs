//! Penalized generalized linear models.
//!
//! The crate solves
//!
//! ```text
//! minimize over (B, u):  (1/n) Σ_i s_i ℓ(o_i + x_iᵀ B + u, y_i) + λ π(B)
//! ```
//!
//! for the losses in [`loss`], the penalties in [`penalty`] (or a constraint
//! from [`constraint`] in place of the penalty), using accelerated proximal
//! gradient in [`solver`]. Two-stage adaptive and folded-concave estimators
//! live in [`lla`]; tuning grids, cross-validation and information criteria
//! live in [`tuning`].

pub mod constraint;
pub mod data;
pub mod error;
pub mod linalg;
pub mod lla;
pub mod loss;
pub mod penalty;
pub mod solver;
pub mod tuning;

pub use constraint::{project, ConstraintSpec};
pub use data::{standardize, unstandardize_coef, Coef, Dataset, StandardizationState};
pub use error::{Error, Result};
pub use lla::{
    adaptive_weights, lla, lla_killer_bound, nonconvex_objective, transform, AdaptiveSpec, LlaResult,
    Perturbation, TransformSpec,
};
pub use loss::{intercept_at_zero, lipschitz_constant, loss_gradient, loss_value, LossSpec};
pub use penalty::{
    infimal_value, penalty_value, prox, ConcaveGenerator, ConcaveKind, PenaltyKind, PenaltySpec,
};
pub use solver::{
    fit, fit_infimal, fit_path, FitResult, Regularizer, RestartRule, SelectionRule, SolverConfig,
    TunePath,
};
pub use tuning::{
    cross_validate, klb, make_grid, newton_lambda_max, ridge_lambda_max, select_by_ic, CvConfig,
    Estimator, GridSpec, NoiseMethod, NoiseScale, RidgeMaxMethod,
};
