use std::collections::BTreeMap;

use nalgebra::DVector;

use crate::data::{Coef, Dataset, StandardizationState};
use crate::error::{Error, Result};
use crate::lla::{self, AdaptiveSpec, TransformSpec};
use crate::loss::LossSpec;
use crate::penalty::{ConcaveGenerator, PenaltyKind, PenaltySpec};
use crate::solver::{self, check_grid, FitResult, SolverConfig, TunePath};

use super::bounds::{self, RidgeMaxMethod};

/// A family of fits indexed by one tuning value.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    /// Convex penalty; the grid replaces its `pen_val`. Adaptive estimators
    /// are convex penalties carrying weights from [`adaptive_penalty`].
    Convex(PenaltySpec),
    /// Folded-concave penalty on a transform, fitted by LLA from `init`.
    NonConvex {
        generator: ConcaveGenerator,
        transform: TransformSpec,
        init: Coef,
        max_steps: usize,
    },
}

/// Largest grid value and whether it provably zeroes the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaMax {
    pub value: f64,
    pub kills: bool,
    pub source: &'static str,
}

/// Weighted convex penalty with adaptive weights computed from `init`.
pub fn adaptive_penalty(spec: &AdaptiveSpec, tspec: &TransformSpec, init: &Coef, n: usize) -> Result<PenaltySpec> {
    let w = lla::adaptive_weights(spec, tspec, init, n)?;
    Ok(tspec.weighted_penalty(w, 1.0))
}

fn unit_weights(tspec: &TransformSpec, d: usize, k: usize) -> PenaltyKind {
    tspec
        .weighted_penalty(DVector::from_element(tspec.output_dim(d, k), 1.0), 1.0)
        .kind
}

impl Estimator {
    pub fn name(&self) -> String {
        match self {
            Estimator::Convex(p) => p.name().to_string(),
            Estimator::NonConvex { generator, .. } => format!("{:?}", generator.kind).to_lowercase(),
        }
    }

    /// Grid start. Sparsity-inducing penalties use their killer bound; the
    /// LLA estimators use the one-step killer bound from `init`; ridge uses
    /// the norm bound with `ridge_eps_norm`. TV has no killer bound, so the
    /// lasso bound is used as a scale and flagged with `kills = false`.
    pub fn lambda_max(&self, loss: &LossSpec, data: &Dataset, fit_intercept: bool, ridge_eps_norm: f64) -> Result<LambdaMax> {
        let d = data.d();
        let k = loss.coef_columns(data);
        match self {
            Estimator::Convex(p) => {
                p.validate(d, k)?;
                let ridge = |w: Option<&DVector<f64>>| -> Result<LambdaMax> {
                    let value = if matches!(loss, LossSpec::LeastSquares) && k == 1 {
                        bounds::ridge_lambda_max(data, ridge_eps_norm, RidgeMaxMethod::SvdExact, w, fit_intercept)?
                    } else {
                        bounds::newton_lambda_max(loss, data, ridge_eps_norm, fit_intercept)?
                    };
                    Ok(LambdaMax {
                        value,
                        kills: false,
                        source: "ridge_norm",
                    })
                };
                match &p.kind {
                    PenaltyKind::Ridge { weights } => ridge(weights.as_ref().filter(|_| k == 1)),
                    PenaltyKind::ElasticNet { mix, weights } if *mix == 0.0 => {
                        ridge(weights.as_ref().filter(|_| k == 1))
                    }
                    PenaltyKind::Tv1 { .. } | PenaltyKind::SparseFusedLasso { mix: 0.0, .. } => {
                        let g = bounds::gradient_at_zero(loss, data, fit_intercept)?;
                        Ok(LambdaMax {
                            value: bounds::klb_from_gradient(&PenaltyKind::Lasso { weights: None }, &g)?,
                            kills: false,
                            source: "lasso_fallback",
                        })
                    }
                    PenaltyKind::GeneralizedRidge { .. } | PenaltyKind::InfimalSum { .. } => {
                        Err(Error::Unsupported(format!(
                            "no automatic grid for {}; pass an explicit grid",
                            p.name()
                        )))
                    }
                    kind => {
                        let g = bounds::gradient_at_zero(loss, data, fit_intercept)?;
                        Ok(LambdaMax {
                            value: bounds::klb_from_gradient(kind, &g)?,
                            kills: true,
                            source: "killer_bound",
                        })
                    }
                }
            }
            Estimator::NonConvex {
                generator,
                transform,
                init,
                ..
            } => {
                let g = bounds::gradient_at_zero(loss, data, fit_intercept)?;
                let klb = bounds::klb_from_gradient(&unit_weights(transform, d, k), &g)?;
                Ok(LambdaMax {
                    value: lla::lla_killer_bound(generator, transform, init, klb)?,
                    kills: true,
                    source: "lla_killer_bound",
                })
            }
        }
    }

    /// Fits every grid value, warm-starting along the path.
    ///
    /// For LLA estimators each fit's `objective` is the non-convex objective
    /// and the metrics record `lla_steps` and `lla_converged`.
    pub fn fit_path(&self, loss: &LossSpec, data: &Dataset, grid: &[f64], cfg: &SolverConfig) -> Result<TunePath> {
        match self {
            Estimator::Convex(p) => solver::fit_path(loss, p, data, grid, cfg),
            Estimator::NonConvex {
                generator,
                transform,
                init,
                max_steps,
            } => {
                check_grid(grid)?;
                let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
                let mut metrics = Vec::with_capacity(grid.len());
                for &lam in grid {
                    let gen = generator.with_pen_val(lam);
                    let r = lla::lla(loss, &gen, transform, data, init, cfg, *max_steps, fits.last())?;
                    let mut fit = r.fit;
                    fit.objective = *r.objectives.last().expect("at least one step");
                    let mut m = BTreeMap::new();
                    m.insert("lla_steps".to_string(), r.steps.len() as f64);
                    m.insert("lla_converged".to_string(), if r.converged { 1.0 } else { 0.0 });
                    metrics.push(m);
                    fits.push(fit);
                }
                Ok(TunePath {
                    grid: grid.to_vec(),
                    fits,
                    metrics,
                    selected_index: None,
                    selection_rule: None,
                })
            }
        }
    }

    /// Same estimator expressed on a design standardized by `state`
    /// relative to the current one. Only the LLA initializer depends on
    /// the scale of the design.
    pub(crate) fn rescaled(&self, state: &StandardizationState) -> Estimator {
        match self {
            Estimator::Convex(_) => self.clone(),
            Estimator::NonConvex {
                generator,
                transform,
                init,
                max_steps,
            } => {
                let mut init = init.clone();
                for (j, mut row) in init.row_iter_mut().enumerate() {
                    row *= state.col_scales[j];
                }
                Estimator::NonConvex {
                    generator: *generator,
                    transform: transform.clone(),
                    init,
                    max_steps: *max_steps,
                }
            }
        }
    }
}
