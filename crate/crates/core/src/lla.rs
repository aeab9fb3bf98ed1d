//! Two-stage estimators: adaptive weights and the local linear approximation
//! (LLA) algorithm for folded-concave penalties.
//!
//! Both reduce to a weighted convex problem `L(B, u) + Σ_j w_j t(B)_j` where
//! `t` is one of the sparsity transforms below.

use nalgebra::DVector;

use crate::data::{Coef, Dataset};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::loss::{self, LossSpec};
use crate::penalty::{ConcaveGenerator, PenaltyKind, PenaltySpec};
use crate::solver::{self, FitResult, Regularizer, SolverConfig};

/// Weight used for an infinite adaptive weight; the weighted prox kills
/// the coordinate.
pub const INFINITE_WEIGHT: f64 = 1e300;

#[derive(Debug, Clone, PartialEq)]
pub enum TransformSpec {
    /// `|b_j|` for every entry (column-major).
    Entrywise,
    /// `‖B[G_g, :]‖_F` for every group of rows.
    Group(Vec<Vec<usize>>),
    /// `‖B[j, :]‖₂` for every row.
    MultiTaskRows,
    /// Singular values, descending.
    SingularValues,
}

impl TransformSpec {
    pub fn output_dim(&self, d: usize, k: usize) -> usize {
        match self {
            Self::Entrywise => d * k,
            Self::Group(g) => g.len(),
            Self::MultiTaskRows => d,
            Self::SingularValues => d.min(k),
        }
    }

    /// Weighted convex penalty `pen_val Σ_j w_j t(B)_j`.
    pub fn weighted_penalty(&self, weights: DVector<f64>, pen_val: f64) -> PenaltySpec {
        let kind = match self {
            Self::Entrywise => PenaltyKind::Lasso {
                weights: Some(weights),
            },
            Self::Group(groups) => PenaltyKind::GroupLasso {
                groups: groups.clone(),
                weights: Some(weights),
            },
            Self::MultiTaskRows => PenaltyKind::MultiTaskLasso {
                weights: Some(weights),
            },
            Self::SingularValues => PenaltyKind::NuclearNorm {
                weights: Some(weights),
            },
        };
        PenaltySpec::new(kind, pen_val)
    }
}

pub fn transform(spec: &TransformSpec, beta: &Coef) -> Result<DVector<f64>> {
    let out = match spec {
        TransformSpec::Entrywise => DVector::from_iterator(beta.len(), beta.iter().map(|v| v.abs())),
        TransformSpec::Group(groups) => {
            for g in groups {
                if let Some(&j) = g.iter().find(|&&j| j >= beta.nrows()) {
                    return Err(Error::InvalidInput(format!("group index {j} out of range")));
                }
            }
            DVector::from_iterator(
                groups.len(),
                groups.iter().map(|g| {
                    g.iter()
                        .map(|&j| beta.row(j).norm_squared())
                        .sum::<f64>()
                        .sqrt()
                }),
            )
        }
        TransformSpec::MultiTaskRows => {
            DVector::from_iterator(beta.nrows(), beta.row_iter().map(|r| r.norm()))
        }
        TransformSpec::SingularValues => linalg::singular_values(beta),
    };
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    None,
    /// Adds `1/n` before inverting.
    OneOverN,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveSpec {
    pub exponent: f64,
    pub perturbation: Perturbation,
}

impl Default for AdaptiveSpec {
    fn default() -> Self {
        Self {
            exponent: 1.0,
            perturbation: Perturbation::OneOverN,
        }
    }
}

/// `w_j = t(init)_j^{-γ}` or `(t(init)_j + 1/n)^{-γ}`.
pub fn adaptive_weights(spec: &AdaptiveSpec, tspec: &TransformSpec, init: &Coef, n: usize) -> Result<DVector<f64>> {
    if !(spec.exponent > 0.0) {
        return Err(Error::InvalidInput(format!(
            "adaptive exponent must be > 0, got {}",
            spec.exponent
        )));
    }
    let t = transform(tspec, init)?;
    let shift = match spec.perturbation {
        Perturbation::None => 0.0,
        Perturbation::OneOverN => {
            if n == 0 {
                return Err(Error::InvalidInput("1/n perturbation needs n > 0".into()));
            }
            1.0 / n as f64
        }
    };
    Ok(t.map(|v| {
        let base = v + shift;
        if base == 0.0 {
            INFINITE_WEIGHT
        } else {
            base.powf(-spec.exponent).min(INFINITE_WEIGHT)
        }
    }))
}

/// Penalized objective with a folded-concave penalty:
/// `L(B, u) + Σ_j g_λ(t(B)_j)`.
pub fn nonconvex_objective(
    loss: &LossSpec,
    gen: &ConcaveGenerator,
    tspec: &TransformSpec,
    data: &Dataset,
    coef: &Coef,
    intercept: Option<&DVector<f64>>,
) -> Result<f64> {
    let l = loss::loss_value(loss, data, coef, intercept)?;
    let t = transform(tspec, coef)?;
    Ok(l + t.iter().map(|v| gen.value_unchecked(*v)).sum::<f64>())
}

/// `w_j = g'_λ(t(B)_j)`.
pub fn majorization_weights(gen: &ConcaveGenerator, tspec: &TransformSpec, coef: &Coef) -> Result<DVector<f64>> {
    Ok(transform(tspec, coef)?.map(|v| gen.derivative_unchecked(v)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlaResult {
    /// Final iterate.
    pub fit: FitResult,
    /// Coefficient after each LLA step (`steps[0]` is `B^(1)`).
    pub steps: Vec<Coef>,
    /// Non-convex objective after each step.
    pub objectives: Vec<f64>,
    /// Whether the transform stabilized before `max_steps`.
    pub converged: bool,
}

/// Runs up to `max_steps` LLA steps from `init`. Each step solves the
/// weighted convex subproblem with FISTA, warm-started from the previous
/// step (or from `warm_start` for the first one).
#[allow(clippy::too_many_arguments)]
pub fn lla(
    loss: &LossSpec,
    gen: &ConcaveGenerator,
    tspec: &TransformSpec,
    data: &Dataset,
    init: &Coef,
    cfg: &SolverConfig,
    max_steps: usize,
    warm_start: Option<&FitResult>,
) -> Result<LlaResult> {
    gen.validate()?;
    check_dim("initializer rows", data.d(), init.nrows())?;
    check_dim("initializer columns", loss.coef_columns(data), init.ncols())?;
    if max_steps == 0 {
        return Err(Error::InvalidInput("LLA needs at least one step".into()));
    }
    let mut t_current = transform(tspec, init)?;
    let mut prev: Option<FitResult> = warm_start.cloned();
    let mut steps = Vec::with_capacity(max_steps);
    let mut objectives = Vec::with_capacity(max_steps);
    let mut converged = false;

    for _ in 0..max_steps {
        let w = t_current.map(|v| gen.derivative_unchecked(v));
        let sub = Regularizer::Penalty(tspec.weighted_penalty(w, 1.0));
        let f = solver::fit(loss, &sub, data, cfg, prev.as_ref())?;
        let obj = nonconvex_objective(loss, gen, tspec, data, &f.coef, f.intercept.as_ref())?;
        let t_new = transform(tspec, &f.coef)?;
        let scale = 1.0 + t_current.amax();
        let change = (&t_new - &t_current).amax();
        let same_support = t_new
            .iter()
            .zip(t_current.iter())
            .all(|(a, b)| (*a == 0.0) == (*b == 0.0));
        steps.push(f.coef.clone());
        objectives.push(obj);
        t_current = t_new;
        prev = Some(f);
        if same_support && change <= 1e-8 * scale {
            converged = true;
            break;
        }
    }
    Ok(LlaResult {
        fit: prev.expect("at least one step ran"),
        steps,
        objectives,
        converged,
    })
}

/// Smallest tuning value at which one LLA step from `init` returns zero
/// (and the next step stays there), given a strong killer lower bound
/// `klb` of the unweighted subproblem:
/// `max(‖t(init)‖∞ / b₁, klb / a₁)`.
pub fn lla_killer_bound(gen: &ConcaveGenerator, tspec: &TransformSpec, init: &Coef, klb: f64) -> Result<f64> {
    let (a1, b1) = gen.lla_constants();
    let t = transform(tspec, init)?;
    let tmax = t.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok((tmax / b1).max(klb / a1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn col(v: &[f64]) -> Coef {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn transforms() {
        assert_eq!(transform(&TransformSpec::Entrywise, &col(&[-2.0, 0.0])).unwrap().as_slice(), &[2.0, 0.0]);
        let g = TransformSpec::Group(vec![vec![0, 1], vec![2]]);
        assert_eq!(transform(&g, &col(&[3.0, 4.0, 0.0])).unwrap().as_slice(), &[5.0, 0.0]);
        let diag = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let s = transform(&TransformSpec::SingularValues, &diag).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-12 && (s[1] - 1.0).abs() < 1e-12);
        let rows = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 1.0]);
        assert_eq!(transform(&TransformSpec::MultiTaskRows, &rows).unwrap().as_slice(), &[5.0, 1.0]);
    }

    #[test]
    fn adaptive_weight_formulas() {
        let spec = AdaptiveSpec::default();
        let w = adaptive_weights(&spec, &TransformSpec::Entrywise, &col(&[2.0, 0.0]), 10).unwrap();
        assert!((w[0] - 1.0 / 2.1).abs() < 1e-15);
        assert!((w[1] - 10.0).abs() < 1e-12);
        let sqrt = AdaptiveSpec {
            exponent: 0.5,
            perturbation: Perturbation::None,
        };
        let w = adaptive_weights(&sqrt, &TransformSpec::Entrywise, &col(&[4.0]), 10).unwrap();
        assert_eq!(w[0], 0.5);
        let raw = AdaptiveSpec {
            exponent: 1.0,
            perturbation: Perturbation::None,
        };
        let w = adaptive_weights(&raw, &TransformSpec::Entrywise, &col(&[2.0, 0.0]), 10).unwrap();
        assert_eq!(w.as_slice(), &[0.5, INFINITE_WEIGHT]);
        let w = adaptive_weights(&raw, &TransformSpec::Entrywise, &col(&[3.0, -3.0, 3.0]), 10).unwrap();
        assert!(w.iter().all(|v| *v == w[0]));
        assert!(adaptive_weights(&AdaptiveSpec { exponent: 0.0, ..raw }, &TransformSpec::Entrywise, &col(&[1.0]), 1).is_err());
    }

    #[test]
    fn killer_bound_with_zero_init() {
        let scad = ConcaveGenerator::scad(1.0, 3.7).unwrap();
        let zero = col(&[0.0, 0.0]);
        assert_eq!(lla_killer_bound(&scad, &TransformSpec::Entrywise, &zero, 0.8).unwrap(), 0.8);
        let mcp = ConcaveGenerator::mcp(1.0, 3.0).unwrap();
        assert_eq!(lla_killer_bound(&mcp, &TransformSpec::Entrywise, &zero, 0.8).unwrap(), 1.6);
        let init = col(&[0.0, -6.0]);
        assert_eq!(lla_killer_bound(&mcp, &TransformSpec::Entrywise, &init, 0.8).unwrap(), 4.0);
    }
}
