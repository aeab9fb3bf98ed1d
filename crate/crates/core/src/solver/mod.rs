//! FISTA with adaptive restarts and backtracking, the warm-started path
//! engine, and the infimal-sum splitting solver.

mod fista;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::constraint::ConstraintSpec;
use crate::data::{Coef, Dataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::loss::{self, LossSpec};
use crate::penalty::{PenaltyKind, PenaltySpec};

use fista::{BlockTerm, Point, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestartRule {
    /// Reset momentum when `⟨y_k - x_{k+1}, x_{k+1} - x_k⟩ > 0`.
    Gradient,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Relative objective change below which the residual is checked.
    pub rel_tol: f64,
    /// Prox-gradient residual tolerance, scaled by `1 + ‖x‖∞`.
    pub residual_tol: f64,
    pub backtracking_shrink: f64,
    /// Trial step when the loss has no global Lipschitz constant.
    pub initial_step: f64,
    pub restart: RestartRule,
    /// Disable to run plain proximal gradient.
    pub momentum: bool,
    pub fit_intercept: bool,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            rel_tol: 1e-8,
            residual_tol: 1e-6,
            backtracking_shrink: 0.5,
            initial_step: 1.0,
            restart: RestartRule::Gradient,
            momentum: true,
            fit_intercept: true,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("residual_tol", self.residual_tol),
            ("initial_step", self.initial_step),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.backtracking_shrink > 0.0 && self.backtracking_shrink < 1.0) {
            return Err(Error::InvalidInput(format!(
                "backtracking_shrink must lie in (0, 1), got {}",
                self.backtracking_shrink
            )));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics, recorded when `record_trace` is set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    /// Objective at the start point followed by one entry per iteration.
    pub objectives: Vec<f64>,
    /// Iterations (1-based) after which momentum was reset.
    pub restarts: Vec<usize>,
    pub steps: Vec<f64>,
    /// Relative violation of the quadratic upper bound at each accepted step.
    pub majorization_gaps: Vec<f64>,
    pub final_step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coef: Coef,
    pub intercept: Option<DVector<f64>>,
    pub objective: f64,
    pub n_iter: usize,
    pub converged: bool,
    /// Infimal-sum components `b_j` with `coef = Σ b_j`.
    pub split: Option<Vec<Coef>>,
    pub trace: Option<Trace>,
}

/// Penalty or constraint for a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    Penalty(PenaltySpec),
    Constraint(ConstraintSpec),
}

impl From<PenaltySpec> for Regularizer {
    fn from(p: PenaltySpec) -> Self {
        Regularizer::Penalty(p)
    }
}

impl From<ConstraintSpec> for Regularizer {
    fn from(c: ConstraintSpec) -> Self {
        Regularizer::Constraint(c)
    }
}

/// Regularization path: one fit per grid value plus selection metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TunePath {
    /// Strictly decreasing tuning values.
    pub grid: Vec<f64>,
    pub fits: Vec<FitResult>,
    pub metrics: Vec<BTreeMap<String, f64>>,
    pub selected_index: Option<usize>,
    pub selection_rule: Option<SelectionRule>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    CvMin,
    Cv1se,
    Aic,
    Bic,
    Ebic { gamma: f64 },
}

impl SelectionRule {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionRule::CvMin => "cv_min",
            SelectionRule::Cv1se => "cv_1se",
            SelectionRule::Aic => "aic",
            SelectionRule::Bic => "bic",
            SelectionRule::Ebic { .. } => "ebic",
        }
    }
}

impl TunePath {
    pub fn selected_fit(&self) -> Option<&FitResult> {
        self.selected_index.map(|i| &self.fits[i])
    }

    pub fn selected_value(&self) -> Option<f64> {
        self.selected_index.map(|i| self.grid[i])
    }
}

fn check_common(loss: &LossSpec, data: &Dataset, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    loss.check_response(data)?;
    if !loss.is_smooth() {
        return Err(Error::Unsupported(
            "the exact quantile loss is not differentiable; use a smoothing bandwidth > 0".into(),
        ));
    }
    Ok(())
}

fn start_point(
    loss: &LossSpec,
    data: &Dataset,
    cfg: &SolverConfig,
    q: usize,
    warm: Option<&FitResult>,
) -> Point {
    let k = loss.coef_columns(data);
    let d = data.d();
    let inter = match warm.and_then(|w| w.intercept.clone()) {
        Some(u) if cfg.fit_intercept && u.len() == k => u,
        _ if cfg.fit_intercept => {
            loss::intercept_at_zero(loss, data).unwrap_or_else(|_| DVector::zeros(k))
        }
        _ => DVector::zeros(k),
    };
    let blocks = match warm {
        Some(w) if w.coef.shape() == (d, k) => match &w.split {
            Some(s) if s.len() == q => s.clone(),
            _ => {
                let mut b = vec![DMatrix::zeros(d, k); q];
                b[0] = w.coef.clone();
                b
            }
        },
        _ => vec![DMatrix::zeros(d, k); q],
    };
    Point { blocks, inter }
}

fn lipschitz(loss: &LossSpec, data: &Dataset, cfg: &SolverConfig, smooth: Option<&PenaltySpec>, q: usize) -> Option<f64> {
    let mut l = loss::lipschitz_constant(loss, data, cfg.fit_intercept)?;
    if let Some(PenaltySpec {
        kind: PenaltyKind::GeneralizedRidge { tikhonov },
        pen_val,
    }) = smooth
    {
        let s = linalg::max_singular_value(tikhonov);
        l += pen_val * s * s;
    }
    Some(l * q as f64)
}

fn into_result(out: fista::Outcome, cfg: &SolverConfig, keep_split: bool) -> FitResult {
    let coef = out.point.coef();
    FitResult {
        coef,
        intercept: cfg.fit_intercept.then_some(out.point.inter),
        objective: out.objective,
        n_iter: out.n_iter,
        converged: out.converged,
        split: keep_split.then_some(out.point.blocks),
        trace: out.trace,
    }
}

/// Fits the penalized (or constrained) problem with FISTA.
///
/// Infimal-sum penalties are dispatched to [`fit_infimal`]. Non-convex
/// constraints (sparse, rank) run plain projected gradient, a heuristic with
/// no global guarantee.
pub fn fit(
    loss: &LossSpec,
    reg: &Regularizer,
    data: &Dataset,
    cfg: &SolverConfig,
    warm_start: Option<&FitResult>,
) -> Result<FitResult> {
    check_common(loss, data, cfg)?;
    let d = data.d();
    let k = loss.coef_columns(data);
    let (term, smooth, momentum) = match reg {
        Regularizer::Penalty(p) => {
            if let PenaltyKind::InfimalSum { components } = &p.kind {
                return fit_infimal(loss, components, data, cfg, warm_start);
            }
            p.validate(d, k)?;
            if matches!(p.kind, PenaltyKind::GeneralizedRidge { .. }) {
                (BlockTerm::Free, Some(p), true)
            } else {
                (BlockTerm::Penalty(p.clone()), None, true)
            }
        }
        Regularizer::Constraint(c) => {
            c.validate(d)?;
            (BlockTerm::Constraint(c.clone()), None, c.is_convex())
        }
    };
    let problem = Problem {
        loss,
        data,
        smooth_penalty: smooth,
        terms: vec![term],
        fit_intercept: cfg.fit_intercept,
        momentum: momentum && cfg.momentum,
    };
    let start = start_point(loss, data, cfg, 1, warm_start);
    let out = problem.solve(start, lipschitz(loss, data, cfg, smooth, 1), cfg)?;
    Ok(into_result(out, cfg, false))
}

/// Solves `min L(Σ b_j, u) + Σ π_j(b_j)` over the stacked blocks.
pub fn fit_infimal(
    loss: &LossSpec,
    components: &[PenaltySpec],
    data: &Dataset,
    cfg: &SolverConfig,
    warm_start: Option<&FitResult>,
) -> Result<FitResult> {
    check_common(loss, data, cfg)?;
    if components.is_empty() {
        return Err(Error::InvalidInput("infimal sum needs a component".into()));
    }
    let d = data.d();
    let k = loss.coef_columns(data);
    for c in components {
        if matches!(c.kind, PenaltyKind::InfimalSum { .. }) {
            return Err(Error::Unsupported("nested infimal sums".into()));
        }
        c.validate(d, k)?;
    }
    let q = components.len();
    let problem = Problem {
        loss,
        data,
        smooth_penalty: None,
        terms: components.iter().cloned().map(BlockTerm::Penalty).collect(),
        fit_intercept: cfg.fit_intercept,
        momentum: cfg.momentum,
    };
    let start = start_point(loss, data, cfg, q, warm_start);
    let out = problem.solve(start, lipschitz(loss, data, cfg, None, q), cfg)?;
    Ok(into_result(out, cfg, true))
}

/// Fits every value of a strictly decreasing grid, warm-starting each fit
/// from the previous one.
pub fn fit_path(
    loss: &LossSpec,
    template: &PenaltySpec,
    data: &Dataset,
    grid: &[f64],
    cfg: &SolverConfig,
) -> Result<TunePath> {
    check_grid(grid)?;
    let mut fits: Vec<FitResult> = Vec::with_capacity(grid.len());
    for &lam in grid {
        let reg = Regularizer::Penalty(template.with_pen_val(lam));
        let f = fit(loss, &reg, data, cfg, fits.last())?;
        fits.push(f);
    }
    Ok(TunePath {
        grid: grid.to_vec(),
        fits,
        metrics: vec![BTreeMap::new(); grid.len()],
        selected_index: None,
        selection_rule: None,
    })
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty tuning grid".into()));
    }
    if grid.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput("tuning grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidInput("tuning grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `‖x - prox(x - t ∇f(x))‖∞` at a fit, for certificates in tests and
/// diagnostics. `step` is the prox step `t`.
pub fn prox_gradient_residual(
    loss: &LossSpec,
    reg: &Regularizer,
    data: &Dataset,
    fit: &FitResult,
    fit_intercept: bool,
    step: f64,
) -> Result<f64> {
    let k = loss.coef_columns(data);
    let (term, smooth) = match reg {
        Regularizer::Penalty(p) if matches!(p.kind, PenaltyKind::GeneralizedRidge { .. }) => {
            (BlockTerm::Free, Some(p))
        }
        Regularizer::Penalty(p) => {
            if matches!(p.kind, PenaltyKind::InfimalSum { .. }) {
                return Err(Error::Unsupported("residual of an infimal sum".into()));
            }
            p.validate(data.d(), k)?;
            (BlockTerm::Penalty(p.clone()), None)
        }
        Regularizer::Constraint(c) => (BlockTerm::Constraint(c.clone()), None),
    };
    let problem = Problem {
        loss,
        data,
        smooth_penalty: smooth,
        terms: vec![term],
        fit_intercept,
        momentum: false,
    };
    let p = Point {
        blocks: vec![fit.coef.clone()],
        inter: fit.intercept.clone().unwrap_or_else(|| DVector::zeros(k)),
    };
    Ok(problem.residual(&p, step))
}
