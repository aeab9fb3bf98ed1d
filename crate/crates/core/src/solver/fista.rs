//! Accelerated proximal gradient over a stacked variable `(b_1, ..., b_q, u)`.
//!
//! The smooth part is evaluated at `Σ b_j`, so one engine serves both plain
//! fits (`q = 1`) and infimal-sum splits. Each block carries its own
//! proximable term; the intercept is never penalized.

use nalgebra::DVector;

use crate::constraint::{self, ConstraintSpec};
use crate::data::{Coef, Dataset};
use crate::error::{Error, Result};
use crate::linalg::frobenius_dot;
use crate::loss::{self, LossSpec};
use crate::penalty::{self, PenaltySpec};

use super::{RestartRule, SolverConfig, Trace};

/// Non-smooth term attached to one block.
#[derive(Debug, Clone)]
pub(crate) enum BlockTerm {
    Free,
    Penalty(PenaltySpec),
    Constraint(ConstraintSpec),
}

impl BlockTerm {
    fn prox(&self, x: &Coef, step: f64) -> Coef {
        match self {
            BlockTerm::Free => x.clone(),
            BlockTerm::Penalty(p) => penalty::prox_unchecked(p, x, step),
            BlockTerm::Constraint(c) => constraint::project(c, x).expect("validated constraint"),
        }
    }

    fn value(&self, x: &Coef) -> f64 {
        match self {
            BlockTerm::Penalty(p) => penalty::value_unchecked(p, x),
            BlockTerm::Free | BlockTerm::Constraint(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Point {
    pub blocks: Vec<Coef>,
    pub inter: DVector<f64>,
}

impl Point {
    pub fn coef(&self) -> Coef {
        let mut c = self.blocks[0].clone();
        for b in &self.blocks[1..] {
            c += b;
        }
        c
    }

    fn combine(a: f64, x: &Point, b: f64, y: &Point) -> Point {
        Point {
            blocks: x
                .blocks
                .iter()
                .zip(&y.blocks)
                .map(|(p, q)| p * a + q * b)
                .collect(),
            inter: &x.inter * a + &y.inter * b,
        }
    }

    fn dot(&self, other: &Point) -> f64 {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .map(|(p, q)| frobenius_dot(p, q))
            .sum::<f64>()
            + self.inter.dot(&other.inter)
    }

    fn amax(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.amax())
            .fold(self.inter.amax(), f64::max)
    }
}

pub(crate) struct Problem<'a> {
    pub loss: &'a LossSpec,
    pub data: &'a Dataset,
    /// Generalized ridge folded into the smooth part.
    pub smooth_penalty: Option<&'a PenaltySpec>,
    pub terms: Vec<BlockTerm>,
    pub fit_intercept: bool,
    pub momentum: bool,
}

pub(crate) struct Outcome {
    pub point: Point,
    pub objective: f64,
    pub n_iter: usize,
    pub converged: bool,
    pub trace: Option<Trace>,
}

impl Problem<'_> {
    fn smooth_value(&self, p: &Point) -> f64 {
        let coef = p.coef();
        let z = self.data.linear_predictor(&coef, Some(&p.inter));
        let mut v = loss::value_from_predictor(self.loss, self.data, &z);
        if let Some(s) = self.smooth_penalty {
            v += penalty::value_unchecked(s, &coef);
        }
        v
    }

    fn smooth_value_grad(&self, p: &Point) -> (f64, Point) {
        let coef = p.coef();
        let z = self.data.linear_predictor(&coef, Some(&p.inter));
        let mut v = loss::value_from_predictor(self.loss, self.data, &z);
        let r = loss::scaled_residual(self.loss, self.data, &z);
        let mut g = self.data.x().tr_mul(&r);
        if let Some(s) = self.smooth_penalty {
            v += penalty::value_unchecked(s, &coef);
            if let penalty::PenaltyKind::GeneralizedRidge { tikhonov } = &s.kind {
                g += tikhonov.tr_mul(&(tikhonov * &coef)) * s.pen_val;
            }
        }
        let gu = if self.fit_intercept {
            loss::column_sums(&r)
        } else {
            DVector::zeros(p.inter.len())
        };
        (
            v,
            Point {
                blocks: vec![g; p.blocks.len()],
                inter: gu,
            },
        )
    }

    fn nonsmooth_value(&self, p: &Point) -> f64 {
        self.terms.iter().zip(&p.blocks).map(|(t, b)| t.value(b)).sum()
    }

    fn prox_step(&self, y: &Point, g: &Point, step: f64) -> Point {
        Point {
            blocks: self
                .terms
                .iter()
                .zip(y.blocks.iter().zip(&g.blocks))
                .map(|(t, (yb, gb))| t.prox(&(yb - gb * step), step))
                .collect(),
            inter: if self.fit_intercept {
                &y.inter - &g.inter * step
            } else {
                y.inter.clone()
            },
        }
    }

    /// Makes a starting point feasible for constrained blocks.
    fn feasible(&self, mut p: Point) -> Point {
        for (t, b) in self.terms.iter().zip(p.blocks.iter_mut()) {
            if matches!(t, BlockTerm::Constraint(_)) {
                *b = t.prox(b, 1.0);
            }
        }
        p
    }

    /// Gradient-mapping residual `‖p - prox(p - t ∇f(p))‖∞`.
    pub fn residual(&self, p: &Point, step: f64) -> f64 {
        let (_, g) = self.smooth_value_grad(p);
        let q = self.prox_step(p, &g, step);
        Point::combine(1.0, p, -1.0, &q).amax()
    }

    pub fn solve(&self, start: Point, lipschitz: Option<f64>, cfg: &SolverConfig) -> Result<Outcome> {
        let backtrack = !matches!(lipschitz, Some(l) if l > 0.0 && l.is_finite());
        let mut step = match lipschitz {
            Some(l) if !backtrack => 1.0 / l,
            _ => cfg.initial_step,
        };
        let mut trace = cfg.record_trace.then(Trace::default);

        let mut x = self.feasible(start);
        let mut obj = self.smooth_value(&x) + self.nonsmooth_value(&x);
        if !obj.is_finite() {
            return Err(Error::Divergence("objective is not finite at the starting point".into()));
        }
        if let Some(t) = trace.as_mut() {
            t.objectives.push(obj);
        }
        let mut best = (obj, x.clone());
        let mut y = x.clone();
        let mut theta = 1.0f64;
        let mut converged = false;
        let mut n_iter = 0;

        while n_iter < cfg.max_iter {
            n_iter += 1;
            let (fy, gy) = self.smooth_value_grad(&y);
            if !fy.is_finite() {
                return Err(Error::Divergence(format!("smooth part is {fy} at iteration {n_iter}")));
            }
            let (x_new, f_new, gap) = loop {
                let cand = self.prox_step(&y, &gy, step);
                let f_cand = self.smooth_value(&cand);
                let diff = Point::combine(1.0, &cand, -1.0, &y);
                let bound = fy + gy.dot(&diff) + diff.dot(&diff) / (2.0 * step);
                let gap = f_cand - bound;
                if !backtrack || (f_cand.is_finite() && gap <= 1e-12 * fy.abs().max(1.0)) {
                    break (cand, f_cand, gap);
                }
                step *= cfg.backtracking_shrink;
                if step < 1e-30 {
                    return Err(Error::Divergence("line search step underflow".into()));
                }
            };
            let obj_new = f_new + self.nonsmooth_value(&x_new);
            if !obj_new.is_finite() {
                return Err(Error::Divergence(format!("objective is {obj_new} at iteration {n_iter}")));
            }

            let mut restarted = false;
            if self.momentum {
                let up = Point::combine(1.0, &y, -1.0, &x_new);
                let move_dir = Point::combine(1.0, &x_new, -1.0, &x);
                if cfg.restart == RestartRule::Gradient && up.dot(&move_dir) > 0.0 {
                    theta = 1.0;
                    y = x_new.clone();
                    restarted = true;
                } else {
                    let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                    y = Point::combine(1.0 + (theta - 1.0) / theta_new, &x_new, -(theta - 1.0) / theta_new, &x);
                    theta = theta_new;
                }
            } else {
                y = x_new.clone();
            }

            if let Some(t) = trace.as_mut() {
                t.objectives.push(obj_new);
                t.steps.push(step);
                t.majorization_gaps.push(gap / fy.abs().max(1.0));
                if restarted {
                    t.restarts.push(n_iter);
                }
            }
            if obj_new < best.0 {
                best = (obj_new, x_new.clone());
            }

            let rel = (obj - obj_new).abs() / obj.abs().max(1.0);
            x = x_new;
            obj = obj_new;
            if rel < cfg.rel_tol {
                let tol = cfg.residual_tol * (1.0 + x.amax());
                if self.residual(&x, step) <= tol {
                    converged = true;
                    break;
                }
            }
        }

        let (objective, point) = if best.0 < obj { best } else { (obj, x) };
        if let Some(t) = trace.as_mut() {
            t.final_step = step;
        }
        Ok(Outcome {
            point,
            objective,
            n_iter,
            converged,
            trace,
        })
    }
}
