//! Convex penalties, their values and proximal operators.
//!
//! Every penalty is `pen_val * π(B)` for a coefficient block `B` (`d x K`).
//! Entrywise weights are stored column-major with one entry per coefficient;
//! group and multi-task penalties act on blocks of rows.

mod concave;
mod tv;

pub use concave::{ConcaveGenerator, ConcaveKind};
pub use tv::tv_prox;

use nalgebra::{DMatrix, DVector};

use crate::data::Coef;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, soft_threshold};

#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyKind {
    /// `Σ w_j |b_j|`.
    Lasso { weights: Option<DVector<f64>> },
    /// `½ Σ w_j b_j²`.
    Ridge { weights: Option<DVector<f64>> },
    /// `½ ‖Γ B‖²_F`. Smooth; the solver adds its gradient to the loss.
    GeneralizedRidge { tikhonov: DMatrix<f64> },
    /// `Σ_g w_g ‖B[G_g, :]‖_F`. Rows outside every group are unpenalized.
    /// Weights default to `√|G_g|`.
    GroupLasso {
        groups: Vec<Vec<usize>>,
        weights: Option<DVector<f64>>,
    },
    /// `Σ_j w_j ‖B[j, :]‖₂`.
    MultiTaskLasso { weights: Option<DVector<f64>> },
    /// `Σ_j w_j |B[j+1, k] - B[j, k]|` for every column `k`.
    Tv1 { weights: Option<DVector<f64>> },
    /// `Σ_j w_j σ_j(B)` with σ sorted descending and `w` non-decreasing.
    NuclearNorm { weights: Option<DVector<f64>> },
    /// `mix Σ w_j |b_j| + (1 - mix) ½ Σ w_j b_j²`.
    ElasticNet {
        mix: f64,
        weights: Option<DVector<f64>>,
    },
    /// `mix Σ w_j |b_j| + (1 - mix) Σ_g v_g ‖B[G_g, :]‖_F`.
    SparseGroupLasso {
        mix: f64,
        groups: Vec<Vec<usize>>,
        weights: Option<DVector<f64>>,
        group_weights: Option<DVector<f64>>,
    },
    /// `mix Σ |b_j| + (1 - mix) Σ_j w_j |B[j+1, k] - B[j, k]|`. The entrywise
    /// part is unweighted so that the composed prox stays exact.
    SparseFusedLasso {
        mix: f64,
        weights: Option<DVector<f64>>,
    },
    /// Infimal sum `inf { Σ π_j(b_j) : Σ b_j = B }`, solved by splitting.
    InfimalSum { components: Vec<PenaltySpec> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub pen_val: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, pen_val: f64) -> Self {
        Self { kind, pen_val }
    }

    pub fn lasso(pen_val: f64) -> Self {
        Self::new(PenaltyKind::Lasso { weights: None }, pen_val)
    }

    pub fn ridge(pen_val: f64) -> Self {
        Self::new(PenaltyKind::Ridge { weights: None }, pen_val)
    }

    pub fn group_lasso(pen_val: f64, groups: Vec<Vec<usize>>) -> Self {
        Self::new(PenaltyKind::GroupLasso { groups, weights: None }, pen_val)
    }

    pub fn multi_task_lasso(pen_val: f64) -> Self {
        Self::new(PenaltyKind::MultiTaskLasso { weights: None }, pen_val)
    }

    pub fn tv1(pen_val: f64) -> Self {
        Self::new(PenaltyKind::Tv1 { weights: None }, pen_val)
    }

    pub fn nuclear_norm(pen_val: f64) -> Self {
        Self::new(PenaltyKind::NuclearNorm { weights: None }, pen_val)
    }

    pub fn elastic_net(pen_val: f64, mix: f64) -> Self {
        Self::new(PenaltyKind::ElasticNet { mix, weights: None }, pen_val)
    }

    pub fn with_pen_val(&self, pen_val: f64) -> Self {
        Self {
            kind: self.kind.clone(),
            pen_val,
        }
    }

    /// Replaces the kind's primary weight vector.
    pub fn with_weights(mut self, w: DVector<f64>) -> Self {
        match &mut self.kind {
            PenaltyKind::Lasso { weights }
            | PenaltyKind::Ridge { weights }
            | PenaltyKind::GroupLasso { weights, .. }
            | PenaltyKind::MultiTaskLasso { weights }
            | PenaltyKind::Tv1 { weights }
            | PenaltyKind::NuclearNorm { weights }
            | PenaltyKind::ElasticNet { weights, .. }
            | PenaltyKind::SparseGroupLasso { weights, .. }
            | PenaltyKind::SparseFusedLasso { weights, .. } => *weights = Some(w),
            PenaltyKind::GeneralizedRidge { .. } | PenaltyKind::InfimalSum { .. } => {}
        }
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PenaltyKind::Lasso { .. } => "lasso",
            PenaltyKind::Ridge { .. } => "ridge",
            PenaltyKind::GeneralizedRidge { .. } => "generalized_ridge",
            PenaltyKind::GroupLasso { .. } => "group_lasso",
            PenaltyKind::MultiTaskLasso { .. } => "multi_task_lasso",
            PenaltyKind::Tv1 { .. } => "tv1",
            PenaltyKind::NuclearNorm { .. } => "nuclear_norm",
            PenaltyKind::ElasticNet { .. } => "elastic_net",
            PenaltyKind::SparseGroupLasso { .. } => "sparse_group_lasso",
            PenaltyKind::SparseFusedLasso { .. } => "sparse_fused_lasso",
            PenaltyKind::InfimalSum { .. } => "infimal_sum",
        }
    }

    /// Differentiable penalties can be folded into the smooth part.
    pub fn is_smooth(&self) -> bool {
        matches!(
            self.kind,
            PenaltyKind::Ridge { .. } | PenaltyKind::GeneralizedRidge { .. }
        )
    }

    /// Checks parameters against a `d x k` coefficient shape.
    pub fn validate(&self, d: usize, k: usize) -> Result<()> {
        if !(self.pen_val >= 0.0 && self.pen_val.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "penalty value must be finite and >= 0, got {}",
                self.pen_val
            )));
        }
        let check_w = |w: &Option<DVector<f64>>, len: usize, what: &'static str| -> Result<()> {
            if let Some(w) = w {
                check_dim(what, len, w.len())?;
                if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidInput(format!("{what} must be finite and >= 0")));
                }
            }
            Ok(())
        };
        let check_mix = |mix: f64| -> Result<()> {
            if (0.0..=1.0).contains(&mix) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("mix must lie in [0, 1], got {mix}")))
            }
        };
        match &self.kind {
            PenaltyKind::Lasso { weights } | PenaltyKind::Ridge { weights } => {
                check_w(weights, d * k, "entrywise weights")
            }
            PenaltyKind::GeneralizedRidge { tikhonov } => {
                check_dim("tikhonov columns", d, tikhonov.ncols())
            }
            PenaltyKind::GroupLasso { groups, weights } => {
                check_groups(groups, d)?;
                check_w(weights, groups.len(), "group weights")
            }
            PenaltyKind::MultiTaskLasso { weights } => check_w(weights, d, "row weights"),
            PenaltyKind::Tv1 { weights } => check_w(weights, d.saturating_sub(1), "tv weights"),
            PenaltyKind::NuclearNorm { weights } => {
                check_w(weights, d.min(k), "singular value weights")?;
                if let Some(w) = weights {
                    if w.as_slice().windows(2).any(|p| p[1] < p[0]) {
                        return Err(Error::InvalidInput(
                            "nuclear norm weights must be non-decreasing".into(),
                        ));
                    }
                }
                Ok(())
            }
            PenaltyKind::ElasticNet { mix, weights } => {
                check_mix(*mix)?;
                check_w(weights, d * k, "entrywise weights")
            }
            PenaltyKind::SparseGroupLasso {
                mix,
                groups,
                weights,
                group_weights,
            } => {
                check_mix(*mix)?;
                check_groups(groups, d)?;
                check_w(weights, d * k, "entrywise weights")?;
                check_w(group_weights, groups.len(), "group weights")
            }
            PenaltyKind::SparseFusedLasso { mix, weights } => {
                check_mix(*mix)?;
                check_w(weights, d.saturating_sub(1), "tv weights")
            }
            PenaltyKind::InfimalSum { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidInput("infimal sum needs a component".into()));
                }
                for c in components {
                    if matches!(c.kind, PenaltyKind::InfimalSum { .. }) {
                        return Err(Error::Unsupported("nested infimal sums".into()));
                    }
                    c.validate(d, k)?;
                }
                Ok(())
            }
        }
    }

    fn check_shape(&self, x: &Coef) -> Result<()> {
        self.validate(x.nrows(), x.ncols())
    }
}

fn check_groups(groups: &[Vec<usize>], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    for g in groups {
        if g.is_empty() {
            return Err(Error::InvalidInput("empty group".into()));
        }
        for &j in g {
            if j >= d {
                return Err(Error::InvalidInput(format!("group index {j} out of range 0..{d}")));
            }
            if seen[j] {
                return Err(Error::InvalidInput(format!("index {j} appears in two groups")));
            }
            seen[j] = true;
        }
    }
    Ok(())
}

fn entry_weight(w: &Option<DVector<f64>>, i: usize) -> f64 {
    w.as_ref().map_or(1.0, |w| w[i])
}

fn group_weight(w: &Option<DVector<f64>>, groups: &[Vec<usize>], g: usize) -> f64 {
    w.as_ref().map_or((groups[g].len() as f64).sqrt(), |w| w[g])
}

fn block_norm(x: &Coef, rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&j| x.row(j).norm_squared())
        .sum::<f64>()
        .sqrt()
}

fn tv_value(x: &Coef, w: &Option<DVector<f64>>) -> f64 {
    let mut s = 0.0;
    for col in x.column_iter() {
        for j in 0..x.nrows().saturating_sub(1) {
            s += entry_weight(w, j) * (col[j + 1] - col[j]).abs();
        }
    }
    s
}

fn nuclear_value(x: &Coef, w: &Option<DVector<f64>>) -> f64 {
    linalg::singular_values(x)
        .iter()
        .enumerate()
        .map(|(j, s)| entry_weight(w, j) * s)
        .sum()
}

/// `pen_val * π(B)`. Infimal sums need an explicit split; see
/// [`infimal_value`].
pub fn penalty_value(spec: &PenaltySpec, beta: &Coef) -> Result<f64> {
    spec.check_shape(beta)?;
    Ok(spec.pen_val * unscaled_value(spec, beta)?)
}

/// Value without shape validation, for specs already checked by the caller.
pub(crate) fn value_unchecked(spec: &PenaltySpec, x: &Coef) -> f64 {
    spec.pen_val * unscaled_value(spec, x).expect("not an infimal sum")
}

fn unscaled_value(spec: &PenaltySpec, x: &Coef) -> Result<f64> {
    let v = match &spec.kind {
        PenaltyKind::Lasso { weights } => x
            .iter()
            .enumerate()
            .map(|(i, v)| entry_weight(weights, i) * v.abs())
            .sum(),
        PenaltyKind::Ridge { weights } => {
            0.5 * x
                .iter()
                .enumerate()
                .map(|(i, v)| entry_weight(weights, i) * v * v)
                .sum::<f64>()
        }
        PenaltyKind::GeneralizedRidge { tikhonov } => 0.5 * (tikhonov * x).norm_squared(),
        PenaltyKind::GroupLasso { groups, weights } => groups
            .iter()
            .enumerate()
            .map(|(g, rows)| group_weight(weights, groups, g) * block_norm(x, rows))
            .sum(),
        PenaltyKind::MultiTaskLasso { weights } => x
            .row_iter()
            .enumerate()
            .map(|(j, r)| entry_weight(weights, j) * r.norm())
            .sum(),
        PenaltyKind::Tv1 { weights } => tv_value(x, weights),
        PenaltyKind::NuclearNorm { weights } => nuclear_value(x, weights),
        PenaltyKind::ElasticNet { mix, weights } => x
            .iter()
            .enumerate()
            .map(|(i, v)| entry_weight(weights, i) * (mix * v.abs() + (1.0 - mix) * 0.5 * v * v))
            .sum(),
        PenaltyKind::SparseGroupLasso {
            mix,
            groups,
            weights,
            group_weights,
        } => {
            let l1: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| entry_weight(weights, i) * v.abs())
                .sum();
            let grp: f64 = groups
                .iter()
                .enumerate()
                .map(|(g, rows)| group_weight(group_weights, groups, g) * block_norm(x, rows))
                .sum();
            mix * l1 + (1.0 - mix) * grp
        }
        PenaltyKind::SparseFusedLasso { mix, weights } => {
            mix * x.iter().map(|v| v.abs()).sum::<f64>() + (1.0 - mix) * tv_value(x, weights)
        }
        PenaltyKind::InfimalSum { .. } => {
            return Err(Error::Unsupported(
                "an infimal sum is evaluated on an explicit split".into(),
            ))
        }
    };
    Ok(v)
}

/// `Σ_j π_j(b_j)` for an explicit split of the coefficient.
pub fn infimal_value(components: &[PenaltySpec], split: &[Coef]) -> Result<f64> {
    check_dim("infimal split length", components.len(), split.len())?;
    components
        .iter()
        .zip(split)
        .map(|(c, b)| penalty_value(c, b))
        .sum()
}

/// `argmin_z ½‖x - z‖²/step + pen_val π(z)`.
pub fn prox(spec: &PenaltySpec, x: &Coef, step: f64) -> Result<Coef> {
    if !(step > 0.0) {
        return Err(Error::InvalidInput(format!("prox step must be > 0, got {step}")));
    }
    spec.check_shape(x)?;
    Ok(prox_unchecked(spec, x, step))
}

/// Prox without parameter validation; `spec` must already be valid for the
/// shape of `x` and must not be an infimal sum.
pub(crate) fn prox_unchecked(spec: &PenaltySpec, x: &Coef, step: f64) -> Coef {
    let tau = step * spec.pen_val;
    if tau == 0.0 {
        return x.clone();
    }
    match &spec.kind {
        PenaltyKind::Lasso { weights } => soft_entries(x, tau, weights),
        PenaltyKind::Ridge { weights } => {
            let mut z = x.clone();
            for (i, v) in z.iter_mut().enumerate() {
                *v /= 1.0 + tau * entry_weight(weights, i);
            }
            z
        }
        PenaltyKind::GeneralizedRidge { tikhonov } => {
            let d = x.nrows();
            let a = DMatrix::identity(d, d) + tikhonov.tr_mul(tikhonov) * tau;
            let chol = a.cholesky().expect("I + τΓᵀΓ is positive definite");
            chol.solve(x)
        }
        PenaltyKind::GroupLasso { groups, weights } => {
            let mut z = x.clone();
            shrink_groups(&mut z, groups, |g| tau * group_weight(weights, groups, g));
            z
        }
        PenaltyKind::MultiTaskLasso { weights } => {
            let mut z = x.clone();
            for (j, mut row) in z.row_iter_mut().enumerate() {
                let nrm = row.norm();
                let t = tau * entry_weight(weights, j);
                let scale = if nrm > t { 1.0 - t / nrm } else { 0.0 };
                row *= scale;
            }
            z
        }
        PenaltyKind::Tv1 { weights } => tv_columns(x, tau, weights),
        PenaltyKind::NuclearNorm { weights } => {
            let svd = linalg::svd(x);
            let sigma = DVector::from_iterator(
                svd.sigma.len(),
                svd.sigma
                    .iter()
                    .enumerate()
                    .map(|(j, s)| (s - tau * entry_weight(weights, j)).max(0.0)),
            );
            svd.compose(&sigma)
        }
        PenaltyKind::ElasticNet { mix, weights } => {
            let mut z = soft_entries(x, tau * mix, weights);
            for (i, v) in z.iter_mut().enumerate() {
                *v /= 1.0 + tau * (1.0 - mix) * entry_weight(weights, i);
            }
            z
        }
        PenaltyKind::SparseGroupLasso {
            mix,
            groups,
            weights,
            group_weights,
        } => {
            let mut z = soft_entries(x, tau * mix, weights);
            shrink_groups(&mut z, groups, |g| {
                tau * (1.0 - mix) * group_weight(group_weights, groups, g)
            });
            z
        }
        PenaltyKind::SparseFusedLasso { mix, weights } => {
            let z = tv_columns(x, tau * (1.0 - mix), weights);
            soft_entries(&z, tau * mix, &None)
        }
        PenaltyKind::InfimalSum { .. } => {
            unreachable!("infimal sums are handled by the splitting solver")
        }
    }
}

fn soft_entries(x: &Coef, tau: f64, weights: &Option<DVector<f64>>) -> Coef {
    let mut z = x.clone();
    for (i, v) in z.iter_mut().enumerate() {
        *v = soft_threshold(*v, tau * entry_weight(weights, i));
    }
    z
}

fn shrink_groups(z: &mut Coef, groups: &[Vec<usize>], threshold: impl Fn(usize) -> f64) {
    for (g, rows) in groups.iter().enumerate() {
        let nrm = block_norm(z, rows);
        let t = threshold(g);
        let scale = if nrm > t { 1.0 - t / nrm } else { 0.0 };
        for &j in rows {
            z.row_mut(j).scale_mut(scale);
        }
    }
}

fn tv_columns(x: &Coef, tau: f64, weights: &Option<DVector<f64>>) -> Coef {
    let d = x.nrows();
    let radius: Vec<f64> = (0..d.saturating_sub(1))
        .map(|j| tau * entry_weight(weights, j))
        .collect();
    let mut z = x.clone();
    for mut col in z.column_iter_mut() {
        let out = tv_prox(col.as_slice(), &radius);
        col.copy_from_slice(&out);
    }
    z
}
