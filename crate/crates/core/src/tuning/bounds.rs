//! Largest useful tuning values: killer lower bounds for sparsity-inducing
//! penalties and norm-based bounds for ridge.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::{Coef, Dataset};
use crate::error::{Error, Result};
use crate::linalg;
use crate::loss::{self, LossSpec};
use crate::penalty::{PenaltyKind, PenaltySpec};

/// Gradient of the loss in `B` at `(0, û₀)`, where `û₀` minimizes the loss
/// over the intercept alone (or is zero without an intercept).
pub fn gradient_at_zero(loss: &LossSpec, data: &Dataset, fit_intercept: bool) -> Result<Coef> {
    loss.check_response(data)?;
    let k = loss.coef_columns(data);
    let zero = DMatrix::zeros(data.d(), k);
    let u0 = if fit_intercept {
        loss::intercept_at_zero(loss, data)?
    } else {
        DVector::zeros(k)
    };
    Ok(loss::loss_gradient(loss, data, &zero, Some(&u0))?.0)
}

fn ratio(num: f64, w: f64) -> Result<f64> {
    if w > 0.0 {
        Ok(num / w)
    } else {
        Err(Error::ZeroWeights)
    }
}

fn max_ratio(mut it: impl Iterator<Item = Result<f64>>) -> Result<f64> {
    it.try_fold(0.0f64, |m, r| Ok(m.max(r?)))
}

fn lasso_klb(g: &Coef, w: &Option<DVector<f64>>) -> Result<f64> {
    max_ratio(
        g.iter()
            .enumerate()
            .map(|(i, v)| ratio(v.abs(), w.as_ref().map_or(1.0, |w| w[i]))),
    )
}

fn group_klb(g: &Coef, groups: &[Vec<usize>], w: &Option<DVector<f64>>) -> Result<f64> {
    max_ratio(groups.iter().enumerate().map(|(i, rows)| {
        let norm = rows
            .iter()
            .map(|&j| g.row(j).norm_squared())
            .sum::<f64>()
            .sqrt();
        let wi = w.as_ref().map_or((rows.len() as f64).sqrt(), |w| w[i]);
        ratio(norm, wi)
    }))
}

/// Smallest `λ` for which `B = 0` solves the penalized problem, given the
/// gradient `g` of the loss at `(0, û₀)`. Only defined for penalties that
/// can zero out the whole coefficient.
pub fn klb_from_gradient(kind: &PenaltyKind, g: &Coef) -> Result<f64> {
    match kind {
        PenaltyKind::Lasso { weights } => lasso_klb(g, weights),
        PenaltyKind::GroupLasso { groups, weights } => group_klb(g, groups, weights),
        PenaltyKind::MultiTaskLasso { weights } => max_ratio(
            g.row_iter()
                .enumerate()
                .map(|(j, r)| ratio(r.norm(), weights.as_ref().map_or(1.0, |w| w[j]))),
        ),
        PenaltyKind::NuclearNorm { weights } => {
            // Dual of a non-decreasing weighted nuclear norm: partial sums
            // of singular values against partial sums of weights.
            let s = linalg::singular_values(g);
            let mut best = 0.0f64;
            let (mut num, mut den) = (0.0, 0.0);
            for (j, sj) in s.iter().enumerate() {
                num += sj;
                den += weights.as_ref().map_or(1.0, |w| w[j]);
                best = best.max(ratio(num, den)?);
            }
            Ok(best)
        }
        PenaltyKind::ElasticNet { mix, weights } => {
            if *mix == 0.0 {
                return Err(Error::Unsupported(
                    "elastic net with mix 0 is a ridge penalty and never kills".into(),
                ));
            }
            Ok(lasso_klb(g, weights)? / mix)
        }
        PenaltyKind::SparseGroupLasso {
            mix,
            groups,
            weights,
            group_weights,
        } => {
            let l1 = if *mix > 0.0 {
                lasso_klb(g, weights)? / mix
            } else {
                f64::INFINITY
            };
            let grp = if *mix < 1.0 {
                group_klb(g, groups, group_weights)? / (1.0 - mix)
            } else {
                f64::INFINITY
            };
            Ok(l1.min(grp))
        }
        PenaltyKind::SparseFusedLasso { mix, .. } if *mix > 0.0 => Ok(lasso_klb(g, &None)? / mix),
        _ => Err(Error::Unsupported(
            "this penalty has no killer bound".into(),
        )),
    }
}

/// Killer lower bound of `penalty` for `loss` on `data`.
pub fn klb(loss: &LossSpec, penalty: &PenaltySpec, data: &Dataset, fit_intercept: bool) -> Result<f64> {
    penalty.validate(data.d(), loss.coef_columns(data))?;
    let g = gradient_at_zero(loss, data, fit_intercept)?;
    klb_from_gradient(&penalty.kind, &g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeMaxMethod {
    /// Exact root from the full SVD.
    SvdExact,
    /// Upper bound using the leading `k` singular triplets.
    SvdTopK(usize),
    /// Closed-form bound from `‖Xᵀy‖` and the smallest singular value.
    OpNorm,
}

/// Smallest positive `λ` with `Σ_k c_k² / (μ_k + nλ)² ≤ target²`, found by
/// bisection in log scale. `μ` are nonnegative curvatures.
fn ridge_root(mu: &[f64], c: &[f64], n: f64, target: f64, floor: f64) -> f64 {
    let sq = |lam: f64| -> f64 {
        mu.iter()
            .zip(c)
            .map(|(m, c)| {
                let den = m + n * lam;
                if *c == 0.0 {
                    0.0
                } else {
                    (c / den).powi(2)
                }
            })
            .sum()
    };
    let t2 = target * target;
    if sq(0.0) <= t2 {
        return floor;
    }
    let cnorm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut hi = (cnorm / (n * target)).max(f64::MIN_POSITIVE);
    while sq(hi) > t2 {
        hi *= 2.0;
    }
    let mut lo = hi;
    while sq(lo) <= t2 {
        lo /= 2.0;
    }
    bisect(|lam| sq(lam) <= t2, lo, hi)
}

/// Geometric bisection between a failing `lo` and a passing `hi`.
fn bisect(ok: impl Fn(f64) -> bool, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    hi
}

fn check_target(eps_norm: f64) -> Result<()> {
    if eps_norm > 0.0 && eps_norm.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("eps_norm must be > 0, got {eps_norm}")))
    }
}

fn weighted_mean(v: impl Iterator<Item = f64>, data: &Dataset) -> f64 {
    v.enumerate().map(|(i, x)| data.weight(i) * x).sum::<f64>() / data.n() as f64
}

/// Smallest `λ` such that the ridge solution
/// `argmin (1/2n) Σ s_i (y_i - o_i - x_iᵀβ - u)² + (λ/2) Σ w_j β_j²`
/// has `‖β‖₂ ≤ eps_norm`. `SvdTopK` and `OpNorm` return upper bounds.
/// When the minimum-norm least squares solution is already inside the
/// ball, the floor `σ_min² / n` is returned.
pub fn ridge_lambda_max(
    data: &Dataset,
    eps_norm: f64,
    method: RidgeMaxMethod,
    penalty_weights: Option<&DVector<f64>>,
    fit_intercept: bool,
) -> Result<f64> {
    check_target(eps_norm)?;
    if data.y().ncols() != 1 {
        return Err(Error::Unsupported("ridge lambda_max needs a single response".into()));
    }
    let n = data.n();
    let d = data.d();
    let mut x = data.x().clone();
    let mut y = DVector::from_iterator(n, (0..n).map(|i| data.y()[(i, 0)] - data.offset(i)));
    if fit_intercept {
        let ym = weighted_mean(y.iter().copied(), data);
        y.add_scalar_mut(-ym);
        for mut col in x.column_iter_mut() {
            let m = weighted_mean(col.iter().copied(), data);
            col.add_scalar_mut(-m);
        }
    }
    for i in 0..n {
        let s = data.weight(i).sqrt();
        x.row_mut(i).scale_mut(s);
        y[i] *= s;
    }
    let mut target = eps_norm;
    if let Some(w) = penalty_weights {
        crate::error::check_dim("ridge weights", d, w.len())?;
        let wmin = w.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        if !(wmin > 0.0) {
            return Err(Error::ZeroWeights);
        }
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col /= w[j].sqrt();
        }
        target *= wmin.sqrt();
    }

    let svd = linalg::svd(&x);
    let smax = svd.sigma.iter().fold(0.0f64, |m, v| m.max(*v));
    if smax == 0.0 {
        return Err(Error::InvalidInput("design matrix is zero".into()));
    }
    let smin = svd
        .sigma
        .iter()
        .filter(|s| **s > 1e-12 * smax)
        .fold(f64::INFINITY, |m, v| m.min(*v));
    let nf = n as f64;
    let floor = smin * smin / nf;
    let proj: Vec<f64> = svd.u.column_iter().map(|u| u.dot(&y)).collect();

    let lam = match method {
        RidgeMaxMethod::SvdExact => {
            let mu: Vec<f64> = svd.sigma.iter().map(|s| s * s).collect();
            let c: Vec<f64> = svd
                .sigma
                .iter()
                .zip(&proj)
                .map(|(s, a)| if *s > 1e-12 * smax { s * a } else { 0.0 })
                .collect();
            ridge_root(&mu, &c, nf, target, floor)
        }
        RidgeMaxMethod::SvdTopK(k) => {
            let m = svd.sigma.len();
            if k == 0 || k > m {
                return Err(Error::InvalidInput(format!("top-k must lie in 1..={m}, got {k}")));
            }
            let ynorm = y.norm();
            let sk = svd.sigma[k - 1];
            let tail = (m - k) as f64;
            let bound = |lam: f64| -> f64 {
                let head: f64 = (0..k)
                    .map(|j| {
                        let s = svd.sigma[j];
                        (s / (s * s + nf * lam) * proj[j]).powi(2)
                    })
                    .sum();
                head + tail * (sk * ynorm / (nf * lam)).powi(2)
            };
            let t2 = target * target;
            let mut hi = floor.max(f64::MIN_POSITIVE);
            while bound(hi) > t2 {
                hi *= 2.0;
            }
            if hi == floor.max(f64::MIN_POSITIVE) {
                floor
            } else {
                bisect(|lam| bound(lam) <= t2, hi / 2.0, hi)
            }
        }
        RidgeMaxMethod::OpNorm => {
            let xty = x.tr_mul(&y).norm();
            let lam = (xty / target - smin * smin) / nf;
            lam.max(floor)
        }
    };
    Ok(lam)
}

/// Ridge-style bound for a general loss: the smallest `λ` for which the
/// first Newton step from `(0, û₀)`,
/// `β = (Xᵀ S H X + nλ I)⁻¹ Xᵀ S g`, has `‖β‖₂ ≤ eps_norm`.
/// A heuristic, not a guarantee on the penalized solution.
pub fn newton_lambda_max(loss: &LossSpec, data: &Dataset, eps_norm: f64, fit_intercept: bool) -> Result<f64> {
    check_target(eps_norm)?;
    loss.check_response(data)?;
    if matches!(loss, LossSpec::Multinomial { .. }) || data.y().ncols() != 1 {
        return Err(Error::Unsupported("newton lambda_max needs a single response column".into()));
    }
    let n = data.n();
    let u0 = if fit_intercept {
        loss::intercept_at_zero(loss, data)?[0]
    } else {
        0.0
    };
    let mut g = DVector::zeros(n);
    let mut h = DVector::zeros(n);
    for i in 0..n {
        let z = data.offset(i) + u0;
        let y = data.y()[(i, 0)];
        let hi = loss.second_derivative_at(z, y).ok_or_else(|| {
            Error::Unsupported(format!("{} loss has no second derivative", loss.name()))
        })?;
        if hi < 0.0 {
            return Err(Error::Domain(format!("negative curvature {hi} at sample {i}")));
        }
        g[i] = data.weight(i) * loss.derivative_at(z, y);
        h[i] = data.weight(i) * hi;
    }
    let mut x = data.x().clone();
    if fit_intercept {
        let hs = h.sum();
        if hs > 0.0 {
            for mut col in x.column_iter_mut() {
                let m = col.dot(&h) / hs;
                col.add_scalar_mut(-m);
            }
        }
    }
    let b = x.tr_mul(&g);
    let mut a = x.transpose();
    for (i, mut col) in a.column_iter_mut().enumerate() {
        col *= h[i];
    }
    let a = a * &x;
    let eig = SymmetricEigen::new(a);
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    if top == 0.0 {
        return Err(Error::InvalidInput("weighted curvature matrix is zero".into()));
    }
    let mu: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|v| if *v > 1e-12 * top { *v } else { 0.0 })
        .collect();
    let c: Vec<f64> = eig
        .eigenvectors
        .column_iter()
        .zip(&mu)
        .map(|(v, m)| if *m > 0.0 { v.dot(&b) } else { 0.0 })
        .collect();
    let mmin = mu.iter().filter(|m| **m > 0.0).fold(f64::INFINITY, |a, b| a.min(*b));
    Ok(ridge_root(&mu, &c, n as f64, eps_norm, mmin / n as f64))
}
