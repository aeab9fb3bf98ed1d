//! Per-sample GLM losses and their averaged, weighted, offset forms.
//!
//! The averaged loss is `L(B, u) = (1/n) Σ_i s_i Σ_k ℓ(o_i + x_iᵀB_k + u_k, y_ik)`;
//! multi-response losses sum over response columns. The multinomial loss is
//! the one exception: its `K` linear predictors share one class label.

use nalgebra::{DMatrix, DVector};

use crate::data::{Coef, Dataset};
use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// Which loss to use, with its shape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    LeastSquares,
    /// Responses in {0, 1}.
    Logistic,
    /// Class labels `0..classes` in a single response column.
    Multinomial { classes: usize },
    /// Nonnegative responses, log link.
    Poisson,
    Huber { knot: f64 },
    /// Pinball loss at level `level`; `smoothing > 0` uses its Moreau
    /// envelope with that bandwidth.
    Quantile { level: f64, smoothing: f64 },
    /// `max(0, 1 - y z)²` with responses in {-1, 1}.
    SquaredHinge,
}

impl LossSpec {
    pub fn huber(knot: f64) -> Result<Self> {
        let s = Self::Huber { knot };
        s.validate()?;
        Ok(s)
    }

    pub fn quantile(level: f64, smoothing: f64) -> Result<Self> {
        let s = Self::Quantile { level, smoothing };
        s.validate()?;
        Ok(s)
    }

    pub fn multinomial(classes: usize) -> Result<Self> {
        let s = Self::Multinomial { classes };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Huber { knot } if !(knot > 0.0 && knot.is_finite()) => {
                Err(Error::InvalidInput(format!("huber knot must be > 0, got {knot}")))
            }
            Self::Quantile { level, smoothing } => {
                if !(level > 0.0 && level < 1.0) {
                    Err(Error::InvalidInput(format!(
                        "quantile level must lie in (0, 1), got {level}"
                    )))
                } else if !(smoothing >= 0.0 && smoothing.is_finite()) {
                    Err(Error::InvalidInput(format!(
                        "quantile smoothing must be >= 0, got {smoothing}"
                    )))
                } else {
                    Ok(())
                }
            }
            Self::Multinomial { classes } if classes < 2 => Err(Error::InvalidInput(
                "multinomial needs at least two classes".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::LeastSquares => "least_squares",
            Self::Logistic => "logistic",
            Self::Multinomial { .. } => "multinomial",
            Self::Poisson => "poisson",
            Self::Huber { .. } => "huber",
            Self::Quantile { .. } => "quantile",
            Self::SquaredHinge => "squared_hinge",
        }
    }

    /// True when the gradient exists everywhere.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Quantile { smoothing, .. } if *smoothing == 0.0)
    }

    /// Number of coefficient columns this loss needs for `data`.
    pub fn coef_columns(&self, data: &Dataset) -> usize {
        match *self {
            Self::Multinomial { classes } => classes,
            _ => data.y().ncols(),
        }
    }

    /// Checks that the responses lie in this loss's domain.
    pub fn check_response(&self, data: &Dataset) -> Result<()> {
        self.validate()?;
        let y = data.y();
        match *self {
            Self::Logistic => {
                if y.iter().any(|v| *v != 0.0 && *v != 1.0) {
                    return Err(Error::Domain("logistic responses must be 0 or 1".into()));
                }
            }
            Self::Multinomial { classes } => {
                check_dim("multinomial response columns", 1, y.ncols())?;
                if y
                    .iter()
                    .any(|v| v.fract() != 0.0 || *v < 0.0 || *v >= classes as f64)
                {
                    return Err(Error::Domain(format!(
                        "multinomial labels must be integers in 0..{classes}"
                    )));
                }
            }
            Self::Poisson => {
                if y.iter().any(|v| *v < 0.0) {
                    return Err(Error::Domain("poisson responses must be >= 0".into()));
                }
            }
            Self::SquaredHinge => {
                if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
                    return Err(Error::Domain(
                        "squared hinge responses must be -1 or 1".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `ℓ(z, y)` for the scalar losses.
    pub fn value_at(&self, z: f64, y: f64) -> f64 {
        match *self {
            Self::LeastSquares => 0.5 * (y - z).powi(2),
            Self::Logistic => softplus(z) - y * z,
            Self::Poisson => z.exp() - z * y,
            Self::Huber { knot } => {
                let r = (y - z).abs();
                if r <= knot {
                    0.5 * r * r
                } else {
                    knot * (r - 0.5 * knot)
                }
            }
            Self::Quantile { level, smoothing } => {
                let r = y - z;
                if smoothing == 0.0 {
                    r * (level - if r < 0.0 { 1.0 } else { 0.0 })
                } else if r > level * smoothing {
                    level * r - 0.5 * level * level * smoothing
                } else if r < (level - 1.0) * smoothing {
                    (level - 1.0) * r - 0.5 * (level - 1.0).powi(2) * smoothing
                } else {
                    r * r / (2.0 * smoothing)
                }
            }
            Self::SquaredHinge => (1.0 - y * z).max(0.0).powi(2),
            Self::Multinomial { .. } => unreachable!("multinomial is not a scalar loss"),
        }
    }

    /// `∂ℓ/∂z`. The exact quantile loss uses the subgradient 0 at `r = 0`.
    pub fn derivative_at(&self, z: f64, y: f64) -> f64 {
        match *self {
            Self::LeastSquares => z - y,
            Self::Logistic => sigmoid(z) - y,
            Self::Poisson => z.exp() - y,
            Self::Huber { knot } => -(y - z).clamp(-knot, knot),
            Self::Quantile { level, smoothing } => {
                let r = y - z;
                if smoothing == 0.0 {
                    if r > 0.0 {
                        -level
                    } else if r < 0.0 {
                        1.0 - level
                    } else {
                        0.0
                    }
                } else {
                    -(r / smoothing).clamp(level - 1.0, level)
                }
            }
            Self::SquaredHinge => -2.0 * y * (1.0 - y * z).max(0.0),
            Self::Multinomial { .. } => unreachable!("multinomial is not a scalar loss"),
        }
    }

    /// `∂²ℓ/∂z²`, where it exists.
    pub fn second_derivative_at(&self, z: f64, y: f64) -> Option<f64> {
        match *self {
            Self::LeastSquares => Some(1.0),
            Self::Logistic => {
                let p = sigmoid(z);
                Some(p * (1.0 - p))
            }
            Self::Poisson => Some(z.exp()),
            Self::Huber { knot } => Some(if (y - z).abs() <= knot { 1.0 } else { 0.0 }),
            Self::Quantile { level, smoothing } => {
                if smoothing == 0.0 {
                    return None;
                }
                let r = y - z;
                let inside = r <= level * smoothing && r >= (level - 1.0) * smoothing;
                Some(if inside { 1.0 / smoothing } else { 0.0 })
            }
            Self::SquaredHinge => Some(if 1.0 - y * z > 0.0 { 2.0 } else { 0.0 }),
            Self::Multinomial { .. } => None,
        }
    }

    /// Bound on the curvature of `ℓ` in `z`, when one exists.
    fn curvature_bound(&self) -> Option<f64> {
        match *self {
            Self::LeastSquares | Self::Huber { .. } => Some(1.0),
            Self::Logistic => Some(0.25),
            Self::Multinomial { .. } => Some(0.5),
            Self::SquaredHinge => Some(2.0),
            Self::Quantile { smoothing, .. } if smoothing > 0.0 => Some(1.0 / smoothing),
            Self::Quantile { .. } | Self::Poisson => None,
        }
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Row-wise softmax of a linear predictor matrix.
pub fn softmax_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = z.clone();
    for mut row in p.row_iter_mut() {
        let m = row.max();
        row.apply(|v| *v = (*v - m).exp());
        let s = row.sum();
        row /= s;
    }
    p
}

fn check_shapes(spec: &LossSpec, data: &Dataset, beta: &Coef, inter: Option<&DVector<f64>>) -> Result<()> {
    check_dim("coefficient rows", data.d(), beta.nrows())?;
    check_dim("coefficient columns", spec.coef_columns(data), beta.ncols())?;
    if let Some(u) = inter {
        check_dim("intercept length", beta.ncols(), u.len())?;
    }
    if beta.iter().any(|v| !v.is_finite()) || inter.is_some_and(|u| u.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("coefficient or intercept".into()));
    }
    Ok(())
}

/// Per-sample losses summed with weights and averaged, given the linear
/// predictor `z` (`n x K`). May return `inf` on poisson overflow.
pub(crate) fn value_from_predictor(spec: &LossSpec, data: &Dataset, z: &DMatrix<f64>) -> f64 {
    let n = data.n();
    let y = data.y();
    let total: f64 = match spec {
        LossSpec::Multinomial { .. } => (0..n)
            .map(|i| {
                let row = z.row(i);
                let m = row.max();
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                data.weight(i) * (lse - row[y[(i, 0)] as usize])
            })
            .sum(),
        _ => (0..n)
            .map(|i| {
                let s: f64 = (0..z.ncols()).map(|k| spec.value_at(z[(i, k)], y[(i, k)])).sum();
                data.weight(i) * s
            })
            .sum(),
    };
    total / n as f64
}

/// `D_ik = s_i ∂ℓ/∂z_ik / n`, so that `∇_B L = Xᵀ D` and `∇_u L = 1ᵀ D`.
pub(crate) fn scaled_residual(spec: &LossSpec, data: &Dataset, z: &DMatrix<f64>) -> DMatrix<f64> {
    let n = data.n();
    let nf = n as f64;
    let y = data.y();
    match spec {
        LossSpec::Multinomial { .. } => {
            let mut p = softmax_rows(z);
            for i in 0..n {
                p[(i, y[(i, 0)] as usize)] -= 1.0;
                let s = data.weight(i) / nf;
                p.row_mut(i).scale_mut(s);
            }
            p
        }
        _ => DMatrix::from_fn(n, z.ncols(), |i, k| {
            data.weight(i) * spec.derivative_at(z[(i, k)], y[(i, k)]) / nf
        }),
    }
}

pub(crate) fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum()))
}

/// `L(B, u)`. A missing intercept means `u = 0`.
pub fn loss_value(spec: &LossSpec, data: &Dataset, beta: &Coef, inter: Option<&DVector<f64>>) -> Result<f64> {
    spec.check_response(data)?;
    check_shapes(spec, data, beta, inter)?;
    let z = data.linear_predictor(beta, inter);
    let v = value_from_predictor(spec, data, &z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{} loss value", spec.name())))
    }
}

/// `(∇_B L, ∇_u L)`.
pub fn loss_gradient(
    spec: &LossSpec,
    data: &Dataset,
    beta: &Coef,
    inter: Option<&DVector<f64>>,
) -> Result<(Coef, DVector<f64>)> {
    spec.check_response(data)?;
    check_shapes(spec, data, beta, inter)?;
    let z = data.linear_predictor(beta, inter);
    let r = scaled_residual(spec, data, &z);
    let g = data.x().tr_mul(&r);
    let gu = column_sums(&r);
    if g.iter().chain(gu.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} loss gradient", spec.name())));
    }
    Ok((g, gu))
}

/// Lipschitz constant of `∇L` in `(B, u)` (or `B` alone without an
/// intercept). `None` for losses without a global curvature bound, which
/// makes the solver fall back to backtracking.
pub fn lipschitz_constant(spec: &LossSpec, data: &Dataset, fit_intercept: bool) -> Option<f64> {
    let c = spec.curvature_bound()?;
    let n = data.n();
    let d = data.d();
    let cols = d + usize::from(fit_intercept);
    let aug = DMatrix::from_fn(n, cols, |i, j| {
        let v = if j < d { data.x()[(i, j)] } else { 1.0 };
        v * data.weight(i).sqrt()
    });
    let smax = linalg::max_singular_value(&aug);
    Some(c * smax * smax / n as f64)
}

/// `argmin_u L(0, u)`.
pub fn intercept_at_zero(spec: &LossSpec, data: &Dataset) -> Result<DVector<f64>> {
    spec.check_response(data)?;
    let n = data.n();
    let nf = n as f64;
    let y = data.y();
    match *spec {
        LossSpec::LeastSquares => Ok(DVector::from_iterator(
            y.ncols(),
            y.column_iter().map(|col| {
                (0..n)
                    .map(|i| data.weight(i) * (col[i] - data.offset(i)))
                    .sum::<f64>()
                    / nf
            }),
        )),
        LossSpec::Logistic => {
            let means = data.weighted_response_mean();
            let mut out = DVector::zeros(y.ncols());
            for k in 0..y.ncols() {
                let m = means[k];
                if m <= 0.0 || m >= 1.0 {
                    return Err(Error::UnboundedIntercept(
                        "logistic responses are all 0 or all 1".into(),
                    ));
                }
                out[k] = if data.offsets().is_none() {
                    let p = m.clamp(1e-10, 1.0 - 1e-10);
                    (p / (1.0 - p)).ln()
                } else {
                    scalar_root(spec, data, k)?
                };
            }
            Ok(out)
        }
        LossSpec::Poisson => {
            let mut out = DVector::zeros(y.ncols());
            for k in 0..y.ncols() {
                let num: f64 = (0..n).map(|i| data.weight(i) * y[(i, k)]).sum();
                if num <= 0.0 {
                    return Err(Error::UnboundedIntercept(
                        "poisson responses are all zero".into(),
                    ));
                }
                let den: f64 = (0..n).map(|i| data.weight(i) * data.offset(i).exp()).sum();
                out[k] = (num / den).ln();
            }
            Ok(out)
        }
        LossSpec::Quantile { level, smoothing } if smoothing == 0.0 => {
            Ok(DVector::from_iterator(
                y.ncols(),
                (0..y.ncols()).map(|k| {
                    let resid: Vec<f64> = (0..n).map(|i| y[(i, k)] - data.offset(i)).collect();
                    let weights: Vec<f64> = (0..n).map(|i| data.weight(i)).collect();
                    weighted_quantile(&resid, &weights, level)
                }),
            ))
        }
        LossSpec::Multinomial { classes } => {
            let mut counts = vec![0.0; classes];
            for i in 0..n {
                counts[y[(i, 0)] as usize] += data.weight(i);
            }
            if counts.iter().any(|c| *c <= 0.0) {
                return Err(Error::UnboundedIntercept(
                    "a multinomial class has no observations".into(),
                ));
            }
            let logs: Vec<f64> = counts.iter().map(|c| (c / nf).ln()).collect();
            let mean = logs.iter().sum::<f64>() / classes as f64;
            Ok(DVector::from_iterator(classes, logs.iter().map(|l| l - mean)))
        }
        _ => {
            let mut out = DVector::zeros(y.ncols());
            for k in 0..y.ncols() {
                out[k] = scalar_root(spec, data, k)?;
            }
            Ok(out)
        }
    }
}

/// Weighted q-quantile: the smallest value whose cumulative weight reaches
/// `q` times the total. It minimizes the weighted pinball loss.
pub(crate) fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= q * total {
            return values[i];
        }
    }
    values[idx[idx.len() - 1]]
}

/// Solves `Σ_i s_i ℓ'(o_i + u, y_ik) = 0` for `u` by bracketing and
/// bisection; the left side is nondecreasing in `u` for convex losses.
fn scalar_root(spec: &LossSpec, data: &Dataset, k: usize) -> Result<f64> {
    let y = data.y();
    let f = |u: f64| -> f64 {
        (0..data.n())
            .map(|i| data.weight(i) * spec.derivative_at(data.offset(i) + u, y[(i, k)]))
            .sum()
    };
    let center = data.weighted_response_mean()[k];
    let mut width = 1.0 + center.abs();
    let (mut lo, mut hi) = (center - width, center + width);
    let mut tries = 0;
    while !(f(lo) <= 0.0 && f(hi) >= 0.0) {
        width *= 2.0;
        lo = center - width;
        hi = center + width;
        tries += 1;
        if tries > 60 {
            return Err(Error::UnboundedIntercept(format!(
                "no finite intercept minimizes the {} loss",
                spec.name()
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
