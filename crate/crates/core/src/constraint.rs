//! Euclidean projections onto constraint sets.
//!
//! Positive, box, ball and sparsity sets act on all entries of the
//! coefficient block; simplex, isotonic and linear-equality sets act on each
//! column; the rank set acts on the matrix.

use nalgebra::{DMatrix, DVector};

use crate::data::Coef;
use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSpec {
    Positive,
    Box { lower: f64, upper: f64 },
    Simplex,
    L1Ball { radius: f64 },
    L2Ball { radius: f64 },
    LinearEquality { a: DMatrix<f64>, b: DVector<f64> },
    Isotonic,
    Sparse { k: usize },
    Rank { k: usize },
}

impl ConstraintSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Box { .. } => "box",
            Self::Simplex => "simplex",
            Self::L1Ball { .. } => "l1_ball",
            Self::L2Ball { .. } => "l2_ball",
            Self::LinearEquality { .. } => "linear_equality",
            Self::Isotonic => "isotonic",
            Self::Sparse { .. } => "sparse",
            Self::Rank { .. } => "rank",
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Self::Sparse { .. } | Self::Rank { .. })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Self::Box { lower, upper } if !(lower <= upper) => Err(Error::InvalidInput(format!(
                "box needs lower <= upper, got [{lower}, {upper}]"
            ))),
            Self::L1Ball { radius } | Self::L2Ball { radius } if !(*radius > 0.0) => Err(
                Error::InvalidInput(format!("ball radius must be > 0, got {radius}")),
            ),
            Self::Sparse { k } | Self::Rank { k } if *k == 0 => {
                Err(Error::InvalidInput("sparsity/rank level must be >= 1".into()))
            }
            Self::LinearEquality { a, b } => {
                check_dim("constraint matrix columns", d, a.ncols())?;
                check_dim("constraint right-hand side", a.nrows(), b.len())
            }
            _ => Ok(()),
        }
    }

    /// Whether `x` lies in the set, up to `tol`.
    pub fn contains(&self, x: &Coef, tol: f64) -> bool {
        match self {
            Self::Positive => x.iter().all(|v| *v >= -tol),
            Self::Box { lower, upper } => x.iter().all(|v| *v >= lower - tol && *v <= upper + tol),
            Self::Simplex => x
                .column_iter()
                .all(|c| c.iter().all(|v| *v >= -tol) && (c.sum() - 1.0).abs() <= tol),
            Self::L1Ball { radius } => x.iter().map(|v| v.abs()).sum::<f64>() <= radius + tol,
            Self::L2Ball { radius } => x.norm() <= radius + tol,
            Self::LinearEquality { a, b } => x
                .column_iter()
                .all(|c| (a * c - b).amax() <= tol * (1.0 + b.amax())),
            Self::Isotonic => x
                .column_iter()
                .all(|c| c.as_slice().windows(2).all(|w| w[0] <= w[1] + tol)),
            Self::Sparse { k } => x.iter().filter(|v| **v != 0.0).count() <= *k,
            Self::Rank { k } => {
                let s = linalg::singular_values(x);
                let scale = s.get(0).copied().unwrap_or(0.0).max(1.0);
                s.iter().filter(|v| **v > tol * scale).count() <= *k
            }
        }
    }
}

/// Euclidean projection of `x` onto the set.
pub fn project(spec: &ConstraintSpec, x: &Coef) -> Result<Coef> {
    spec.validate(x.nrows())?;
    match spec {
        ConstraintSpec::Positive => Ok(x.map(|v| v.max(0.0))),
        ConstraintSpec::Box { lower, upper } => Ok(x.map(|v| v.clamp(*lower, *upper))),
        ConstraintSpec::Simplex => Ok(map_columns(x, |c| project_simplex(c, 1.0))),
        ConstraintSpec::L1Ball { radius } => Ok(project_l1_ball(x, *radius)),
        ConstraintSpec::L2Ball { radius } => {
            let nrm = x.norm();
            Ok(if nrm <= *radius { x.clone() } else { x * (radius / nrm) })
        }
        ConstraintSpec::LinearEquality { a, b } => project_affine(a, b, x),
        ConstraintSpec::Isotonic => Ok(map_columns(x, pava)),
        ConstraintSpec::Sparse { k } => Ok(keep_largest(x, *k)),
        ConstraintSpec::Rank { k } => {
            let svd = linalg::svd(x);
            let sigma = DVector::from_iterator(
                svd.sigma.len(),
                svd.sigma.iter().enumerate().map(|(j, s)| if j < *k { *s } else { 0.0 }),
            );
            Ok(svd.compose(&sigma))
        }
    }
}

fn map_columns(x: &Coef, f: impl Fn(&[f64]) -> Vec<f64>) -> Coef {
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let v = f(col.as_slice());
        col.copy_from_slice(&v);
    }
    out
}

/// Projection onto `{z >= 0, Σ z = total}` by sorting.
fn project_simplex(x: &[f64], total: f64) -> Vec<f64> {
    let mut u = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, v) in u.iter().enumerate() {
        cum += v;
        let t = (cum - total) / (j + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

fn project_l1_ball(x: &Coef, radius: f64) -> Coef {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return x.clone();
    }
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let p = project_simplex(&abs, radius);
    let mut out = x.clone();
    for (o, m) in out.iter_mut().zip(p) {
        *o = o.signum() * m;
    }
    out
}

fn project_affine(a: &DMatrix<f64>, b: &DVector<f64>, x: &Coef) -> Result<Coef> {
    let pinv = a
        .clone()
        .pseudo_inverse(1e-12 * a.amax().max(1.0))
        .map_err(|e| Error::Infeasible(e.to_string()))?;
    let mut out = x.clone();
    for mut col in out.column_iter_mut() {
        let resid = a * &col - b;
        let z = &col - &pinv * resid;
        let err = (a * &z - b).amax();
        if err > 1e-9 * (1.0 + b.amax()) {
            return Err(Error::Infeasible(format!(
                "A z = b has no solution (residual {err:e})"
            )));
        }
        col.copy_from(&z);
    }
    Ok(out)
}

/// Pool-adjacent-violators: least-squares nondecreasing fit.
pub(crate) fn pava(x: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut sums: Vec<f64> = Vec::with_capacity(x.len());
    let mut counts: Vec<usize> = Vec::with_capacity(x.len());
    for &v in x {
        sums.push(v);
        counts.push(1);
        while sums.len() > 1 {
            let m = sums.len();
            if sums[m - 2] / counts[m - 2] as f64 > sums[m - 1] / counts[m - 1] as f64 {
                let s = sums.pop().unwrap();
                let c = counts.pop().unwrap();
                sums[m - 2] += s;
                counts[m - 2] += c;
            } else {
                break;
            }
        }
    }
    let mut out = Vec::with_capacity(x.len());
    for (s, c) in sums.iter().zip(&counts) {
        out.extend(std::iter::repeat_n(s / *c as f64, *c));
    }
    out
}

/// Keeps the `k` largest-magnitude entries; ties go to the lower index.
fn keep_largest(x: &Coef, k: usize) -> Coef {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&i, &j| x[j].abs().total_cmp(&x[i].abs()).then(i.cmp(&j)));
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for &i in idx.iter().take(k) {
        out[i] = x[i];
    }
    out
}
