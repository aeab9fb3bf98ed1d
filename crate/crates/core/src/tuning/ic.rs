use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lla::{self, TransformSpec};
use crate::loss::{self, LossSpec};
use crate::solver::{FitResult, SelectionRule, TunePath};

/// Noise scale used in the Gaussian likelihood for least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    /// `σ² = RSS / n` at each grid value.
    PlugIn,
    Fixed(f64),
}

/// Degrees of freedom: nonzero entries of the transform, plus one per
/// intercept column.
pub fn degrees_of_freedom(fit: &FitResult, transform: &TransformSpec) -> Result<usize> {
    let t = lla::transform(transform, &fit.coef)?;
    let support = t.iter().filter(|v| **v != 0.0).count();
    Ok(support + fit.intercept.as_ref().map_or(0, |u| u.len()))
}

/// Weighted residual sums of squares per response column.
fn rss(data: &Dataset, fit: &FitResult) -> Vec<f64> {
    let z = data.linear_predictor(&fit.coef, fit.intercept.as_ref());
    (0..z.ncols())
        .map(|k| {
            (0..data.n())
                .map(|i| data.weight(i) * (data.y()[(i, k)] - z[(i, k)]).powi(2))
                .sum()
        })
        .collect()
}

/// Twice the total negative log-likelihood, `2n L`.
fn deviance(loss: &LossSpec, data: &Dataset, fit: &FitResult, scale: NoiseScale) -> Result<f64> {
    if !matches!(loss, LossSpec::LeastSquares) {
        return Ok(2.0 * data.n() as f64 * loss::loss_value(loss, data, &fit.coef, fit.intercept.as_ref())?);
    }
    let n = data.n() as f64;
    let mut total = 0.0;
    for r in rss(data, fit) {
        let s2 = match scale {
            NoiseScale::PlugIn => (r / n).max(f64::MIN_POSITIVE),
            NoiseScale::Fixed(s) => s,
        };
        total += n * (2.0 * std::f64::consts::PI * s2).ln() + r / s2;
    }
    Ok(total)
}

/// Scores every fit on the path with `2nL + c·df` and selects the minimum;
/// ties go to the larger tuning value. `c` is 2 (AIC), `ln n` (BIC) or
/// `ln n + 2γ ln d` (EBIC).
pub fn select_by_ic(
    path: &TunePath,
    rule: SelectionRule,
    loss: &LossSpec,
    data: &Dataset,
    transform: &TransformSpec,
    scale: NoiseScale,
) -> Result<TunePath> {
    if let NoiseScale::Fixed(s) = scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance must be > 0, got {s}")));
        }
    }
    let n = data.n() as f64;
    let factor = match rule {
        SelectionRule::Aic => 2.0,
        SelectionRule::Bic => n.ln(),
        SelectionRule::Ebic { gamma } => {
            if !(0.0..=1.0).contains(&gamma) {
                return Err(Error::InvalidInput(format!("ebic gamma must lie in [0, 1], got {gamma}")));
            }
            n.ln() + 2.0 * gamma * (data.d() as f64).ln()
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "{} is not an information criterion",
                rule.name()
            )))
        }
    };
    let mut out = path.clone();
    let mut best: Option<(usize, f64)> = None;
    for (i, fit) in path.fits.iter().enumerate() {
        let df = degrees_of_freedom(fit, transform)?;
        let dev = deviance(loss, data, fit, scale)?;
        let score = dev + factor * df as f64;
        out.metrics[i].insert("df".into(), df as f64);
        out.metrics[i].insert("deviance".into(), dev);
        out.metrics[i].insert(rule.name().into(), score);
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((i, score));
        }
    }
    out.selected_index = best.map(|b| b.0);
    out.selection_rule = Some(rule);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMethod {
    /// `RSS / (n - |S|)` at a (typically CV-selected) lasso fit.
    Reid,
    /// `RSS / n`.
    PlugIn,
}

/// Noise variance estimate from a least squares fit.
pub fn noise_variance(loss: &LossSpec, data: &Dataset, fit: &FitResult, method: NoiseMethod) -> Result<f64> {
    if !matches!(loss, LossSpec::LeastSquares) || data.y().ncols() != 1 {
        return Err(Error::Unsupported("noise variance needs a single least squares response".into()));
    }
    let r = rss(data, fit)[0];
    let n = data.n();
    match method {
        NoiseMethod::PlugIn => Ok(r / n as f64),
        NoiseMethod::Reid => {
            let s = fit.coef.iter().filter(|v| **v != 0.0).count();
            if s >= n {
                return Err(Error::InvalidInput(format!(
                    "support size {s} leaves no residual degrees of freedom (n = {n})"
                )));
            }
            Ok(r / (n - s) as f64)
        }
    }
}
