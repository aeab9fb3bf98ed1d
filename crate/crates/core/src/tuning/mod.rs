//! Tuning grids, cross-validation and information criteria.

mod bounds;
mod cv;
mod estimator;
mod ic;

pub use bounds::{gradient_at_zero, klb, klb_from_gradient, newton_lambda_max, ridge_lambda_max, RidgeMaxMethod};
pub use cv::{cross_validate, fold_assignment, CvConfig};
pub use estimator::{adaptive_penalty, Estimator, LambdaMax};
pub use ic::{degrees_of_freedom, noise_variance, select_by_ic, NoiseMethod, NoiseScale};

use crate::error::{Error, Result};
use crate::solver::check_grid;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub n_points: usize,
    /// Ratio of the smallest to the largest grid value.
    pub eps: f64,
    /// Used as-is instead of a generated grid.
    pub user_grid: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_points: 100,
            eps: 1e-3,
            user_grid: None,
        }
    }
}

/// Log-spaced decreasing grid from `lambda_max` to `eps * lambda_max`.
pub fn make_grid(lambda_max: f64, spec: &GridSpec) -> Result<Vec<f64>> {
    if let Some(g) = &spec.user_grid {
        check_grid(g)?;
        return Ok(g.clone());
    }
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda_max must be > 0, got {lambda_max}")));
    }
    if spec.n_points == 0 {
        return Err(Error::InvalidInput("grid needs at least one point".into()));
    }
    if !(spec.eps > 0.0 && spec.eps < 1.0) {
        return Err(Error::InvalidInput(format!("grid eps must lie in (0, 1), got {}", spec.eps)));
    }
    if spec.n_points == 1 {
        return Ok(vec![lambda_max]);
    }
    let last = (spec.n_points - 1) as f64;
    let lo = lambda_max.ln();
    let step = spec.eps.ln() / last;
    let mut g: Vec<f64> = (0..spec.n_points)
        .map(|i| (lo + step * i as f64).exp())
        .collect();
    g[0] = lambda_max;
    g[spec.n_points - 1] = spec.eps * lambda_max;
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_point_grid() {
        let g = make_grid(1.0, &GridSpec { n_points: 3, eps: 0.01, user_grid: None }).unwrap();
        assert_eq!(g[0], 1.0);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert_eq!(g[2], 0.01);
    }

    #[test]
    fn ratios_are_constant() {
        let g = make_grid(3.7, &GridSpec::default()).unwrap();
        assert_eq!(g.len(), 100);
        let r0 = g[1] / g[0];
        assert!(g.windows(2).all(|w| ((w[1] / w[0]) - r0).abs() < 1e-12));
    }

    #[test]
    fn user_grid_must_decrease() {
        let spec = GridSpec { user_grid: Some(vec![1.0, 2.0]), ..Default::default() };
        assert!(make_grid(1.0, &spec).is_err());
    }
}
