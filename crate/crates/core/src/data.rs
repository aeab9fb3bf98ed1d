//! Datasets, centering/scaling, and mapping coefficients back to the raw scale.
//!
//! Coefficients are always stored as a `d x K` matrix (`K = 1` for a single
//! response) and intercepts as a length-`K` vector, so vector and matrix
//! penalties share one representation.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Coefficient block, `d x K`.
pub type Coef = DMatrix<f64>;

/// Design matrix, responses and optional per-sample weights and offsets.
///
/// Sample weights are rescaled on construction so that they sum to `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    sample_weights: Option<DVector<f64>>,
    offsets: Option<DVector<f64>>,
}

impl Dataset {
    /// `y` is `n x K`: real responses, or class labels `0..K-1` stored as
    /// floats in a single column for the multinomial loss.
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::InvalidInput("empty dataset".into()));
        }
        check_dim("response rows", x.nrows(), y.nrows())?;
        if y.ncols() == 0 {
            return Err(Error::InvalidInput("response has no columns".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response".into()));
        }
        Ok(Self {
            x,
            y,
            sample_weights: None,
            offsets: None,
        })
    }

    pub fn from_vector(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(x, DMatrix::from_column_slice(n, 1, y.as_slice()))
    }

    pub fn with_sample_weights(mut self, weights: DVector<f64>) -> Result<Self> {
        check_dim("sample weights", self.n(), weights.len())?;
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "sample weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("sample weights are all zero".into()));
        }
        self.sample_weights = Some(weights * (self.n() as f64 / total));
        Ok(self)
    }

    pub fn with_offsets(mut self, offsets: DVector<f64>) -> Result<Self> {
        check_dim("offsets", self.n(), offsets.len())?;
        if offsets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("offsets".into()));
        }
        self.offsets = Some(offsets);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// First response column.
    pub fn y_column(&self) -> DVector<f64> {
        self.y.column(0).into_owned()
    }

    pub fn sample_weights(&self) -> Option<&DVector<f64>> {
        self.sample_weights.as_ref()
    }

    pub fn offsets(&self) -> Option<&DVector<f64>> {
        self.offsets.as_ref()
    }

    /// Normalized weight of sample `i` (1 when unweighted).
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.sample_weights.as_ref().map_or(1.0, |w| w[i])
    }

    #[inline]
    pub fn offset(&self, i: usize) -> f64 {
        self.offsets.as_ref().map_or(0.0, |o| o[i])
    }

    /// Same responses, weights and offsets with a different design matrix.
    pub fn with_design(&self, x: DMatrix<f64>) -> Result<Self> {
        check_dim("design rows", self.n(), x.nrows())?;
        Ok(Self {
            x,
            y: self.y.clone(),
            sample_weights: self.sample_weights.clone(),
            offsets: self.offsets.clone(),
        })
    }

    /// Rows `rows` as a new dataset; weights are renormalized to sum to the
    /// new row count.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("empty row subset".into()));
        }
        let x = self.x.select_rows(rows);
        let y = self.y.select_rows(rows);
        let mut out = Self::new(x, y)?;
        if let Some(w) = &self.sample_weights {
            out = out.with_sample_weights(DVector::from_iterator(
                rows.len(),
                rows.iter().map(|&i| w[i]),
            ))?;
        }
        if let Some(o) = &self.offsets {
            out.offsets = Some(DVector::from_iterator(
                rows.len(),
                rows.iter().map(|&i| o[i]),
            ));
        }
        Ok(out)
    }

    /// `o 1ᵀ + X B + 1 uᵀ`, an `n x K` matrix.
    pub fn linear_predictor(&self, coef: &Coef, intercept: Option<&DVector<f64>>) -> DMatrix<f64> {
        let mut z = &self.x * coef;
        if let Some(u) = intercept {
            for (k, mut col) in z.column_iter_mut().enumerate() {
                col.add_scalar_mut(u[k]);
            }
        }
        if let Some(o) = &self.offsets {
            for mut col in z.column_iter_mut() {
                col += o;
            }
        }
        z
    }

    /// Weighted column means of `y` (weights normalized to sum to `n`).
    pub fn weighted_response_mean(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_iterator(
            self.y.ncols(),
            self.y.column_iter().map(|col| {
                col.iter()
                    .enumerate()
                    .map(|(i, v)| self.weight(i) * v)
                    .sum::<f64>()
                    / n
            }),
        )
    }
}

/// Column centers and scales used to standardize a design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationState {
    pub col_means: DVector<f64>,
    pub col_scales: DVector<f64>,
    pub y_mean: Option<f64>,
}

impl StandardizationState {
    pub fn identity(d: usize) -> Self {
        Self {
            col_means: DVector::zeros(d),
            col_scales: DVector::from_element(d, 1.0),
            y_mean: None,
        }
    }

    pub fn d(&self) -> usize {
        self.col_means.len()
    }

    /// Applies the stored centering and scaling to another design matrix.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("design columns", self.d(), x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, x_std: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("design columns", self.d(), x_std.ncols())?;
        let mut out = x_std.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let (m, s) = (self.col_means[j], self.col_scales[j]);
            col.apply(|v| *v = *v * s + m);
        }
        Ok(out)
    }
}

fn is_zero_variance(sd: f64, mean: f64) -> bool {
    sd <= 1e-13 * (1.0 + mean.abs())
}

/// Centers every column to (weighted) mean 0 and scales it to (weighted)
/// population standard deviation 1. Constant columns are only centered.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationState)> {
    let n = data.n();
    if n < 2 {
        return Err(Error::InvalidInput(
            "standardization needs at least two samples".into(),
        ));
    }
    let nf = n as f64;
    let d = data.d();
    let mut means = DVector::zeros(d);
    let mut scales = DVector::from_element(d, 1.0);
    for (j, col) in data.x().column_iter().enumerate() {
        let mean = col
            .iter()
            .enumerate()
            .map(|(i, v)| data.weight(i) * v)
            .sum::<f64>()
            / nf;
        let var = col
            .iter()
            .enumerate()
            .map(|(i, v)| data.weight(i) * (v - mean).powi(2))
            .sum::<f64>()
            / nf;
        let sd = var.sqrt();
        means[j] = mean;
        if !is_zero_variance(sd, mean) {
            scales[j] = sd;
        }
    }
    let y_mean = (data.y().ncols() == 1).then(|| data.weighted_response_mean()[0]);
    let state = StandardizationState {
        col_means: means,
        col_scales: scales,
        y_mean,
    };
    let x_std = state.apply(data.x())?;
    Ok((data.with_design(x_std)?, state))
}

/// Maps a coefficient/intercept fitted on standardized data back to the
/// scale of the raw design matrix.
pub fn unstandardize_coef(
    beta_std: &Coef,
    inter_std: &DVector<f64>,
    state: &StandardizationState,
) -> Result<(Coef, DVector<f64>)> {
    check_dim("coefficient rows", state.d(), beta_std.nrows())?;
    check_dim("intercept length", beta_std.ncols(), inter_std.len())?;
    let mut beta = beta_std.clone();
    let mut inter = inter_std.clone();
    for (j, mut row) in beta.row_iter_mut().enumerate() {
        row /= state.col_scales[j];
    }
    for k in 0..beta.ncols() {
        let shift: f64 = (0..state.d())
            .map(|j| beta[(j, k)] * state.col_means[j])
            .sum();
        inter[k] -= shift;
    }
    Ok((beta, inter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn two_point_column_becomes_plus_minus_one() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let data = Dataset::from_vector(x, DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let (std, state) = standardize(&data).unwrap();
        assert_eq!(std.x().as_slice(), &[-1.0, 1.0]);
        assert_eq!(state.col_means[0], 2.0);
        assert_eq!(state.col_scales[0], 1.0);
    }

    #[test]
    fn constant_column_is_centered_with_unit_scale() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let data = Dataset::from_vector(x, DVector::zeros(3)).unwrap();
        let (std, state) = standardize(&data).unwrap();
        assert_eq!(state.col_scales[1], 1.0);
        assert!(std.x().column(1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardizing_twice_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 20, 4);
        let data = Dataset::from_vector(x, DVector::zeros(20)).unwrap();
        let (once, _) = standardize(&data).unwrap();
        let (twice, _) = standardize(&once).unwrap();
        let diff = (once.x() - twice.x()).amax();
        assert!(diff < 1e-12, "diff {diff}");
    }

    #[test]
    fn weighted_columns_have_zero_weighted_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 15, 3);
        let w = DVector::from_fn(15, |_, _| rng.random_range(0.1..2.0));
        let data = Dataset::from_vector(x, DVector::zeros(15))
            .unwrap()
            .with_sample_weights(w)
            .unwrap();
        let (std, _) = standardize(&data).unwrap();
        for col in std.x().column_iter() {
            let m: f64 = col.iter().enumerate().map(|(i, v)| std.weight(i) * v).sum();
            let v: f64 = col
                .iter()
                .enumerate()
                .map(|(i, v)| std.weight(i) * v * v)
                .sum::<f64>()
                / 15.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_then_invert_recovers_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 10, 3);
        let data = Dataset::from_vector(x.clone(), DVector::zeros(10)).unwrap();
        let (std, state) = standardize(&data).unwrap();
        let back = state.invert(std.x()).unwrap();
        let rel = (&back - &x).amax() / x.amax();
        assert!(rel < 1e-12);
    }

    #[test]
    fn identity_state_leaves_coefficients_alone() {
        let beta = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let u = DVector::from_element(1, 0.7);
        let (b, i) = unstandardize_coef(&beta, &u, &StandardizationState::identity(3)).unwrap();
        assert_eq!(b, beta);
        assert_eq!(i, u);
    }

    #[test]
    fn uniform_scale_two_halves_coefficients() {
        let beta = DMatrix::from_column_slice(2, 1, &[4.0, -2.0]);
        let u = DVector::from_element(1, 1.5);
        let state = StandardizationState {
            col_means: DVector::zeros(2),
            col_scales: DVector::from_element(2, 2.0),
            y_mean: None,
        };
        let (b, i) = unstandardize_coef(&beta, &u, &state).unwrap();
        assert_eq!(b.as_slice(), &[2.0, -1.0]);
        assert_eq!(i[0], 1.5);
    }

    #[test]
    fn raw_predictions_match_standardized_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 5, 3);
        let data = Dataset::from_vector(x, DVector::zeros(5)).unwrap();
        let (std, state) = standardize(&data).unwrap();
        let beta = random_matrix(&mut rng, 3, 1);
        let u = DVector::from_element(1, 0.3);
        let pred_std = std.linear_predictor(&beta, Some(&u));
        let (b_raw, u_raw) = unstandardize_coef(&beta, &u, &state).unwrap();
        let pred_raw = data.linear_predictor(&b_raw, Some(&u_raw));
        assert!((pred_std - pred_raw).amax() < 1e-10);
    }

    #[test]
    fn weights_are_normalized_to_sample_count() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let data = Dataset::from_vector(x, DVector::zeros(4))
            .unwrap()
            .with_sample_weights(DVector::from_vec(vec![1.0, 1.0, 3.0, 3.0]))
            .unwrap();
        let w = data.sample_weights().unwrap();
        assert!((w.sum() - 4.0).abs() < 1e-15);
        assert_eq!(w[2], 1.5);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(Dataset::new(DMatrix::zeros(0, 2), DMatrix::zeros(0, 1)).is_err());
        assert!(Dataset::new(DMatrix::zeros(3, 2), DMatrix::zeros(2, 1)).is_err());
        let ok = Dataset::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 1)).unwrap();
        assert!(ok.clone().with_sample_weights(DVector::zeros(3)).is_err());
        assert!(ok
            .clone()
            .with_sample_weights(DVector::from_vec(vec![1.0, -1.0, 1.0]))
            .is_err());
        assert!(ok.with_offsets(DVector::zeros(2)).is_err());
        let one = Dataset::new(DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).unwrap();
        assert!(standardize(&one).is_err());
    }
}
