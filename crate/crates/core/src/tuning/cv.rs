use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{standardize, unstandardize_coef, Dataset};
use crate::error::{Error, Result};
use crate::loss::{self, LossSpec};
use crate::solver::{check_grid, SelectionRule, SolverConfig, TunePath};

use super::estimator::Estimator;

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// [`SelectionRule::CvMin`] or [`SelectionRule::Cv1se`].
    pub rule: SelectionRule,
    /// Re-standardize each training fold with its own statistics. Ignored
    /// without an intercept, since centering would introduce one.
    pub standardize_folds: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            rule: SelectionRule::CvMin,
            standardize_folds: true,
        }
    }
}

/// Fold label of every row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::InvalidInput(format!(
            "fold count must lie in 2..={n}, got {folds}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        out[i] = pos % folds;
    }
    Ok(out)
}

fn check_classes(loss: &LossSpec, train: &Dataset, fold: usize) -> Result<()> {
    let y = train.y();
    let ok = match loss {
        LossSpec::Logistic => y
            .column_iter()
            .all(|c| c.iter().any(|v| *v == 0.0) && c.iter().any(|v| *v == 1.0)),
        LossSpec::Multinomial { classes } => {
            (0..*classes).all(|k| y.iter().any(|v| *v == k as f64))
        }
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "training set of fold {fold} is missing a response class"
        )))
    }
}

/// Held-out loss of every grid value on one fold.
fn fold_losses(
    loss: &LossSpec,
    est: &Estimator,
    data: &Dataset,
    labels: &[usize],
    fold: usize,
    grid: &[f64],
    cv: &CvConfig,
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) =
        (0..data.n()).partition(|&i| labels[i] != fold);
    let train = data.subset(&train_rows)?;
    let test = data.subset(&test_rows)?;
    check_classes(loss, &train, fold)?;
    let restd = cv.standardize_folds && cfg.fit_intercept;
    let (train_fit, state) = if restd {
        let (t, s) = standardize(&train)?;
        (t, Some(s))
    } else {
        (train, None)
    };
    let est = match &state {
        Some(s) => est.rescaled(s),
        None => est.clone(),
    };
    let path = est.fit_path(loss, &train_fit, grid, cfg)?;
    path.fits
        .iter()
        .map(|f| match (&state, &f.intercept) {
            (Some(s), Some(u)) => {
                let (b, u) = unstandardize_coef(&f.coef, u, s)?;
                loss::loss_value(loss, &test, &b, Some(&u))
            }
            _ => loss::loss_value(loss, &test, &f.coef, f.intercept.as_ref()),
        })
        .collect()
}

/// K-fold cross-validation over `grid`, then a full-data path.
///
/// Metrics per grid value: `cv_mean`, `cv_se` (sample sd over folds / √K)
/// and `cv_fold_<i>`. The min rule picks the smallest mean; the 1-SE rule
/// picks the largest value whose mean is within one SE of the minimum.
/// Ties go to the larger tuning value.
pub fn cross_validate(
    loss: &LossSpec,
    est: &Estimator,
    data: &Dataset,
    grid: &[f64],
    cv: &CvConfig,
    cfg: &SolverConfig,
) -> Result<TunePath> {
    check_grid(grid)?;
    if !matches!(cv.rule, SelectionRule::CvMin | SelectionRule::Cv1se) {
        return Err(Error::InvalidInput(format!(
            "{} is not a cross-validation rule",
            cv.rule.name()
        )));
    }
    let labels = fold_assignment(data.n(), cv.folds, cv.seed)?;
    let per_fold: Vec<Vec<f64>> = (0..cv.folds)
        .into_par_iter()
        .map(|f| fold_losses(loss, est, data, &labels, f, grid, cv, cfg))
        .collect::<Result<_>>()?;

    let mut path = est.fit_path(loss, data, grid, cfg)?;
    let k = cv.folds as f64;
    let mut means = Vec::with_capacity(grid.len());
    let mut ses = Vec::with_capacity(grid.len());
    for (i, m) in path.metrics.iter_mut().enumerate() {
        let vals: Vec<f64> = per_fold.iter().map(|f| f[i]).collect();
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let se = (var / k).sqrt();
        for (f, v) in vals.iter().enumerate() {
            m.insert(format!("cv_fold_{f}"), *v);
        }
        m.insert("cv_mean".into(), mean);
        m.insert("cv_se".into(), se);
        means.push(mean);
        ses.push(se);
    }
    if means.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cross-validation loss is not finite".into()));
    }
    let imin = (0..means.len()).fold(0, |b, i| if means[i] < means[b] { i } else { b });
    let sel = match cv.rule {
        SelectionRule::Cv1se => {
            let thr = means[imin] + ses[imin];
            (0..means.len()).find(|&i| means[i] <= thr).unwrap_or(imin)
        }
        _ => imin,
    };
    path.selected_index = Some(sel);
    path.selection_rule = Some(cv.rule);
    Ok(path)
}
