use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use penglm::lla::{AdaptiveSpec, Perturbation, TransformSpec};
use penglm::penalty::{ConcaveGenerator, PenaltyKind, PenaltySpec};
use penglm::tuning::{self, adaptive_penalty, CvConfig, Estimator, GridSpec, LambdaMax, NoiseMethod, NoiseScale};
use penglm::{
    loss_value, standardize, unstandardize_coef, Coef, Dataset, LossSpec, SelectionRule, SolverConfig,
    StandardizationState, TunePath,
};
use serde_json::{json, Value};

use crate::config::{Flavor, Noise, PenValue, RunConfig};
use crate::error::CliError;
use crate::io::{self, Table};

pub struct Loaded {
    pub raw: Dataset,
    pub features: Vec<String>,
}

pub fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let table = io::read_csv(&cfg.data)?;
    build_dataset(cfg, &table)
}

fn build_dataset(cfg: &RunConfig, table: &Table) -> Result<Loaded, CliError> {
    let resp: Vec<usize> = cfg
        .response
        .iter()
        .map(|r| table.index(r))
        .collect::<Result<_, _>>()?;
    let mut special = resp.clone();
    let weights = cfg.weights.as_deref().map(|w| table.index(w)).transpose()?;
    let offsets = cfg.offsets.as_deref().map(|o| table.index(o)).transpose()?;
    special.extend(weights);
    special.extend(offsets);
    let feats: Vec<usize> = (0..table.headers.len()).filter(|j| !special.contains(j)).collect();
    if feats.is_empty() {
        return Err(CliError::Config("no feature columns left".into()));
    }
    let mut data = Dataset::new(table.matrix(&feats), table.matrix(&resp))?;
    if let Some(w) = weights {
        data = data.with_sample_weights(table.vector(w))?;
    }
    if let Some(o) = offsets {
        data = data.with_offsets(table.vector(o))?;
    }
    Ok(Loaded {
        raw: data,
        features: feats.iter().map(|&j| table.headers[j].clone()).collect(),
    })
}

fn loss_spec(cfg: &RunConfig, data: &Dataset) -> Result<LossSpec, CliError> {
    Ok(match cfg.loss.as_str() {
        "least_squares" => LossSpec::LeastSquares,
        "logistic" => LossSpec::Logistic,
        "multinomial" => {
            let classes = match cfg.classes {
                Some(c) => c,
                None => data.y().iter().fold(0.0f64, |m, v| m.max(*v)) as usize + 1,
            };
            LossSpec::multinomial(classes)?
        }
        "poisson" => LossSpec::Poisson,
        "huber" => LossSpec::huber(cfg.huber_knot)?,
        "quantile" => LossSpec::quantile(cfg.quantile_level, cfg.quantile_smoothing)?,
        "squared_hinge" => LossSpec::SquaredHinge,
        other => return Err(CliError::Config(format!("unknown loss {other}"))),
    })
}

fn penalty_template(cfg: &RunConfig, groups: Option<Vec<Vec<usize>>>) -> Result<PenaltySpec, CliError> {
    let g = || groups.clone().ok_or_else(|| CliError::Config("missing groups".into()));
    Ok(match cfg.penalty.as_str() {
        "lasso" => PenaltySpec::lasso(1.0),
        "ridge" => PenaltySpec::ridge(1.0),
        "group_lasso" => PenaltySpec::group_lasso(1.0, g()?),
        "multi_task_lasso" => PenaltySpec::multi_task_lasso(1.0),
        "tv1" => PenaltySpec::tv1(1.0),
        "nuclear_norm" => PenaltySpec::nuclear_norm(1.0),
        "elastic_net" => PenaltySpec::elastic_net(1.0, cfg.mix),
        "sparse_group_lasso" => PenaltySpec::new(
            PenaltyKind::SparseGroupLasso {
                mix: cfg.mix,
                groups: g()?,
                weights: None,
                group_weights: None,
            },
            1.0,
        ),
        "sparse_fused_lasso" => PenaltySpec::new(
            PenaltyKind::SparseFusedLasso {
                mix: cfg.mix,
                weights: None,
            },
            1.0,
        ),
        other => return Err(CliError::Config(format!("unknown penalty {other}"))),
    })
}

fn transform_for(cfg: &RunConfig, groups: &Option<Vec<Vec<usize>>>) -> TransformSpec {
    match cfg.penalty.as_str() {
        "group_lasso" => TransformSpec::Group(groups.clone().unwrap_or_default()),
        "multi_task_lasso" => TransformSpec::MultiTaskRows,
        "nuclear_norm" => TransformSpec::SingularValues,
        _ => TransformSpec::Entrywise,
    }
}

/// Standardized working copy. Without an intercept only scaling is
/// applied, since centering would introduce one.
fn working_data(cfg: &RunConfig, raw: &Dataset) -> Result<(Dataset, StandardizationState), CliError> {
    if !cfg.standardize {
        return Ok((raw.clone(), StandardizationState::identity(raw.d())));
    }
    let (std, mut state) = standardize(raw)?;
    if cfg.intercept {
        return Ok((std, state));
    }
    state.col_means = DVector::zeros(raw.d());
    let x = state.apply(raw.x())?;
    Ok((raw.with_design(x)?, state))
}

struct Job<'a> {
    cfg: &'a RunConfig,
    loss: LossSpec,
    data: Dataset,
    solver: SolverConfig,
}

impl Job<'_> {
    fn grid(&self, est: &Estimator, lmax: &mut Option<LambdaMax>) -> Result<Vec<f64>, CliError> {
        let spec = GridSpec {
            n_points: self.cfg.n_points,
            eps: self.cfg.eps,
            user_grid: self.cfg.grid.clone(),
        };
        if spec.user_grid.is_some() {
            return Ok(tuning::make_grid(1.0, &spec)?);
        }
        let lm = est.lambda_max(&self.loss, &self.data, self.cfg.intercept, self.cfg.ridge_eps)?;
        *lmax = Some(lm);
        Ok(tuning::make_grid(lm.value, &spec)?)
    }

    fn cv(&self, rule: SelectionRule) -> CvConfig {
        CvConfig {
            folds: self.cfg.cv_k,
            seed: self.cfg.seed,
            rule,
            standardize_folds: self.cfg.standardize,
        }
    }

    /// CV-tuned convex fit used to initialize the two-stage flavors.
    fn initializer(&self, template: &PenaltySpec) -> Result<Coef, CliError> {
        let est = Estimator::Convex(template.clone());
        let lm = est.lambda_max(&self.loss, &self.data, self.cfg.intercept, self.cfg.ridge_eps)?;
        let spec = GridSpec {
            n_points: self.cfg.n_points,
            eps: self.cfg.eps,
            user_grid: None,
        };
        let grid = tuning::make_grid(lm.value, &spec)?;
        let path = tuning::cross_validate(&self.loss, &est, &self.data, &grid, &self.cv(SelectionRule::CvMin), &self.solver)?;
        Ok(path.selected_fit().expect("cv selects a fit").coef.clone())
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Value {
    Value::Array(
        m.row_iter()
            .map(|r| Value::Array(r.iter().map(|v| json!(v + 0.0)).collect()))
            .collect(),
    )
}

fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|x| json!(x + 0.0)).collect())
}

/// Runs the job and returns the output document (without timestamp).
pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    let loaded = load(cfg)?;
    let raw = &loaded.raw;
    let loss = loss_spec(cfg, raw)?;
    loss.check_response(raw)?;
    let groups = cfg.groups.as_deref().map(io::read_groups).transpose()?;
    let template = penalty_template(cfg, groups.clone())?;
    let tspec = transform_for(cfg, &groups);
    let (data, state) = working_data(cfg, raw)?;
    let solver = SolverConfig {
        max_iter: cfg.max_iter,
        rel_tol: cfg.rel_tol,
        residual_tol: cfg.residual_tol,
        fit_intercept: cfg.intercept,
        ..SolverConfig::default()
    };
    solver.validate()?;
    template.validate(data.d(), loss.coef_columns(&data))?;
    let job = Job {
        cfg,
        loss,
        data,
        solver,
    };

    let est = match cfg.flavor {
        Flavor::Convex => Estimator::Convex(template.clone()),
        Flavor::Adaptive => {
            let init = job.initializer(&template)?;
            let spec = AdaptiveSpec {
                exponent: cfg.adaptive_exponent,
                perturbation: if cfg.adaptive_perturbation == "none" {
                    Perturbation::None
                } else {
                    Perturbation::OneOverN
                },
            };
            Estimator::Convex(adaptive_penalty(&spec, &tspec, &init, job.data.n())?)
        }
        Flavor::Scad | Flavor::Mcp => {
            let init = job.initializer(&template)?;
            let generator = if cfg.flavor == Flavor::Scad {
                ConcaveGenerator::scad(1.0, cfg.shape.unwrap_or(3.7))?
            } else {
                ConcaveGenerator::mcp(1.0, cfg.shape.unwrap_or(3.0))?
            };
            Estimator::NonConvex {
                generator,
                transform: tspec.clone(),
                init,
                max_steps: cfg.lla_steps,
            }
        }
    };

    let mut lmax = None;
    let mut noise_used = None;
    let path: TunePath = match cfg.command.as_str() {
        "fit" => {
            let lam = match cfg.pen_val.as_ref().expect("checked") {
                PenValue::Value(v) => *v,
                PenValue::Max => {
                    let lm = est.lambda_max(&job.loss, &job.data, cfg.intercept, cfg.ridge_eps)?;
                    lmax = Some(lm);
                    lm.value
                }
            };
            if lam == 0.0 {
                // Grids are strictly positive; zero is a single plain fit.
                let reg = match &est {
                    Estimator::Convex(t) => t.with_pen_val(0.0),
                    _ => template.with_pen_val(0.0),
                };
                let fit = penglm::fit(&job.loss, &reg.into(), &job.data, &job.solver, None)?;
                TunePath {
                    grid: vec![0.0],
                    fits: vec![fit],
                    metrics: vec![BTreeMap::new()],
                    selected_index: Some(0),
                    selection_rule: None,
                }
            } else {
                let mut p = est.fit_path(&job.loss, &job.data, &[lam], &job.solver)?;
                p.selected_index = Some(0);
                p
            }
        }
        "path" => {
            let grid = job.grid(&est, &mut lmax)?;
            est.fit_path(&job.loss, &job.data, &grid, &job.solver)?
        }
        "tune-cv" => {
            let grid = job.grid(&est, &mut lmax)?;
            let rule = if cfg.cv_rule == "1se" {
                SelectionRule::Cv1se
            } else {
                SelectionRule::CvMin
            };
            tuning::cross_validate(&job.loss, &est, &job.data, &grid, &job.cv(rule), &job.solver)?
        }
        "tune-ic" => {
            let grid = job.grid(&est, &mut lmax)?;
            let path = est.fit_path(&job.loss, &job.data, &grid, &job.solver)?;
            let rule = match cfg.criterion.as_str() {
                "aic" => SelectionRule::Aic,
                "ebic" => SelectionRule::Ebic {
                    gamma: cfg.ebic_gamma,
                },
                _ => SelectionRule::Bic,
            };
            let scale = match cfg.noise {
                Noise::PlugIn => NoiseScale::PlugIn,
                Noise::Fixed(v) => NoiseScale::Fixed(v),
                Noise::Reid => {
                    let lasso = Estimator::Convex(PenaltySpec::lasso(1.0));
                    let lm = lasso.lambda_max(&job.loss, &job.data, cfg.intercept, cfg.ridge_eps)?;
                    let g = tuning::make_grid(
                        lm.value,
                        &GridSpec {
                            n_points: cfg.n_points,
                            eps: cfg.eps,
                            user_grid: None,
                        },
                    )?;
                    let cvp = tuning::cross_validate(
                        &job.loss,
                        &lasso,
                        &job.data,
                        &g,
                        &job.cv(SelectionRule::CvMin),
                        &job.solver,
                    )?;
                    let s2 = tuning::noise_variance(
                        &job.loss,
                        &job.data,
                        cvp.selected_fit().expect("cv selects a fit"),
                        NoiseMethod::Reid,
                    )?;
                    NoiseScale::Fixed(s2)
                }
            };
            if let NoiseScale::Fixed(s) = scale {
                noise_used = Some(s);
            }
            tuning::select_by_ic(&path, rule, &job.loss, &job.data, &tspec, scale)?
        }
        other => return Err(CliError::Usage(format!("unknown command {other}"))),
    };

    let mut fits = Vec::with_capacity(path.fits.len());
    let mut all_converged = true;
    let mut total_iter = 0usize;
    let mut raw_fits = Vec::with_capacity(path.fits.len());
    for (i, f) in path.fits.iter().enumerate() {
        let inter_std = f
            .intercept
            .clone()
            .unwrap_or_else(|| DVector::zeros(f.coef.ncols()));
        let (coef, inter) = unstandardize_coef(&f.coef, &inter_std, &state)?;
        let inter = f.intercept.as_ref().map(|_| inter);
        let raw_loss = loss_value(&job.loss, raw, &coef, inter.as_ref())?;
        all_converged &= f.converged;
        total_iter += f.n_iter;
        fits.push(json!({
            "lambda": path.grid[i],
            "coef": matrix_rows(&coef),
            "intercept": inter.as_ref().map(vector),
            "coef_standardized": matrix_rows(&f.coef),
            "objective": f.objective,
            "loss": raw_loss,
            "n_iter": f.n_iter,
            "converged": f.converged,
            "metrics": f_metrics(&path.metrics[i]),
        }));
        raw_fits.push((coef, inter));
    }
    let selection = path.selected_index.map(|i| {
        json!({
            "rule": path.selection_rule.map(|r| r.name()),
            "index": i,
            "lambda": path.grid[i],
            "coef": matrix_rows(&raw_fits[i].0),
            "intercept": raw_fits[i].1.as_ref().map(vector),
        })
    });

    Ok(json!({
        "schema_version": 1,
        "command": cfg.command,
        "config": cfg.to_map(),
        "data": {
            "n": raw.n(),
            "d": raw.d(),
            "features": loaded.features,
            "responses": cfg.response,
        },
        "loss": job.loss.name(),
        "penalty": template.name(),
        "estimator": est.name(),
        "lambda_max": lmax.map(|l| json!({"value": l.value, "kills": l.kills, "source": l.source})),
        "noise_variance": noise_used,
        "standardization": {
            "col_means": vector(&state.col_means),
            "col_scales": vector(&state.col_scales),
        },
        "grid": path.grid,
        "fits": fits,
        "selection": selection,
        "diagnostics": {
            "all_converged": all_converged,
            "total_iterations": total_iter,
        },
    }))
}

fn f_metrics(m: &BTreeMap<String, f64>) -> Value {
    Value::Object(m.iter().map(|(k, v)| (k.clone(), json!(v))).collect())
}
