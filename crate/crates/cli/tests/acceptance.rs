//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use penglm::constraint::{project, ConstraintSpec};
use penglm::lla::{self, AdaptiveSpec, TransformSpec};
use penglm::loss::{loss_gradient, loss_value, LossSpec};
use penglm::penalty::{penalty_value, prox, ConcaveGenerator, PenaltyKind, PenaltySpec};
use penglm::solver::{fit, FitResult, SelectionRule, SolverConfig};
use penglm::tuning::{self, adaptive_penalty, CvConfig, Estimator, GridSpec, NoiseScale, RidgeMaxMethod};
use penglm::{standardize, Coef, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde_json::Value;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: f64) -> Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    ensure(s < limit, || format!("took {s:.1}s, limit {limit}s"))?;
    Ok(s)
}

fn normal_matrix(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    let z = Normal::new(0.0, 1.0).unwrap();
    DMatrix::from_fn(n, d, |_, _| z.sample(rng))
}

fn tight() -> SolverConfig {
    SolverConfig {
        max_iter: 100_000,
        rel_tol: 1e-15,
        residual_tol: 1e-11,
        ..SolverConfig::default()
    }
}

// ---------------------------------------------------------------- 1

/// Compass search from several starts; a derivative-free stand-in for a
/// dense numeric minimizer.
fn compass_min(f: &dyn Fn(&Coef) -> f64, starts: &[Coef]) -> f64 {
    let mut best = f64::INFINITY;
    for s in starts {
        let mut x = s.clone();
        let mut fx = f(&x);
        let mut step = 1.0;
        let mut evals = 0;
        while step > 1e-10 && evals < 40_000 {
            let mut improved = false;
            for i in 0..x.len() {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[i] += sign * step;
                    let fy = f(&y);
                    evals += 1;
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(fx);
    }
    best
}

fn random_weights(rng: &mut ChaCha8Rng, m: usize) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.random_range(0.2..2.0))
}

fn random_penalty(kind: &str, rng: &mut ChaCha8Rng) -> (PenaltySpec, usize, usize) {
    let lam = rng.random_range(0.1..1.5);
    let mix = rng.random_range(0.0..1.0);
    let entry = |rng: &mut ChaCha8Rng| rng.random_range(1..=6usize);
    let shapes = [(3, 2), (2, 3), (2, 2), (6, 1), (1, 4)];
    let shape = shapes[rng.random_range(0..shapes.len())];
    let groups_for = |d: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        let mut gs: Vec<Vec<usize>> = Vec::new();
        for j in 0..d {
            if j == 0 || rng.random_bool(0.5) {
                gs.push(vec![j]);
            } else {
                gs.last_mut().unwrap().push(j);
            }
        }
        gs
    };
    match kind {
        "lasso" => {
            let d = entry(rng);
            (PenaltySpec::lasso(lam).with_weights(random_weights(rng, d)), d, 1)
        }
        "ridge" => {
            let d = entry(rng);
            (PenaltySpec::ridge(lam).with_weights(random_weights(rng, d)), d, 1)
        }
        "generalized_ridge" => {
            let d = entry(rng);
            let m = rng.random_range(1..=4);
            let t = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
            (PenaltySpec::new(PenaltyKind::GeneralizedRidge { tikhonov: t }, lam), d, 1)
        }
        "group_lasso" => {
            let (d, k) = shape;
            let g = groups_for(d, rng);
            let w = random_weights(rng, g.len());
            (PenaltySpec::group_lasso(lam, g).with_weights(w), d, k)
        }
        "multi_task_lasso" => {
            let (d, k) = shape;
            (PenaltySpec::multi_task_lasso(lam).with_weights(random_weights(rng, d)), d, k)
        }
        "tv1" => {
            let d = rng.random_range(2..=6);
            (PenaltySpec::tv1(lam).with_weights(random_weights(rng, d - 1)), d, 1)
        }
        "nuclear_norm" => {
            let (d, k) = shape;
            let mut w: Vec<f64> = random_weights(rng, d.min(k)).iter().copied().collect();
            w.sort_by(|a, b| a.partial_cmp(b).unwrap());
            (PenaltySpec::nuclear_norm(lam).with_weights(DVector::from_vec(w)), d, k)
        }
        "elastic_net" => {
            let d = entry(rng);
            (PenaltySpec::elastic_net(lam, mix).with_weights(random_weights(rng, d)), d, 1)
        }
        "sparse_group_lasso" => {
            let (d, k) = shape;
            let g = groups_for(d, rng);
            let gw = random_weights(rng, g.len());
            let w = random_weights(rng, d * k);
            (
                PenaltySpec::new(
                    PenaltyKind::SparseGroupLasso {
                        mix,
                        groups: g,
                        weights: Some(w),
                        group_weights: Some(gw),
                    },
                    lam,
                ),
                d,
                k,
            )
        }
        "sparse_fused_lasso" => {
            let d = rng.random_range(2..=6);
            let w = random_weights(rng, d - 1);
            (
                PenaltySpec::new(PenaltyKind::SparseFusedLasso { mix, weights: Some(w) }, lam),
                d,
                1,
            )
        }
        _ => unreachable!(),
    }
}

fn prox_oracle_suite() -> Check {
    let start = Instant::now();
    let kinds = [
        "lasso",
        "ridge",
        "generalized_ridge",
        "group_lasso",
        "multi_task_lasso",
        "tv1",
        "nuclear_norm",
        "elastic_net",
        "sparse_group_lasso",
        "sparse_fused_lasso",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = f64::NEG_INFINITY;
    for kind in kinds {
        for inst in 0..100 {
            let (spec, d, k) = random_penalty(kind, &mut rng);
            let x = DMatrix::from_fn(d, k, |_, _| rng.random_range(-2.0..2.0));
            let step = rng.random_range(0.2..2.0);
            let obj = |z: &Coef| (z - &x).norm_squared() / (2.0 * step) + penalty_value(&spec, z).unwrap();
            let p = prox(&spec, &x, step).map_err(|e| format!("{kind}: {e}"))?;
            let mut starts = vec![x.clone(), DMatrix::zeros(d, k)];
            for _ in 0..3 {
                starts.push(DMatrix::from_fn(d, k, |_, _| rng.random_range(-2.0..2.0)));
            }
            let oracle = compass_min(&obj, &starts);
            let gap = obj(&p) - oracle;
            worst = worst.max(gap);
            ensure(gap <= 1e-4, || format!("{kind} instance {inst}: prox worse than oracle by {gap:e}"))?;
        }
    }
    let s = within(start, 30.0)?;
    Ok(format!("10 kinds x 100 instances, worst gap {worst:.2e}, {s:.1}s"))
}

// ---------------------------------------------------------------- 2

fn random_loss_data(loss: &LossSpec, rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
    let cols = match loss {
        LossSpec::LeastSquares | LossSpec::Huber { .. } => 2,
        _ => 1,
    };
    let y = DMatrix::from_fn(n, cols, |_, _| match loss {
        LossSpec::Logistic => f64::from(rng.random_bool(0.5)),
        LossSpec::Multinomial { classes } => rng.random_range(0..*classes) as f64,
        LossSpec::Poisson => rng.random_range(0..5) as f64,
        LossSpec::SquaredHinge => {
            if rng.random_bool(0.5) {
                1.0
            } else {
                -1.0
            }
        }
        _ => rng.random_range(-3.0..3.0),
    });
    let w = DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0));
    let o = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    Dataset::new(x, y)
        .unwrap()
        .with_sample_weights(w)
        .unwrap()
        .with_offsets(o)
        .unwrap()
}

fn gradient_suite() -> Check {
    let start = Instant::now();
    let losses = [
        LossSpec::LeastSquares,
        LossSpec::Logistic,
        LossSpec::multinomial(3).unwrap(),
        LossSpec::Poisson,
        LossSpec::huber(0.7).unwrap(),
        LossSpec::quantile(0.3, 0.2).unwrap(),
        LossSpec::SquaredHinge,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for loss in &losses {
        for inst in 0..100 {
            let data = random_loss_data(loss, &mut rng, 12, 3);
            let k = loss.coef_columns(&data);
            let beta = DMatrix::from_fn(3, k, |_, _| rng.random_range(-1.0..1.0));
            let u = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let (gb, gu) = loss_gradient(loss, &data, &beta, Some(&u)).unwrap();
            let f = |b: &Coef, u: &DVector<f64>| loss_value(loss, &data, b, Some(u)).unwrap();
            let mut num = Vec::new();
            let mut ana = Vec::new();
            for i in 0..beta.len() {
                let h = 1e-5 * beta[i].abs().max(1.0);
                let (mut bp, mut bm) = (beta.clone(), beta.clone());
                bp[i] += h;
                bm[i] -= h;
                num.push((f(&bp, &u) - f(&bm, &u)) / (2.0 * h));
                ana.push(gb[i]);
            }
            for i in 0..k {
                let h = 1e-5 * u[i].abs().max(1.0);
                let (mut up, mut um) = (u.clone(), u.clone());
                up[i] += h;
                um[i] -= h;
                num.push((f(&beta, &up) - f(&beta, &um)) / (2.0 * h));
                ana.push(gu[i]);
            }
            let diff: f64 = num.iter().zip(&ana).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = ana.iter().map(|a| a * a).sum::<f64>().sqrt();
            let rel = diff / norm.max(1e-3);
            worst = worst.max(rel);
            ensure(rel < 1e-5, || format!("{} instance {inst}: rel err {rel:e}", loss.name()))?;
        }
    }
    let s = within(start, 10.0)?;
    Ok(format!("7 losses x 100 instances, worst rel err {worst:.2e}, {s:.2}s"))
}

// ---------------------------------------------------------------- 3

fn glm_data(loss: &LossSpec, rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> Dataset {
    let x = normal_matrix(rng, n, d);
    let beta = DMatrix::from_fn(d, k, |j, _| if j < 3 { 0.8 } else { 0.0 });
    let eta = &x * &beta;
    let z = Normal::new(0.0, 1.0).unwrap();
    let y = DMatrix::from_fn(n, k, |i, c| {
        let e = eta[(i, c)];
        match loss {
            LossSpec::Logistic => f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-e).exp())),
            LossSpec::Poisson => Poisson::new((0.5 * e).exp()).unwrap().sample(rng),
            LossSpec::Huber { .. } => e + z.sample(rng) / rng.random_range(0.2..1.0f64),
            _ => e + z.sample(rng),
        }
    });
    Dataset::new(x, y).unwrap()
}

fn klb_kill() -> Check {
    let start = Instant::now();
    let losses = [
        LossSpec::LeastSquares,
        LossSpec::Logistic,
        LossSpec::Poisson,
        LossSpec::huber(1.345).unwrap(),
    ];
    let groups: Vec<Vec<usize>> = (0..5).map(|g| vec![2 * g, 2 * g + 1]).collect();
    let penalties = [
        (PenaltySpec::lasso(1.0), 1),
        (PenaltySpec::group_lasso(1.0, groups), 1),
        (PenaltySpec::multi_task_lasso(1.0), 3),
        (PenaltySpec::nuclear_norm(1.0), 3),
    ];
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut cases = 0;
    let mut max_at_klb = 0.0f64;
    let mut min_at_half = f64::INFINITY;
    for loss in &losses {
        for (template, k) in &penalties {
            for _ in 0..3 {
                let data = glm_data(loss, &mut rng, 50, 10, *k);
                let klb = tuning::klb(loss, template, &data, true).map_err(|e| e.to_string())?;
                let at = fit(loss, &template.with_pen_val(klb).into(), &data, &cfg, None).map_err(|e| e.to_string())?;
                let half = fit(loss, &template.with_pen_val(0.5 * klb).into(), &data, &cfg, None)
                    .map_err(|e| e.to_string())?;
                let (a, h) = (at.coef.amax(), half.coef.amax());
                max_at_klb = max_at_klb.max(a);
                min_at_half = min_at_half.min(h);
                let tag = format!("{} + {}", loss.name(), template.name());
                ensure(a < 1e-8, || format!("{tag}: |b|inf = {a:e} at klb"))?;
                ensure(h > 1e-4, || format!("{tag}: |b|inf = {h:e} at klb/2"))?;
                cases += 1;
            }
        }
    }
    let s = within(start, 60.0)?;
    Ok(format!(
        "{cases} fits, max |b| at klb {max_at_klb:.1e}, min |b| at klb/2 {min_at_half:.2e}, {s:.1}s"
    ))
}

// ---------------------------------------------------------------- 4

fn closed_form_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lam: f64, intercept: bool) -> DVector<f64> {
    let n = x.nrows();
    let (mut xc, mut yc) = (x.clone(), y.clone());
    if intercept {
        for mut c in xc.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let m = yc.mean();
        yc.add_scalar_mut(-m);
    }
    let a = xc.transpose() * &xc + DMatrix::identity(x.ncols(), x.ncols()) * (n as f64 * lam);
    a.cholesky().unwrap().solve(&(xc.transpose() * yc))
}

fn ridge_lambda_max_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let eps = 0.1;
    let mut worst_eq = 0.0f64;
    for inst in 0..20 {
        let n = 30;
        let d = rng.random_range(3..45);
        let x = normal_matrix(&mut rng, n, d);
        let beta = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let y = &x * beta + DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let intercept = inst % 2 == 0;
        let data = Dataset::from_vector(x.clone(), y.clone()).unwrap();
        let topk = rng.random_range(1..=n.min(d));
        for method in [RidgeMaxMethod::SvdExact, RidgeMaxMethod::SvdTopK(topk), RidgeMaxMethod::OpNorm] {
            let lam = tuning::ridge_lambda_max(&data, eps, method, None, intercept).map_err(|e| e.to_string())?;
            let norm = closed_form_ridge(&x, &y, lam, intercept).norm();
            ensure(norm <= eps * (1.0 + 1e-10), || format!("instance {inst} {method:?}: norm {norm}"))?;
            if method == RidgeMaxMethod::SvdExact {
                worst_eq = worst_eq.max((norm - eps).abs());
                ensure((norm - eps).abs() <= 1e-4, || format!("instance {inst}: exact norm {norm}"))?;
            }
        }
    }
    Ok(format!("20 instances x 3 methods, worst |norm - eps| for svd_exact {worst_eq:.1e}"))
}

// ---------------------------------------------------------------- 5

fn newton_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for loss in [LossSpec::Logistic, LossSpec::Poisson] {
        for inst in 0..20 {
            let (n, d) = (40, rng.random_range(3..12));
            let data = glm_data(&loss, &mut rng, n, d, 1);
            let eps = rng.random_range(0.05..0.5);
            let lam = tuning::newton_lambda_max(&loss, &data, eps, true).map_err(|e| e.to_string())?;
            let y = data.y_column();
            let ybar = y.mean();
            let (u0, g, h): (f64, DVector<f64>, DVector<f64>) = match loss {
                LossSpec::Logistic => {
                    let u0 = (ybar / (1.0 - ybar)).ln();
                    let p = 1.0 / (1.0 + (-u0).exp());
                    (u0, y.map(|v| p - v), DVector::from_element(n, p * (1.0 - p)))
                }
                _ => {
                    let u0 = ybar.ln();
                    (u0, y.map(|v| u0.exp() - v), DVector::from_element(n, u0.exp()))
                }
            };
            let _ = u0;
            // Joint Newton system in (beta, u); the intercept is unpenalized.
            let mut xa = DMatrix::from_element(n, d + 1, 1.0);
            xa.view_mut((0, 0), (n, d)).copy_from(data.x());
            let mut hx = xa.clone();
            for i in 0..n {
                hx.row_mut(i).scale_mut(h[i]);
            }
            let mut a = xa.transpose() * hx;
            for j in 0..d {
                a[(j, j)] += n as f64 * lam;
            }
            let sol = a.lu().solve(&(xa.transpose() * g)).ok_or("singular newton system")?;
            let norm = sol.rows(0, d).norm();
            worst = worst.max(norm / eps);
            ensure(norm <= eps * (1.0 + 1e-10), || format!("{} instance {inst}: norm {norm} > {eps}", loss.name()))?;
        }
    }
    Ok(format!("40 instances, max norm/eps {worst:.6}"))
}

// ---------------------------------------------------------------- 6

fn lla_guarantees() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let cfg = tight();
    // (a) one SCAD step from zero is the lasso fit.
    let mut worst_a = 0.0f64;
    for _ in 0..10 {
        for loss in [LossSpec::LeastSquares, LossSpec::Logistic] {
            let data = glm_data(&loss, &mut rng, 40, 6, 1);
            let klb = tuning::klb(&loss, &PenaltySpec::lasso(1.0), &data, true).map_err(|e| e.to_string())?;
            let lam = rng.random_range(0.1..0.9) * klb;
            let gen = ConcaveGenerator::scad(lam, 3.7).unwrap();
            let zero = DMatrix::zeros(6, 1);
            let r = lla::lla(&loss, &gen, &TransformSpec::Entrywise, &data, &zero, &cfg, 1, None)
                .map_err(|e| e.to_string())?;
            let lasso = fit(&loss, &PenaltySpec::lasso(lam).into(), &data, &cfg, None).map_err(|e| e.to_string())?;
            let diff = (&r.steps[0] - &lasso.coef).amax();
            worst_a = worst_a.max(diff);
            ensure(diff <= 1e-8, || format!("(a) step one differs from lasso by {diff:e}"))?;
        }
    }
    // (b) at the killer bound one step returns zero and stays there.
    let mut kills = 0;
    for i in 0..20 {
        let loss = if i % 2 == 0 { LossSpec::LeastSquares } else { LossSpec::Logistic };
        let data = glm_data(&loss, &mut rng, 40, 6, 1);
        let klb = tuning::klb(&loss, &PenaltySpec::lasso(1.0), &data, true).map_err(|e| e.to_string())?;
        let init = DMatrix::from_fn(6, 1, |_, _| rng.random_range(-2.0..2.0));
        let gen = if i % 4 < 2 {
            ConcaveGenerator::scad(1.0, 3.7).unwrap()
        } else {
            ConcaveGenerator::mcp(1.0, 2.5).unwrap()
        };
        let bound = lla::lla_killer_bound(&gen, &TransformSpec::Entrywise, &init, klb).map_err(|e| e.to_string())?;
        let r = lla::lla(&loss, &gen.with_pen_val(bound), &TransformSpec::Entrywise, &data, &init, &cfg, 2, None)
            .map_err(|e| e.to_string())?;
        let a = r.steps.iter().map(|s| s.amax()).fold(0.0, f64::max);
        ensure(a < 1e-8, || format!("(b) run {i}: |b|inf = {a:e} at the killer bound"))?;
        kills += 1;
    }
    // (c) fuzz: the non-convex objective never increases across steps.
    let default_cfg = SolverConfig::default();
    let mut worst_rise = f64::NEG_INFINITY;
    for run in 0..200 {
        let loss = match run % 3 {
            0 => LossSpec::LeastSquares,
            1 => LossSpec::Logistic,
            _ => LossSpec::Poisson,
        };
        let d = rng.random_range(3..9);
        let data = glm_data(&loss, &mut rng, 30, d, 1);
        let tspec = if run % 2 == 0 {
            TransformSpec::Entrywise
        } else {
            TransformSpec::Group((0..d).collect::<Vec<_>>().chunks(2).map(|c| c.to_vec()).collect())
        };
        let klb = tuning::klb(&loss, &PenaltySpec::lasso(1.0), &data, true).map_err(|e| e.to_string())?;
        let lam = rng.random_range(0.05..1.0) * klb;
        let gen = if rng.random_bool(0.5) {
            ConcaveGenerator::scad(lam, rng.random_range(2.5..5.0)).unwrap()
        } else {
            ConcaveGenerator::mcp(lam, rng.random_range(1.5..4.0)).unwrap()
        };
        let init = DMatrix::from_fn(d, 1, |_, _| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(-1.5..1.5) });
        let r = lla::lla(&loss, &gen, &tspec, &data, &init, &default_cfg, 5, None).map_err(|e| e.to_string())?;
        for w in r.objectives.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
            ensure(w[1] <= w[0] + 1e-10, || format!("(c) run {run}: objective rose {} -> {}", w[0], w[1]))?;
        }
    }
    Ok(format!(
        "(a) max diff {worst_a:.1e}; (b) {kills}/20 one-step kills; (c) 200 runs, max rise {worst_rise:.1e}"
    ))
}

// ---------------------------------------------------------------- 7

fn solver_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cfg = tight();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (n, d) = (40, 5);
        let x = normal_matrix(&mut rng, n, d);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] - 2.0 * x[(i, 3)] + 0.5 + rng.random_range(-1.0..1.0));
        let data = Dataset::from_vector(x.clone(), y.clone()).unwrap();
        let f = fit(&LossSpec::LeastSquares, &PenaltySpec::lasso(0.0).into(), &data, &cfg, None).map_err(|e| e.to_string())?;
        let mut xa = DMatrix::from_element(n, d + 1, 1.0);
        xa.view_mut((0, 0), (n, d)).copy_from(&x);
        let ols = (xa.transpose() * &xa).cholesky().unwrap().solve(&(xa.transpose() * &y));
        let diff = (f.coef.column(0) - ols.rows(0, d)).amax().max((f.intercept.unwrap()[0] - ols[d]).abs());
        worst = worst.max(diff);
        ensure(diff <= 1e-6, || format!("OLS mismatch {diff:e}"))?;
    }
    for _ in 0..5 {
        let (n, d) = (80, 4);
        let data = glm_data(&LossSpec::Logistic, &mut rng, n, d, 1);
        let f = fit(&LossSpec::Logistic, &PenaltySpec::lasso(0.0).into(), &data, &cfg, None).map_err(|e| e.to_string())?;
        let reference = gradient_descent_logistic(&data);
        let mut got = f.coef.column(0).into_owned().push(0.0);
        got[d] = f.intercept.unwrap()[0];
        let diff = (got - reference).amax();
        worst = worst.max(diff);
        ensure(diff <= 1e-6, || format!("logistic mismatch {diff:e}"))?;
    }
    for _ in 0..10 {
        let (n, d) = (30, 4);
        let q = normal_matrix(&mut rng, n, d).qr().q();
        let x = q * (n as f64).sqrt();
        let y = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let lam = rng.random_range(0.05..0.6);
        let data = Dataset::from_vector(x.clone(), y.clone()).unwrap();
        let nc = SolverConfig {
            fit_intercept: false,
            ..cfg.clone()
        };
        let f = fit(&LossSpec::LeastSquares, &PenaltySpec::lasso(lam).into(), &data, &nc, None).map_err(|e| e.to_string())?;
        let z = x.transpose() * y / n as f64;
        let expect = z.map(|v| v.signum() * (v.abs() - lam).max(0.0));
        let diff = (f.coef.column(0) - expect).amax();
        worst = worst.max(diff);
        ensure(diff <= 1e-6, || format!("orthogonal lasso mismatch {diff:e}"))?;
    }
    Ok(format!("OLS, logistic reference and orthogonal lasso, worst diff {worst:.1e}"))
}

/// Plain gradient descent on the averaged logistic loss with a fixed
/// `1/L` step, run until the gradient vanishes.
fn gradient_descent_logistic(data: &Dataset) -> DVector<f64> {
    let (n, d) = (data.n(), data.d());
    let mut xa = DMatrix::from_element(n, d + 1, 1.0);
    xa.view_mut((0, 0), (n, d)).copy_from(data.x());
    let y = data.y_column();
    let smax = xa.singular_values().max();
    let step = 4.0 * n as f64 / (smax * smax);
    let mut theta = DVector::zeros(d + 1);
    for _ in 0..2_000_000 {
        let z = &xa * &theta;
        let r = DVector::from_fn(n, |i, _| 1.0 / (1.0 + (-z[i]).exp()) - y[i]);
        let g = xa.transpose() * r / n as f64;
        if g.amax() < 1e-13 {
            break;
        }
        theta -= g * step;
    }
    theta
}

// ---------------------------------------------------------------- 8

fn support(c: &Coef) -> Vec<usize> {
    (0..c.nrows()).filter(|&j| c[(j, 0)] != 0.0).collect()
}

fn support_recovery() -> Check {
    let (n, d, s) = (200, 50, 5);
    let grid_spec = GridSpec {
        n_points: 50,
        eps: 1e-2,
        user_grid: None,
    };
    let cfg = SolverConfig::default();
    let (mut lasso_exact, mut adaptive_exact, mut bic_smaller) = (0, 0, 0);
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(8000 + seed);
        let x = normal_matrix(&mut rng, n, d);
        let mut idx: Vec<usize> = (0..d).collect();
        for i in 0..s {
            let j = rng.random_range(i..d);
            idx.swap(i, j);
        }
        let mut truth: Vec<usize> = idx[..s].to_vec();
        truth.sort_unstable();
        let beta = DVector::from_fn(d, |j, _| if truth.contains(&j) { if rng.random_bool(0.5) { 1.0 } else { -1.0 } } else { 0.0 });
        // Signal variance is ‖β‖² = 5 for standard normal designs; SNR 3.
        let sigma = (s as f64 / 3.0).sqrt();
        let z = Normal::new(0.0, sigma).unwrap();
        let y = &x * beta + DVector::from_fn(n, |_, _| z.sample(&mut rng));
        let (data, _) = standardize(&Dataset::from_vector(x, y).unwrap()).map_err(|e| e.to_string())?;
        let loss = LossSpec::LeastSquares;
        let cv = CvConfig {
            folds: 5,
            seed,
            rule: SelectionRule::CvMin,
            standardize_folds: true,
        };
        let tune = |est: &Estimator| -> Result<penglm::solver::TunePath, String> {
            let lm = est.lambda_max(&loss, &data, true, 1e-3).map_err(|e| e.to_string())?;
            let grid = tuning::make_grid(lm.value, &grid_spec).map_err(|e| e.to_string())?;
            tuning::cross_validate(&loss, est, &data, &grid, &cv, &cfg).map_err(|e| e.to_string())
        };
        let lasso_path = tune(&Estimator::Convex(PenaltySpec::lasso(1.0)))?;
        let lasso_fit: &FitResult = lasso_path.selected_fit().unwrap();
        let ada = adaptive_penalty(&AdaptiveSpec::default(), &TransformSpec::Entrywise, &lasso_fit.coef, n)
            .map_err(|e| e.to_string())?;
        let ada_path = tune(&Estimator::Convex(ada))?;
        let bic = tuning::select_by_ic(&lasso_path, SelectionRule::Bic, &loss, &data, &TransformSpec::Entrywise, NoiseScale::PlugIn)
            .map_err(|e| e.to_string())?;
        let cv_support = support(&lasso_fit.coef);
        if cv_support == truth {
            lasso_exact += 1;
        }
        if support(&ada_path.selected_fit().unwrap().coef) == truth {
            adaptive_exact += 1;
        }
        if support(&bic.selected_fit().unwrap().coef).len() <= cv_support.len() {
            bic_smaller += 1;
        }
    }
    let detail = format!(
        "exact support: adaptive {adaptive_exact}/20, lasso {lasso_exact}/20; BIC size <= CV-min size in {bic_smaller}/20"
    );
    ensure(adaptive_exact >= lasso_exact && bic_smaller >= 15, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 9

/// Isotonic regression by enumerating every split into consecutive
/// blocks; the solution is the feasible block-mean vector of least cost.
fn isotonic_oracle(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0..(1u32 << (m - 1)) {
        let mut z = vec![0.0; m];
        let mut start = 0;
        for i in 0..m {
            if i == m - 1 || mask & (1 << i) != 0 {
                let mean = x[start..=i].iter().sum::<f64>() / (i + 1 - start) as f64;
                z[start..=i].iter_mut().for_each(|v| *v = mean);
                start = i + 1;
            }
        }
        if z.windows(2).all(|w| w[0] <= w[1] + 1e-15) {
            let cost: f64 = z.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
            if cost < best.0 {
                best = (cost, z);
            }
        }
    }
    best.1
}

fn projection_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst_vi = f64::NEG_INFINITY;
    let mut worst_iso = 0.0f64;
    let mut count = 0;
    for kind in 0..7 {
        for inst in 0..100 {
            let d = rng.random_range(1..=6);
            let spec = match kind {
                0 => ConstraintSpec::Positive,
                1 => {
                    let lo = rng.random_range(-1.0..0.5);
                    ConstraintSpec::Box { lower: lo, upper: lo + rng.random_range(0.0..1.5) }
                }
                2 => ConstraintSpec::Simplex,
                3 => ConstraintSpec::L1Ball { radius: rng.random_range(0.2..2.0) },
                4 => ConstraintSpec::L2Ball { radius: rng.random_range(0.2..2.0) },
                5 => {
                    let m = rng.random_range(1..=d);
                    let a = DMatrix::from_fn(m, d, |_, _| rng.random_range(-1.0..1.0));
                    let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
                    ConstraintSpec::LinearEquality { a, b }
                }
                _ => ConstraintSpec::Isotonic,
            };
            let x = DMatrix::from_fn(d, 1, |_, _| rng.random_range(-3.0..3.0));
            let p = project(&spec, &x).map_err(|e| format!("{}: {e}", spec.name()))?;
            let pp = project(&spec, &p).unwrap();
            let idem = (&pp - &p).amax();
            ensure(idem <= 1e-10, || format!("{} instance {inst}: not idempotent ({idem:e})", spec.name()))?;
            ensure(spec.contains(&p, 1e-9), || format!("{} instance {inst}: output infeasible", spec.name()))?;
            for _ in 0..20 {
                let z = project(&spec, &DMatrix::from_fn(d, 1, |_, _| rng.random_range(-3.0..3.0))).unwrap();
                let vi = (&x - &p).dot(&(&z - &p));
                worst_vi = worst_vi.max(vi);
                ensure(vi <= 1e-9, || format!("{} instance {inst}: variational inequality {vi:e}", spec.name()))?;
            }
            if kind == 6 {
                let oracle = isotonic_oracle(x.as_slice());
                let diff = p.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst_iso = worst_iso.max(diff);
                ensure(diff <= 1e-6, || format!("isotonic instance {inst}: oracle diff {diff:e}"))?;
            }
            count += 1;
        }
    }
    Ok(format!("{count} projections, max VI {worst_vi:.1e}, isotonic oracle diff {worst_iso:.1e}"))
}

// ---------------------------------------------------------------- 10

fn cli_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let (n, d) = (80, 6);
    let x = normal_matrix(&mut rng, n, d);
    let y = DVector::from_fn(n, |i, _| 2.0 * x[(i, 1)] - x[(i, 4)] + 1.0 + rng.random_range(-1.0..1.0));
    let mut text = String::from("f0,f1,f2,f3,f4,f5,resp\n");
    for i in 0..n {
        let row: Vec<String> = (0..d).map(|j| format!("{:?}", x[(i, j)])).collect();
        text.push_str(&format!("{},{:?}\n", row.join(","), y[i]));
    }
    let csv = dir.path().join("data.csv");
    std::fs::write(&csv, text).map_err(|e| e.to_string())?;
    let run = || -> Result<Value, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_penglm"))
            .args(["tune-cv", "--response", "resp", "--seed", "42", "--cv-k", "5", "--set", "n_points=20", "--data"])
            .arg(&csv)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
        let mut v: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        v.as_object_mut().unwrap().remove("timestamp");
        Ok(v)
    };
    let (a, b) = (run()?, run()?);
    let (sa, sb) = (serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    ensure(sa == sb, || "seeded tune-cv outputs differ".into())?;

    let raw = Dataset::from_vector(x, y).unwrap();
    let mut worst = 0.0f64;
    for f in a["fits"].as_array().unwrap() {
        let rows = |v: &Value| -> Coef {
            let r: Vec<f64> = v.as_array().unwrap().iter().map(|r| r[0].as_f64().unwrap()).collect();
            DMatrix::from_column_slice(r.len(), 1, &r)
        };
        let coef = rows(&f["coef"]);
        let std_coef = rows(&f["coef_standardized"]);
        let inter = DVector::from_element(1, f["intercept"][0].as_f64().unwrap());
        let lam = f["lambda"].as_f64().unwrap();
        let obj = loss_value(&LossSpec::LeastSquares, &raw, &coef, Some(&inter)).unwrap()
            + penalty_value(&PenaltySpec::lasso(lam), &std_coef).unwrap();
        let gap = (obj - f["objective"].as_f64().unwrap()).abs();
        worst = worst.max(gap);
        ensure(gap <= 1e-8, || format!("objective round trip off by {gap:e}"))?;
    }
    Ok(format!("identical JSON across runs; 20 objectives round-trip within {worst:.1e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("prox oracle suite", prox_oracle_suite),
        ("gradient suite", gradient_suite),
        ("killer lower bound kill", klb_kill),
        ("ridge lambda_max", ridge_lambda_max_check),
        ("newton heuristic", newton_check),
        ("LLA guarantees", lla_guarantees),
        ("solver correctness", solver_correctness),
        ("support recovery", support_recovery),
        ("projection suite", projection_suite),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = Duration::as_secs_f64(&t.elapsed());
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} criteria passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
