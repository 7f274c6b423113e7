//! Minimal built-in nuisance learners: ridge regression, k-nearest-neighbor
//! regression, and oracle plug-ins that read the closed-form nuisances of a
//! simulation scenario.
//!
//! These are deliberately small — enough for desk-scale simulations and for
//! cross-fitting the AIPW scores. Anything heavier (forests, boosting, Cox
//! models) is out of scope; import external predictions instead.

use crate::error::{Error, Result};
use crate::model::{Endpoint, EvalDataset, FeatureMatrix};
use crate::scores::{NuisanceEvaluations, SurvivalTables};
use crate::simulate::{self, Scenario, ScenarioKind};

/// What a learner is being fit to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Expected outcome under control, `m(x, 0)`.
    M0,
    /// Expected outcome under treatment, `m(x, 1)`.
    M1,
    /// Treatment propensity `e(x)`; predictions are clipped into (0,1).
    Propensity,
    /// Censoring-model targets (only the oracle provides these).
    Censoring,
}

/// Learner family and hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerKind {
    /// Penalized least squares on standardized features, `lambda > 0`.
    Ridge { lambda: f64 },
    /// Mean of the `k_neighbors` nearest training targets under Euclidean
    /// distance on raw features; distance ties break toward the lowest index.
    Knn { k_neighbors: usize },
    /// Exact nuisances from a simulation scenario's data-generating process.
    Oracle { scenario: Scenario },
}

/// A learner bound to its prediction target.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub target: Target,
}

impl LearnerSpec {
    pub fn ridge(lambda: f64, target: Target) -> Self {
        LearnerSpec {
            kind: LearnerKind::Ridge { lambda },
            target,
        }
    }

    pub fn knn(k_neighbors: usize, target: Target) -> Self {
        LearnerSpec {
            kind: LearnerKind::Knn { k_neighbors },
            target,
        }
    }

    fn validate(&self) -> Result<()> {
        match &self.kind {
            LearnerKind::Ridge { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::schema(format!(
                        "ridge penalty must be positive, got {lambda}"
                    )));
                }
            }
            LearnerKind::Knn { k_neighbors } => {
                if *k_neighbors == 0 {
                    return Err(Error::schema("knn needs at least one neighbor"));
                }
            }
            LearnerKind::Oracle { .. } => {}
        }
        Ok(())
    }
}

/// A fitted model; immutable, `predict` is reentrant.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Ridge {
        feature_mean: Vec<f64>,
        feature_sd: Vec<f64>,
        beta: Vec<f64>,
        intercept: f64,
        clip_unit_interval: bool,
    },
    Knn {
        train_x: FeatureMatrix,
        train_y: Vec<f64>,
        k: usize,
        clip_unit_interval: bool,
    },
    Oracle {
        scenario: Scenario,
        target: Target,
        /// Scale context some scenarios need (sample SD of the raw effect).
        tau_sd: f64,
    },
}

/// Fit a learner on the `subset` rows of `x` against `targets`.
pub fn fit(
    spec: &LearnerSpec,
    x: &FeatureMatrix,
    targets: &[f64],
    subset: &[usize],
) -> Result<FittedModel> {
    spec.validate()?;
    if subset.is_empty() {
        return Err(Error::schema("empty training subset"));
    }
    if targets.len() != x.rows() {
        return Err(Error::schema(format!(
            "target length {} does not match {} feature rows",
            targets.len(),
            x.rows()
        )));
    }
    if let Some(&i) = subset.iter().find(|&&i| !targets[i].is_finite()) {
        return Err(Error::schema_at("target", i + 1, "non-finite value"));
    }
    let clip = spec.target == Target::Propensity;
    match &spec.kind {
        LearnerKind::Ridge { lambda } => fit_ridge(x, targets, subset, *lambda, clip),
        LearnerKind::Knn { k_neighbors } => {
            let train_x = x.select_rows(subset);
            let train_y = subset.iter().map(|&i| targets[i]).collect();
            Ok(FittedModel::Knn {
                train_x,
                train_y,
                k: *k_neighbors,
                clip_unit_interval: clip,
            })
        }
        LearnerKind::Oracle { scenario } => Ok(FittedModel::Oracle {
            scenario: scenario.clone(),
            target: spec.target,
            tau_sd: scenario.kind.raw_effect_sd(x),
        }),
    }
}

/// Predict on every row of `x_new`.
pub fn predict(model: &FittedModel, x_new: &FeatureMatrix) -> Result<Vec<f64>> {
    match model {
        FittedModel::Ridge {
            feature_mean,
            feature_sd,
            beta,
            intercept,
            clip_unit_interval,
        } => {
            if x_new.cols() != feature_mean.len() {
                return Err(Error::schema(format!(
                    "feature dimension mismatch: model has {}, input has {}",
                    feature_mean.len(),
                    x_new.cols()
                )));
            }
            let mut out = Vec::with_capacity(x_new.rows());
            for i in 0..x_new.rows() {
                let row = x_new.row(i);
                let mut pred = *intercept;
                for j in 0..row.len() {
                    pred += beta[j] * (row[j] - feature_mean[j]) / feature_sd[j];
                }
                out.push(maybe_clip(pred, *clip_unit_interval));
            }
            Ok(out)
        }
        FittedModel::Knn {
            train_x,
            train_y,
            k,
            clip_unit_interval,
        } => {
            if x_new.cols() != train_x.cols() {
                return Err(Error::schema(format!(
                    "feature dimension mismatch: model has {}, input has {}",
                    train_x.cols(),
                    x_new.cols()
                )));
            }
            let k = (*k).min(train_x.rows());
            let mut out = Vec::with_capacity(x_new.rows());
            let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train_x.rows());
            for i in 0..x_new.rows() {
                let q = x_new.row(i);
                dist.clear();
                for t in 0..train_x.rows() {
                    let d2: f64 = train_x
                        .row(t)
                        .iter()
                        .zip(q)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    dist.push((d2, t));
                }
                dist.select_nth_unstable_by(k - 1, |a, b| {
                    a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
                });
                let mean = dist[..k].iter().map(|&(_, t)| train_y[t]).sum::<f64>() / k as f64;
                out.push(maybe_clip(mean, *clip_unit_interval));
            }
            Ok(out)
        }
        FittedModel::Oracle {
            scenario,
            target,
            tau_sd,
        } => scenario.kind.oracle_predict(*target, x_new, *tau_sd),
    }
}

fn maybe_clip(v: f64, clip: bool) -> f64 {
    if clip {
        v.clamp(1e-12, 1.0 - 1e-12)
    } else {
        v
    }
}

fn fit_ridge(
    x: &FeatureMatrix,
    targets: &[f64],
    subset: &[usize],
    lambda: f64,
    clip: bool,
) -> Result<FittedModel> {
    let d = x.cols();
    let m = subset.len() as f64;

    // Standardization uses training-subset statistics only, so cross-fit
    // folds never leak into each other.
    let mut mean = vec![0.0f64; d];
    for &i in subset {
        for (j, v) in x.row(i).iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut sd = vec![0.0f64; d];
    for &i in subset {
        for (j, v) in x.row(i).iter().enumerate() {
            sd[j] += (v - mean[j]) * (v - mean[j]);
        }
    }
    for v in &mut sd {
        *v = (*v / m).sqrt();
        if *v == 0.0 {
            *v = 1.0; // constant column contributes nothing
        }
    }

    let y_mean = subset.iter().map(|&i| targets[i]).sum::<f64>() / m;

    // Normal equations on standardized features: (Z'Z + lambda I) beta = Z'r.
    let mut ata = vec![0.0f64; d * d];
    let mut atr = vec![0.0f64; d];
    let mut z = vec![0.0f64; d];
    for &i in subset {
        let row = x.row(i);
        for j in 0..d {
            z[j] = (row[j] - mean[j]) / sd[j];
        }
        let r = targets[i] - y_mean;
        for j in 0..d {
            atr[j] += z[j] * r;
            for l in j..d {
                ata[j * d + l] += z[j] * z[l];
            }
        }
    }
    for j in 0..d {
        ata[j * d + j] += lambda;
        for l in 0..j {
            ata[j * d + l] = ata[l * d + j];
        }
    }

    let beta = cholesky_solve(&ata, &atr, d)?;
    Ok(FittedModel::Ridge {
        feature_mean: mean,
        feature_sd: sd,
        beta,
        intercept: y_mean,
        clip_unit_interval: clip,
    })
}

/// Exact nuisance evaluations from a scenario's closed-form data-generating
/// process, for datasets produced by [`crate::simulate::generate`].
///
/// For `survival_second` this includes the censoring-model tables: `q`,
/// `S_C` (evaluated analytically for the log-normal censoring model), and
/// cumulative-hazard increments, on the grid of distinct truncated
/// observation times. `grid_cap` thins that grid to at most the given number
/// of points (keeping the smallest and largest), which bounds the table size
/// at large `n`.
pub fn oracle_nuisances(
    scenario: &Scenario,
    d: &EvalDataset,
    endpoint: Option<Endpoint>,
    grid_cap: Option<usize>,
) -> Result<NuisanceEvaluations> {
    scenario.kind.validate()?;
    let x = d
        .features
        .as_ref()
        .ok_or_else(|| Error::schema("oracle nuisances require the generated feature columns"))?;
    let tau_sd = scenario.kind.raw_effect_sd(x);
    let e = scenario.kind.oracle_predict(Target::Propensity, x, tau_sd)?;

    match &scenario.kind {
        ScenarioKind::Kink { .. } | ScenarioKind::SetupA { .. } => {
            let m0 = scenario.kind.oracle_predict(Target::M0, x, tau_sd)?;
            let m1 = scenario.kind.oracle_predict(Target::M1, x, tau_sd)?;
            Ok(NuisanceEvaluations::from_mhat(m0, m1).with_ehat(e))
        }
        ScenarioKind::SurvivalSecond { .. } => {
            let endpoint = endpoint.ok_or_else(|| {
                Error::schema("survival oracle nuisances require an endpoint (risk or rmst)")
            })?;
            let times = d.event_time.as_ref().ok_or_else(|| {
                Error::schema("scenario mismatch: dataset has no survival columns")
            })?;
            let n = d.n();
            let t0 = endpoint.horizon();

            let m0: Vec<f64> = (0..n)
                .map(|i| simulate::survival_m(x.row(i), 0, endpoint))
                .collect();
            let m1: Vec<f64> = (0..n)
                .map(|i| simulate::survival_m(x.row(i), 1, endpoint))
                .collect();

            let mut grid: Vec<f64> = times.iter().map(|&t| t.min(t0)).collect();
            grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
            grid.dedup();
            if let Some(cap) = grid_cap {
                grid = thin_grid(grid, cap.max(2));
            }
            let g = grid.len();

            let mut q = vec![0.0f64; n * g];
            let mut sc = vec![0.0f64; n * g];
            let mut dlambda = vec![0.0f64; n * g];
            for i in 0..n {
                let row = x.row(i);
                let w = d.treatment[i];
                let mut prev_log_sc = 0.0f64; // log S_C(0) = 0
                for (k, &s) in grid.iter().enumerate() {
                    let sc_val = simulate::survival_sc(row, w, s).clamp(1e-300, 1.0);
                    q[i * g + k] = simulate::survival_q(row, w, endpoint, s);
                    sc[i * g + k] = sc_val;
                    let log_sc = sc_val.ln();
                    // Cumulative-hazard mass over (previous grid time, s].
                    dlambda[i * g + k] = (prev_log_sc - log_sc).max(0.0);
                    prev_log_sc = log_sc;
                }
            }
            let tables = SurvivalTables::new(grid, q, sc, dlambda, n)?;
            Ok(NuisanceEvaluations::from_mhat(m0, m1)
                .with_ehat(e)
                .with_survival(tables))
        }
    }
}

/// Thin a sorted grid to at most `cap` points, keeping the endpoints.
fn thin_grid(grid: Vec<f64>, cap: usize) -> Vec<f64> {
    let g = grid.len();
    if g <= cap {
        return grid;
    }
    let mut out = Vec::with_capacity(cap);
    for k in 0..cap {
        let idx = k * (g - 1) / (cap - 1);
        out.push(grid[idx]);
    }
    out.dedup();
    out
}

/// Solve `A x = b` for symmetric positive definite `A` (dense, row-major).
fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0f64; d * d];
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= l[j * d + k] * l[j * d + k];
        }
        if diag <= 0.0 {
            return Err(Error::Degenerate(
                "ridge normal equations are not positive definite".into(),
            ));
        }
        l[j * d + j] = diag.sqrt();
        for i in j + 1..d {
            let mut v = a[i * d + j];
            for k in 0..j {
                v -= l[i * d + k] * l[j * d + k];
            }
            l[i * d + j] = v / l[j * d + j];
        }
    }
    // Forward then backward substitution.
    let mut y = vec![0.0f64; d];
    for i in 0..d {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * d + k] * y[k];
        }
        y[i] = v / l[i * d + i];
    }
    let mut xsol = vec![0.0f64; d];
    for i in (0..d).rev() {
        let mut v = y[i];
        for k in i + 1..d {
            v -= l[k * d + i] * xsol[k];
        }
        xsol[i] = v / l[i * d + i];
    }
    Ok(xsol)
}
