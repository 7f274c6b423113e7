//! Data-generating scenarios and the Monte Carlo power harness.
//!
//! Three scenarios are built in:
//!
//! * `kink` — a randomized trial on `X ~ Unif(0,1)` where the effect
//!   `max(-2x/p^2 + 2/p, 0)` is nonzero on a fraction `p` of the population
//!   and the rule `S(X) = 1 - X` ranks units perfectly;
//! * `setup_a` — an observational design with a trimmed-sine propensity, a
//!   nonlinear baseline, and an effect rescaled to a target signal strength
//!   `sigma_tau`;
//! * `survival_second` — right-censored outcomes with a proportional-hazards
//!   failure model and log-normal censoring, so every nuisance has a closed
//!   form.
//!
//! `generate` is bitwise reproducible from `(scenario, seed)` and returns the
//! hidden truth alongside the dataset so oracles and power studies can use it.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::inference::{self, BootstrapConfig};
use crate::model::{rank_values, Endpoint, EvalDataset, FeatureMatrix};
use crate::nuisance::{self, LearnerKind, LearnerSpec, Target};
use crate::rng::{mix_seed, rng_at};
use crate::scores::{self, ScoreOptions};
use crate::weights::{self, WeightSpec};

/// Scenario family and parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Kinked-effect randomized trial; `p` in (0,1] is the fraction of the
    /// population with a nonzero effect. Outcome noise is `N(0, 0.2)`, read
    /// as a variance by default (`noise_is_sd` switches the reading).
    Kink { p: f64, noise_is_sd: bool },
    /// Observational design with `d >= 5` uniform covariates, effect signal
    /// strength `sigma_tau >= 0` and noise scale `sigma_eps > 0`.
    SetupA {
        d: usize,
        sigma_tau: f64,
        sigma_eps: f64,
    },
    /// Proportional-hazards failure times with log-normal censoring; the
    /// bundled oracle rule ranks by the restricted-mean-survival effect at
    /// horizon `t0`.
    SurvivalSecond { t0: f64 },
}

/// A scenario instantiated at a sample size and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub n: usize,
    pub seed: u64,
}

/// Closed-form truth retained for oracles.
#[derive(Debug, Clone)]
pub struct HiddenTruth {
    /// Effect for each generated unit (for the scenario's endpoint).
    pub tau: Vec<f64>,
    /// True treatment probability for each unit.
    pub propensity: Vec<f64>,
}

pub const KINK_NOISE_VARIANCE: f64 = 0.2;

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Kink { .. } => "kink",
            ScenarioKind::SetupA { .. } => "setup_a",
            ScenarioKind::SurvivalSecond { .. } => "survival_second",
        }
    }

    pub fn param_string(&self) -> String {
        match self {
            ScenarioKind::Kink { p, .. } => format!("p={p}"),
            ScenarioKind::SetupA { sigma_tau, .. } => format!("sigma_tau={sigma_tau}"),
            ScenarioKind::SurvivalSecond { t0 } => format!("t0={t0}"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ScenarioKind::Kink { p, .. } => {
                if !(p.is_finite() && *p > 0.0 && *p <= 1.0) {
                    return Err(Error::schema(format!("kink fraction p must lie in (0,1], got {p}")));
                }
            }
            ScenarioKind::SetupA {
                d,
                sigma_tau,
                sigma_eps,
            } => {
                if *d < 5 {
                    return Err(Error::schema(format!("setup_a needs at least 5 covariates, got {d}")));
                }
                if !(sigma_tau.is_finite() && *sigma_tau >= 0.0) {
                    return Err(Error::schema(format!("sigma_tau must be >= 0, got {sigma_tau}")));
                }
                if !(sigma_eps.is_finite() && *sigma_eps > 0.0) {
                    return Err(Error::schema(format!("sigma_eps must be > 0, got {sigma_eps}")));
                }
            }
            ScenarioKind::SurvivalSecond { t0 } => {
                if !(t0.is_finite() && *t0 > 0.0) {
                    return Err(Error::schema(format!("horizon t0 must be > 0, got {t0}")));
                }
            }
        }
        Ok(())
    }

    /// Name of the priority column `generate` bundles with the dataset.
    pub fn bundled_rule(&self) -> &'static str {
        match self {
            ScenarioKind::Kink { .. } => "rule",
            _ => "oracle",
        }
    }
}

// Closed forms. These are the single source of truth for the oracle learner,
// `oracle_nuisances`, and `true_rate`.

pub(crate) fn kink_mu1(x: f64, p: f64) -> f64 {
    (-2.0 / (p * p) * x + 2.0 / p).max(0.0)
}

pub(crate) fn trim(x: f64, eta: f64) -> f64 {
    x.clamp(eta, 1.0 - eta)
}

pub(crate) fn setup_a_propensity(row: &[f64]) -> f64 {
    trim((std::f64::consts::PI * row[0] * row[1]).sin(), 0.1)
}

pub(crate) fn setup_a_baseline(row: &[f64]) -> f64 {
    (std::f64::consts::PI * row[0] * row[1]).sin()
        + 2.0 * (row[2] - 0.5) * (row[2] - 0.5)
        + row[3]
        + 0.5 * row[4]
}

pub(crate) fn setup_a_raw_effect(row: &[f64]) -> f64 {
    (row[0] + row[1]) / 2.0
}

/// Beta(2,4) density.
fn beta24_pdf(x: f64) -> f64 {
    20.0 * x * (1.0 - x) * (1.0 - x) * (1.0 - x)
}

pub(crate) fn survival_propensity(row: &[f64]) -> f64 {
    (1.0 + beta24_pdf(row[1])) / 4.0
}

/// Failure-time hazard scale `lambda = exp(x1 + (-0.4 + x2) w)`; survival is
/// `S_T(t) = exp(-lambda sqrt(t))`.
pub(crate) fn survival_lambda(row: &[f64], w: u8) -> f64 {
    (row[0] + (-0.4 + row[1]) * f64::from(w)).exp()
}

fn survival_st(lambda: f64, t: f64) -> f64 {
    (-lambda * t.sqrt()).exp()
}

/// `int_0^t S_T(s) ds = 2 (1 - e^{-lambda sqrt(t)} (1 + lambda sqrt(t))) / lambda^2`.
fn survival_int_st(lambda: f64, t: f64) -> f64 {
    let v = lambda * t.sqrt();
    2.0 * (1.0 - (-v).exp() * (1.0 + v)) / (lambda * lambda)
}

/// Endpoint mean `m(x, w)` for the survival scenario.
pub(crate) fn survival_m(row: &[f64], w: u8, endpoint: Endpoint) -> f64 {
    let lambda = survival_lambda(row, w);
    match endpoint {
        Endpoint::AbsoluteRisk(t0) => 1.0 - survival_st(lambda, t0),
        Endpoint::Rmst(t0) => survival_int_st(lambda, t0),
    }
}

/// `q(s, x, w) = E[Y | T >= s]` for the survival scenario.
pub(crate) fn survival_q(row: &[f64], w: u8, endpoint: Endpoint, s: f64) -> f64 {
    let lambda = survival_lambda(row, w);
    let t0 = endpoint.horizon();
    match endpoint {
        Endpoint::AbsoluteRisk(_) => {
            if s > t0 {
                0.0
            } else {
                1.0 - survival_st(lambda, t0) / survival_st(lambda, s)
            }
        }
        Endpoint::Rmst(_) => {
            if s > t0 {
                t0
            } else {
                s + (survival_int_st(lambda, t0) - survival_int_st(lambda, s))
                    / survival_st(lambda, s)
            }
        }
    }
}

/// Log-normal censoring survival `S_C(s, x, w) = Phi(x1 - x3 w - log s)`.
pub(crate) fn survival_sc(row: &[f64], w: u8, s: f64) -> f64 {
    if s <= 0.0 {
        1.0
    } else {
        inference::std_normal_cdf(row[0] - row[2] * f64::from(w) - s.ln())
    }
}

impl ScenarioKind {
    /// Sample standard deviation of the raw effect over the rows of `x`
    /// (the effect-scaling denominator for `setup_a`; 1 elsewhere).
    pub(crate) fn raw_effect_sd(&self, x: &FeatureMatrix) -> f64 {
        match self {
            ScenarioKind::SetupA { .. } => {
                let n = x.rows();
                let taus: Vec<f64> = (0..n).map(|i| setup_a_raw_effect(x.row(i))).collect();
                let mean = taus.iter().sum::<f64>() / n as f64;
                let ss: f64 = taus.iter().map(|t| (t - mean) * (t - mean)).sum();
                (ss / (n as f64 - 1.0)).sqrt()
            }
            _ => 1.0,
        }
    }

    /// Effect for one unit. The survival effect is the restricted-mean
    /// contrast at the scenario's horizon.
    pub(crate) fn cate(&self, row: &[f64], tau_sd: f64) -> f64 {
        match self {
            ScenarioKind::Kink { p, .. } => kink_mu1(row[0], *p),
            ScenarioKind::SetupA { sigma_tau, .. } => {
                if *sigma_tau == 0.0 {
                    0.0
                } else {
                    setup_a_raw_effect(row) / tau_sd * sigma_tau
                }
            }
            ScenarioKind::SurvivalSecond { t0 } => {
                survival_m(row, 1, Endpoint::Rmst(*t0)) - survival_m(row, 0, Endpoint::Rmst(*t0))
            }
        }
    }

    /// Closed-form prediction for the oracle learner.
    pub(crate) fn oracle_predict(
        &self,
        target: Target,
        x_new: &FeatureMatrix,
        tau_sd: f64,
    ) -> Result<Vec<f64>> {
        let expected_cols = match self {
            ScenarioKind::Kink { .. } => 1,
            ScenarioKind::SetupA { d, .. } => *d,
            ScenarioKind::SurvivalSecond { .. } => 5,
        };
        if x_new.cols() != expected_cols {
            return Err(Error::schema(format!(
                "scenario mismatch: expected {expected_cols} feature columns, got {}",
                x_new.cols()
            )));
        }
        let rows = 0..x_new.rows();
        let out: Vec<f64> = match (self, target) {
            (_, Target::Censoring) => {
                return Err(Error::schema(
                    "censoring nuisances are provided as tables, not point predictions",
                ))
            }
            (ScenarioKind::Kink { .. }, Target::M0) => rows.map(|_| 0.0).collect(),
            (ScenarioKind::Kink { p, .. }, Target::M1) => {
                rows.map(|i| kink_mu1(x_new.row(i)[0], *p)).collect()
            }
            (ScenarioKind::Kink { .. }, Target::Propensity) => rows.map(|_| 0.5).collect(),
            (ScenarioKind::SetupA { .. }, Target::Propensity) => {
                rows.map(|i| setup_a_propensity(x_new.row(i))).collect()
            }
            (ScenarioKind::SetupA { .. }, Target::M0) => rows
                .map(|i| {
                    let r = x_new.row(i);
                    setup_a_baseline(r) - setup_a_propensity(r) * self.cate(r, tau_sd)
                })
                .collect(),
            (ScenarioKind::SetupA { .. }, Target::M1) => rows
                .map(|i| {
                    let r = x_new.row(i);
                    setup_a_baseline(r) + (1.0 - setup_a_propensity(r)) * self.cate(r, tau_sd)
                })
                .collect(),
            (ScenarioKind::SurvivalSecond { .. }, Target::Propensity) => {
                rows.map(|i| survival_propensity(x_new.row(i))).collect()
            }
            (ScenarioKind::SurvivalSecond { t0 }, Target::M0) => rows
                .map(|i| survival_m(x_new.row(i), 0, Endpoint::Rmst(*t0)))
                .collect(),
            (ScenarioKind::SurvivalSecond { t0 }, Target::M1) => rows
                .map(|i| survival_m(x_new.row(i), 1, Endpoint::Rmst(*t0)))
                .collect(),
        };
        Ok(out)
    }
}

/// Generate one dataset plus its hidden truth, bitwise reproducibly.
pub fn generate(scenario: &Scenario) -> Result<(EvalDataset, HiddenTruth)> {
    scenario.kind.validate()?;
    if scenario.n < 2 {
        return Err(Error::schema("scenario sample size must be at least 2"));
    }
    let n = scenario.n;
    let mut rng = rng_at(scenario.seed, &[]);

    match &scenario.kind {
        ScenarioKind::Kink { p, noise_is_sd } => {
            let sd = if *noise_is_sd {
                KINK_NOISE_VARIANCE
            } else {
                KINK_NOISE_VARIANCE.sqrt()
            };
            let mut x = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            let mut y = Vec::with_capacity(n);
            let mut tau = Vec::with_capacity(n);
            for _ in 0..n {
                let xi: f64 = rng.random();
                let wi = u8::from(rng.random::<f64>() < 0.5);
                let eps: f64 = rng.sample::<f64, _>(StandardNormal) * sd;
                let mu1 = kink_mu1(xi, *p);
                y.push(if wi == 1 { mu1 } else { 0.0 } + eps);
                tau.push(mu1);
                x.push(xi);
                w.push(wi);
            }
            let features = FeatureMatrix::from_columns(&[x.clone()])?;
            let mut priorities = BTreeMap::new();
            priorities.insert("rule".to_string(), x.iter().map(|v| 1.0 - v).collect());
            let dataset = EvalDataset::from_parts(
                w,
                y,
                Some(vec![0.5; n]),
                None,
                None,
                Some(features),
                priorities,
                None,
            )?;
            Ok((
                dataset,
                HiddenTruth {
                    tau,
                    propensity: vec![0.5; n],
                },
            ))
        }
        ScenarioKind::SetupA { d, sigma_eps, .. } => {
            let mut rows = Vec::with_capacity(n * d);
            let mut e = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            let mut eps = Vec::with_capacity(n);
            for _ in 0..n {
                let start = rows.len();
                for _ in 0..*d {
                    rows.push(rng.random::<f64>());
                }
                let ei = setup_a_propensity(&rows[start..start + *d]);
                e.push(ei);
                w.push(u8::from(rng.random::<f64>() < ei));
                eps.push(rng.sample::<f64, _>(StandardNormal));
            }
            let features = FeatureMatrix::new(rows, n, *d)?;
            let tau_sd = scenario.kind.raw_effect_sd(&features);
            let tau: Vec<f64> = (0..n)
                .map(|i| scenario.kind.cate(features.row(i), tau_sd))
                .collect();
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    setup_a_baseline(features.row(i))
                        + (f64::from(w[i]) - e[i]) * tau[i]
                        + sigma_eps * eps[i]
                })
                .collect();
            let mut priorities = BTreeMap::new();
            priorities.insert("oracle".to_string(), tau.clone());
            let dataset = EvalDataset::from_parts(
                w,
                y,
                Some(e.clone()),
                None,
                None,
                Some(features),
                priorities,
                None,
            )?;
            Ok((dataset, HiddenTruth { tau, propensity: e }))
        }
        ScenarioKind::SurvivalSecond { t0: _ } => {
            let d = 5usize;
            let mut rows = Vec::with_capacity(n * d);
            let mut e = Vec::with_capacity(n);
            let mut w = Vec::with_capacity(n);
            let mut times = Vec::with_capacity(n);
            let mut observed = Vec::with_capacity(n);
            for _ in 0..n {
                let start = rows.len();
                for _ in 0..d {
                    rows.push(rng.random::<f64>());
                }
                let row = &rows[start..start + d];
                let ei = survival_propensity(row);
                let wi = u8::from(rng.random::<f64>() < ei);
                let u0: f64 = rng.random::<f64>().max(1e-300);
                let z: f64 = rng.sample(StandardNormal);
                let lambda = survival_lambda(row, wi);
                let t = (-u0.ln() / lambda) * (-u0.ln() / lambda);
                let c = (row[0] - row[2] * f64::from(wi) + z).exp();
                times.push(t.min(c));
                observed.push(u8::from(t <= c));
                e.push(ei);
                w.push(wi);
            }
            let features = FeatureMatrix::new(rows, n, d)?;
            let tau: Vec<f64> = (0..n)
                .map(|i| scenario.kind.cate(features.row(i), 1.0))
                .collect();
            let y = times.clone();
            let mut priorities = BTreeMap::new();
            priorities.insert("oracle".to_string(), tau.clone());
            let dataset = EvalDataset::from_parts(
                w,
                y,
                Some(e.clone()),
                Some(times),
                Some(observed),
                Some(features),
                priorities,
                None,
            )?;
            Ok((dataset, HiddenTruth { tau, propensity: e }))
        }
    }
}

/// Monte Carlo estimate of the true RATE of the scenario's bundled rule.
#[derive(Debug, Clone, Copy)]
pub struct TrueRate {
    pub value: f64,
    pub mc_se: f64,
}

/// Estimate the population RATE `E[w(1 - F_S(S(X))) tau(X)]` for the
/// scenario's bundled rule by evaluating the population weights on exact
/// quantiles of a large fresh draw (`draws >= 1e6` recommended).
pub fn true_rate(scenario: &Scenario, spec: &WeightSpec, draws: usize, seed: u64) -> Result<TrueRate> {
    scenario.kind.validate()?;
    spec.validate()?;
    if draws < 2 {
        return Err(Error::schema("true_rate needs at least 2 draws"));
    }
    let mut rng = rng_at(seed, &[0xfeed]);
    let values: Vec<f64> = match &scenario.kind {
        ScenarioKind::Kink { p, .. } => {
            // S(X) = 1 - X is strictly decreasing, so the rule quantile of a
            // unit is its own X value.
            let mut vals = Vec::with_capacity(draws);
            for _ in 0..draws {
                let x: f64 = rng.random::<f64>().clamp(1e-12, 1.0 - 1e-12);
                let w = weights::population_weight(spec, x)?;
                vals.push(w * kink_mu1(x, *p));
            }
            vals
        }
        _ => {
            // Rank-based exact quantiles among the draws; the bundled rule is
            // monotone in the effect, so ranking by tau ranks by the rule.
            let d = match &scenario.kind {
                ScenarioKind::SetupA { d, .. } => *d,
                _ => 5,
            };
            let mut rows = Vec::with_capacity(draws * d);
            for _ in 0..draws * d {
                rows.push(rng.random::<f64>());
            }
            let x = FeatureMatrix::new(rows, draws, d)?;
            let tau_sd = scenario.kind.raw_effect_sd(&x);
            let tau: Vec<f64> = (0..draws)
                .map(|i| scenario.kind.cate(x.row(i), tau_sd))
                .collect();
            let mut order: Vec<usize> = (0..draws).collect();
            order.sort_by(|&a, &b| tau[b].partial_cmp(&tau[a]).unwrap());
            let mut vals = vec![0.0f64; draws];
            for (rank, &i) in order.iter().enumerate() {
                let u = (rank as f64 + 0.5) / draws as f64;
                vals[i] = weights::population_weight(spec, u)? * tau[i];
            }
            vals
        }
    };
    let mean = values.iter().sum::<f64>() / draws as f64;
    let var =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws as f64 - 1.0);
    Ok(TrueRate {
        value: mean,
        mc_se: (var / draws as f64).sqrt(),
    })
}

/// Which priority rule a power study evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerRule {
    /// The rule bundled by `generate` (the scenario's oracle ordering).
    Bundled,
    /// Uniform random priorities, independent of everything.
    Random,
    /// Plug-in effect estimate `m1 - m0` trained on an independent split.
    PlugInTau,
    /// Baseline-risk rule: control-arm outcome model from an independent split.
    BaselineRisk,
}

impl PowerRule {
    pub fn label(&self) -> &'static str {
        match self {
            PowerRule::Bundled => "bundled",
            PowerRule::Random => "random",
            PowerRule::PlugInTau => "plugin",
            PowerRule::BaselineRisk => "baseline",
        }
    }
}

/// Configuration shared by every cell of a power study.
#[derive(Debug, Clone)]
pub struct PowerConfig {
    pub reps: usize,
    pub bootstrap_replicates: usize,
    /// Confidence level; the rejection threshold is `1 - level`.
    pub level: f64,
    pub seed: u64,
    pub rule: PowerRule,
    /// Learner used for cross-fit nuisances and plug-in rules.
    pub learner: LearnerKind,
    pub folds: usize,
    pub score_options: ScoreOptions,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            reps: 1000,
            bootstrap_replicates: 200,
            level: 0.95,
            seed: 0,
            rule: PowerRule::Bundled,
            learner: LearnerKind::Knn { k_neighbors: 25 },
            folds: 5,
            score_options: ScoreOptions::default(),
        }
    }
}

/// One row of a power report.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub scenario: String,
    pub param: String,
    pub weight: String,
    pub reps: usize,
    pub power: f64,
    pub mean_estimate: f64,
    pub mean_se: f64,
}

/// Rejection rates per (scenario, weighting) cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PowerReport {
    pub rows: Vec<PowerRow>,
}

/// Run the Monte Carlo power study over every `(scenario, weighting)` cell.
///
/// Per replicate: generate data, build the rule's priorities, construct
/// scores (known-probability IPW for `kink`, cross-fit AIPW for `setup_a`,
/// oracle-nuisance survival scores for `survival_second`), run the
/// half-sample bootstrap, and reject when `p < 1 - level`.
pub fn power_study(cells: &[(Scenario, WeightSpec)], cfg: &PowerConfig) -> Result<PowerReport> {
    if cfg.reps == 0 {
        return Err(Error::schema("power study needs at least one replicate"));
    }
    let alpha = 1.0 - cfg.level;
    let mut rows = Vec::with_capacity(cells.len());
    for (cell_idx, (scenario, spec)) in cells.iter().enumerate() {
        scenario.kind.validate()?;
        spec.validate()?;
        let outcomes: Vec<(bool, f64, f64)> = (0..cfg.reps)
            .into_par_iter()
            .map(|rep| power_replicate(scenario, spec, cfg, cell_idx as u64, rep as u64, alpha))
            .collect::<Result<Vec<_>>>()?;
        let reps = outcomes.len();
        let rejected = outcomes.iter().filter(|o| o.0).count();
        let mean_estimate = outcomes.iter().map(|o| o.1).sum::<f64>() / reps as f64;
        let mean_se = outcomes.iter().map(|o| o.2).sum::<f64>() / reps as f64;
        rows.push(PowerRow {
            scenario: scenario.kind.label().to_string(),
            param: scenario.kind.param_string(),
            weight: spec.to_string(),
            reps,
            power: rejected as f64 / reps as f64,
            mean_estimate,
            mean_se,
        });
    }
    Ok(PowerReport { rows })
}

fn power_replicate(
    scenario: &Scenario,
    spec: &WeightSpec,
    cfg: &PowerConfig,
    cell: u64,
    rep: u64,
    alpha: f64,
) -> Result<(bool, f64, f64)> {
    let data_seed = mix_seed(cfg.seed, &[cell, rep, 0]);
    let generated = generate(&Scenario {
        kind: scenario.kind.clone(),
        n: scenario.n,
        seed: data_seed,
    })?;
    let (dataset, _truth) = generated;

    let priorities: Vec<f64> = match cfg.rule {
        PowerRule::Bundled => dataset.priority(scenario.kind.bundled_rule())?.to_vec(),
        PowerRule::Random => {
            let mut rng = rng_at(cfg.seed, &[cell, rep, 1]);
            (0..dataset.n()).map(|_| rng.random::<f64>()).collect()
        }
        PowerRule::PlugInTau | PowerRule::BaselineRisk => {
            let split = generate(&Scenario {
                kind: scenario.kind.clone(),
                n: scenario.n,
                seed: mix_seed(cfg.seed, &[cell, rep, 2]),
            })?;
            let (train, _) = split;
            let x_train = train.features.as_ref().expect("scenarios bundle features");
            let x_eval = dataset.features.as_ref().expect("scenarios bundle features");
            let control: Vec<usize> =
                (0..train.n()).filter(|&i| train.treatment[i] == 0).collect();
            let treated: Vec<usize> =
                (0..train.n()).filter(|&i| train.treatment[i] == 1).collect();
            if control.is_empty() || treated.is_empty() {
                return Err(Error::Degenerate(
                    "plug-in rule training split lacks a treatment arm".into(),
                ));
            }
            let spec_for = |target| LearnerSpec {
                kind: cfg.learner.clone(),
                target,
            };
            let m0 = nuisance::predict(
                &nuisance::fit(&spec_for(Target::M0), x_train, &train.outcome, &control)?,
                x_eval,
            )?;
            match cfg.rule {
                PowerRule::BaselineRisk => m0,
                _ => {
                    let m1 = nuisance::predict(
                        &nuisance::fit(&spec_for(Target::M1), x_train, &train.outcome, &treated)?,
                        x_eval,
                    )?;
                    m0.iter().zip(&m1).map(|(a, b)| b - a).collect()
                }
            }
        }
    };
    let ranking = rank_values(&priorities);

    let score_vec = match &scenario.kind {
        ScenarioKind::Kink { .. } => scores::ipw_scores(&dataset, 0.5)?,
        ScenarioKind::SetupA { .. } => {
            let (nuis, _) = scores::cross_fit(
                &dataset,
                cfg.folds,
                &cfg.learner,
                mix_seed(cfg.seed, &[cell, rep, 3]),
                &cfg.score_options,
            )?;
            scores::aipw_obs_scores(&dataset, &nuis, &cfg.score_options)?
        }
        ScenarioKind::SurvivalSecond { t0 } => {
            let endpoint = Endpoint::Rmst(*t0);
            let nuis = nuisance::oracle_nuisances(
                &Scenario {
                    kind: scenario.kind.clone(),
                    n: scenario.n,
                    seed: data_seed,
                },
                &dataset,
                Some(endpoint),
                None,
            )?;
            scores::aipw_survival_scores(&dataset, endpoint, &nuis, &cfg.score_options)?
        }
    };

    let estimate = inference::half_sample_bootstrap(
        &score_vec,
        &ranking,
        spec,
        &BootstrapConfig {
            replicates: cfg.bootstrap_replicates,
            seed: mix_seed(cfg.seed, &[cell, rep, 4]),
            level: cfg.level,
        },
    )?;
    Ok((
        estimate.p_value < alpha,
        estimate.point,
        estimate.std_error,
    ))
}
