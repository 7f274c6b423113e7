//! Doubly robust score construction.
//!
//! Each unit gets a score whose conditional mean approximates its treatment
//! effect, so rank-weighted averages of scores estimate rank-weighted
//! averages of effects. Four designs are supported:
//!
//! * [`ipw_scores`] — randomized trial with known assignment probability;
//! * [`aipw_rct_scores`] — randomized trial with a baseline regression
//!   adjustment to cut variance;
//! * [`aipw_obs_scores`] — observational study under unconfoundedness, with
//!   estimated propensities;
//! * [`aipw_survival_scores`] — right-censored time-to-event outcomes at a
//!   horizon, with an inverse-probability-of-censoring correction.
//!
//! Nuisance estimates are produced out-of-fold by [`cross_fit`], imported
//! from CSV, or supplied by a simulation oracle.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::model::{Endpoint, EvalDataset, ScoreFamily, ScoreVector};
use crate::nuisance::{self, LearnerKind, LearnerSpec, Target};

/// Guardrails for overlap and censoring positivity.
#[derive(Debug, Clone, Copy)]
pub struct ScoreOptions {
    /// Propensities are clipped into `[e_min, 1 - e_min]`.
    pub e_min: f64,
    /// Minimum tolerated censoring survival probability at the (truncated)
    /// observation time; anything below refuses loudly instead of truncating.
    pub s_min: f64,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            e_min: 0.01,
            s_min: 0.05,
        }
    }
}

/// Out-of-fold regression adjustments `m(x, 0)` and `m(x, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MHat {
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
}

/// Per-unit, per-grid-point censoring-model tables for survival scores.
///
/// Row-major layout: entry for unit `i` at grid index `g` is `i * grid.len() + g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalTables {
    pub grid: Vec<f64>,
    /// Conditional remaining-outcome expectations `q(s, x_i, w_i)`.
    pub q: Vec<f64>,
    /// Censoring survival `S_C(s, x_i, w_i)`, in (0, 1], non-increasing in `s`.
    pub sc: Vec<f64>,
    /// Censoring cumulative-hazard mass assigned to each grid time.
    pub dlambda: Vec<f64>,
    pub n: usize,
}

impl SurvivalTables {
    pub fn new(grid: Vec<f64>, q: Vec<f64>, sc: Vec<f64>, dlambda: Vec<f64>, n: usize) -> Result<Self> {
        let g = grid.len();
        if g == 0 {
            return Err(Error::schema("empty survival-nuisance grid"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::schema("survival-nuisance grid times must be strictly increasing"));
        }
        for (name, t) in [("q", &q), ("sc", &sc), ("dlambda", &dlambda)] {
            if t.len() != n * g {
                return Err(Error::schema(format!(
                    "survival table `{name}` has {} entries, expected {}",
                    t.len(),
                    n * g
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::schema(format!("non-finite value in survival table `{name}`")));
            }
        }
        for i in 0..n {
            let row = &sc[i * g..(i + 1) * g];
            if row.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::schema_at("sc", i + 1, "censoring survival outside (0,1]"));
            }
            if row.windows(2).any(|w| w[1] > w[0] + 1e-12) {
                return Err(Error::schema_at("sc", i + 1, "censoring survival must be non-increasing"));
            }
        }
        if dlambda.iter().any(|&v| v < 0.0) {
            return Err(Error::schema("negative censoring-hazard increment"));
        }
        Ok(SurvivalTables {
            grid,
            q,
            sc,
            dlambda,
            n,
        })
    }

    fn at(&self, table: &[f64], unit: usize, g: usize) -> f64 {
        table[unit * self.grid.len() + g]
    }

    /// Index of the largest grid time `<= u`, if any.
    fn floor_index(&self, u: f64) -> Option<usize> {
        let k = self.grid.partition_point(|&s| s <= u);
        k.checked_sub(1)
    }
}

/// Nuisance evaluations feeding the AIPW score formulas.
#[derive(Debug, Clone, Default)]
pub struct NuisanceEvaluations {
    pub m_hat: Option<MHat>,
    pub e_hat: Option<Vec<f64>>,
    pub survival: Option<SurvivalTables>,
    /// Number of propensity values that hit the clipping bounds.
    pub clip_events: usize,
}

impl NuisanceEvaluations {
    pub fn from_mhat(m0: Vec<f64>, m1: Vec<f64>) -> Self {
        NuisanceEvaluations {
            m_hat: Some(MHat { m0, m1 }),
            ..Default::default()
        }
    }

    pub fn with_ehat(mut self, e_hat: Vec<f64>) -> Self {
        self.e_hat = Some(e_hat);
        self
    }

    pub fn with_survival(mut self, tables: SurvivalTables) -> Self {
        self.survival = Some(tables);
        self
    }

    /// Clip propensities into `[e_min, 1 - e_min]`, recording how many values
    /// moved. Values outside (0,1) indicate degenerate overlap and error.
    pub fn clip_propensities(&mut self, e_min: f64) -> Result<usize> {
        let mut clipped = 0usize;
        if let Some(e) = &mut self.e_hat {
            for (i, v) in e.iter_mut().enumerate() {
                if !(v.is_finite() && *v > 0.0 && *v < 1.0) {
                    return Err(Error::Positivity(format!(
                        "propensity estimate at row {} is {} — degenerate overlap",
                        i + 1,
                        v
                    )));
                }
                let c = v.clamp(e_min, 1.0 - e_min);
                if c != *v {
                    clipped += 1;
                    *v = c;
                }
            }
        }
        self.clip_events += clipped;
        Ok(clipped)
    }
}

/// Cross-fitting fold layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    /// Fold id in `0..k` per unit. Folds differ in size by at most one.
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

fn check_pi(pi: f64) -> Result<()> {
    if !(pi.is_finite() && pi > 0.0 && pi < 1.0) {
        return Err(Error::schema(format!(
            "treatment probability must lie in (0,1), got {pi}"
        )));
    }
    Ok(())
}

/// The reweighted residual `(w - e) / (e (1 - e)) * r`, written branch-wise
/// with a single division so that zero regression adjustments degenerate to
/// plain inverse-propensity weighting bit-exactly.
#[inline]
fn reweighted_residual(w: u8, e: f64, r: f64) -> f64 {
    if w == 1 {
        r / e
    } else {
        -r / (1.0 - e)
    }
}

/// Inverse-propensity-weighted scores for a randomized trial with known
/// assignment probability `pi`.
pub fn ipw_scores(d: &EvalDataset, pi: f64) -> Result<ScoreVector> {
    check_pi(pi)?;
    let values = d
        .treatment
        .iter()
        .zip(&d.outcome)
        .map(|(&w, &y)| {
            if w == 1 {
                y / pi
            } else {
                -y / (1.0 - pi)
            }
        })
        .collect();
    ScoreVector::new(values, ScoreFamily::Ipw)
}

/// Augmented IPW scores for a randomized trial: regression adjustment plus a
/// reweighted residual.
pub fn aipw_rct_scores(
    d: &EvalDataset,
    pi: f64,
    nuis: &NuisanceEvaluations,
) -> Result<ScoreVector> {
    check_pi(pi)?;
    let m = nuis
        .m_hat
        .as_ref()
        .ok_or_else(|| Error::schema("aipw-rct requires outcome-model evaluations (m0, m1)"))?;
    check_mhat(m, d.n())?;
    let values = (0..d.n())
        .map(|i| {
            let w = d.treatment[i];
            let m_w = if w == 1 { m.m1[i] } else { m.m0[i] };
            m.m1[i] - m.m0[i] + reweighted_residual(w, pi, d.outcome[i] - m_w)
        })
        .collect();
    ScoreVector::new(values, ScoreFamily::AipwRct)
}

/// Doubly robust AIPW scores for an observational study under
/// unconfoundedness. Propensities are clipped into `[e_min, 1 - e_min]`.
pub fn aipw_obs_scores(
    d: &EvalDataset,
    nuis: &NuisanceEvaluations,
    opts: &ScoreOptions,
) -> Result<ScoreVector> {
    let m = nuis
        .m_hat
        .as_ref()
        .ok_or_else(|| Error::schema("aipw-obs requires outcome-model evaluations (m0, m1)"))?;
    check_mhat(m, d.n())?;
    let e_hat = checked_ehat(nuis, d.n())?;
    let values = (0..d.n())
        .map(|i| {
            let w = d.treatment[i];
            let e = e_hat[i].clamp(opts.e_min, 1.0 - opts.e_min);
            let m_w = if w == 1 { m.m1[i] } else { m.m0[i] };
            Ok(m.m1[i] - m.m0[i] + reweighted_residual(w, e, d.outcome[i] - m_w))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sv = ScoreVector::new(values, ScoreFamily::AipwObs)?;
    sv.fold_assignment = None;
    Ok(sv)
}

/// Truncated observables and endpoint outcome for one unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedOutcome {
    /// Observation time truncated at the horizon.
    pub u_tilde: f64,
    /// Effective-observation flag: the event was seen, or censoring happened
    /// after the horizon (so the truncated outcome is still known).
    pub delta_tilde: u8,
    /// Endpoint outcome computed from the truncated time. Meaningful only
    /// when `delta_tilde == 1`; the score multiplies it by the flag.
    pub y: f64,
}

/// Map right-censored observables to a horizon endpoint.
pub fn transform_survival_outcome(
    d: &EvalDataset,
    endpoint: Endpoint,
) -> Result<Vec<TransformedOutcome>> {
    let t0 = endpoint.horizon();
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(Error::schema(format!("endpoint horizon must be positive, got {t0}")));
    }
    let (times, observed) = match (&d.event_time, &d.event_observed) {
        (Some(t), Some(o)) => (t, o),
        _ => {
            return Err(Error::schema(
                "survival endpoint requires `event_time` and `event_observed` columns",
            ))
        }
    };
    Ok(times
        .iter()
        .zip(observed)
        .map(|(&u, &delta)| {
            let u_tilde = u.min(t0);
            let delta_tilde = u8::from(delta == 1 || u > t0);
            let y = match endpoint {
                Endpoint::Rmst(_) => u_tilde,
                Endpoint::AbsoluteRisk(_) => f64::from(delta == 1 && u <= t0),
            };
            TransformedOutcome {
                u_tilde,
                delta_tilde,
                y,
            }
        })
        .collect())
}

/// Doubly robust scores for right-censored outcomes at a horizon.
///
/// The censoring-correction integral is approximated by a Riemann sum over
/// the supplied grid points `s <= u_tilde`, weighting the integrand at each
/// grid time by that time's cumulative-hazard mass.
pub fn aipw_survival_scores(
    d: &EvalDataset,
    endpoint: Endpoint,
    nuis: &NuisanceEvaluations,
    opts: &ScoreOptions,
) -> Result<ScoreVector> {
    let m = nuis
        .m_hat
        .as_ref()
        .ok_or_else(|| Error::schema("survival scores require outcome-model evaluations (m0, m1)"))?;
    check_mhat(m, d.n())?;
    let e_hat = checked_ehat(nuis, d.n())?;
    let tables = nuis
        .survival
        .as_ref()
        .ok_or_else(|| Error::schema("survival scores require censoring-model tables"))?;
    if tables.n != d.n() {
        return Err(Error::schema(format!(
            "survival tables cover {} units, dataset has {}",
            tables.n,
            d.n()
        )));
    }
    let transformed = transform_survival_outcome(d, endpoint)?;

    let mut values = Vec::with_capacity(d.n());
    for (i, t) in transformed.iter().enumerate() {
        let gi = tables.floor_index(t.u_tilde).ok_or_else(|| {
            Error::schema(format!(
                "survival grid does not cover observation time {} at row {}",
                t.u_tilde,
                i + 1
            ))
        })?;
        let sc_at_u = tables.at(&tables.sc, i, gi);
        if sc_at_u < opts.s_min {
            return Err(Error::Positivity(format!(
                "censoring positivity violated at row {}: S_C({}) = {sc_at_u} < {}",
                i + 1,
                t.u_tilde,
                opts.s_min
            )));
        }
        let mut correction = 0.0f64;
        for g in 0..=gi {
            let dl = tables.at(&tables.dlambda, i, g);
            if dl != 0.0 {
                correction += tables.at(&tables.q, i, g) / tables.at(&tables.sc, i, g) * dl;
            }
        }
        let w = d.treatment[i];
        let e = e_hat[i].clamp(opts.e_min, 1.0 - opts.e_min);
        let m_w = if w == 1 { m.m1[i] } else { m.m0[i] };
        let q_at_u = tables.at(&tables.q, i, gi);
        // Censoring martingale: the jump at an observed censoring enters with
        // a plus, the compensator integral with a minus; together they are
        // conditionally mean-zero.
        let lead =
            (f64::from(t.delta_tilde) * t.y + f64::from(1 - t.delta_tilde) * q_at_u) / sc_at_u;
        values.push(m.m1[i] - m.m0[i] + reweighted_residual(w, e, lead - correction - m_w));
    }
    let mut sv = ScoreVector::new(values, ScoreFamily::AipwSurvival)?;
    sv.endpoint = Some(endpoint);
    Ok(sv)
}

/// Cross-fit outcome and propensity nuisances: unit `i` is scored with models
/// fit on every fold except its own.
pub fn cross_fit(
    d: &EvalDataset,
    k: usize,
    learner: &LearnerKind,
    seed: u64,
    opts: &ScoreOptions,
) -> Result<(NuisanceEvaluations, FoldAssignment)> {
    let n = d.n();
    if k < 2 {
        return Err(Error::schema(format!("cross-fitting needs at least 2 folds, got {k}")));
    }
    if k > n / 2 {
        return Err(Error::schema(format!(
            "cross-fitting with {k} folds needs at least {} units, got {n}",
            2 * k
        )));
    }
    let x = d
        .features
        .as_ref()
        .ok_or_else(|| Error::schema("cross-fitting requires feature columns x1..xd"))?;

    let mut shuffled: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &unit) in shuffled.iter().enumerate() {
        fold_of[unit] = pos % k;
    }

    let w_as_f64: Vec<f64> = d.treatment.iter().map(|&w| f64::from(w)).collect();
    let mut m0 = vec![0.0f64; n];
    let mut m1 = vec![0.0f64; n];
    let mut e = vec![0.0f64; n];

    for fold in 0..k {
        let held_out: Vec<usize> = (0..n).filter(|&i| fold_of[i] == fold).collect();
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != fold).collect();
        let control: Vec<usize> = train.iter().copied().filter(|&i| d.treatment[i] == 0).collect();
        let treated: Vec<usize> = train.iter().copied().filter(|&i| d.treatment[i] == 1).collect();
        if control.is_empty() || treated.is_empty() {
            return Err(Error::Degenerate(format!(
                "training folds for fold {fold} lack a treatment arm"
            )));
        }
        let x_held = x.select_rows(&held_out);
        let spec = |target| LearnerSpec {
            kind: learner.clone(),
            target,
        };
        let preds_m0 = nuisance::predict(
            &nuisance::fit(&spec(Target::M0), x, &d.outcome, &control)?,
            &x_held,
        )?;
        let preds_m1 = nuisance::predict(
            &nuisance::fit(&spec(Target::M1), x, &d.outcome, &treated)?,
            &x_held,
        )?;
        let preds_e = nuisance::predict(
            &nuisance::fit(&spec(Target::Propensity), x, &w_as_f64, &train)?,
            &x_held,
        )?;
        for (pos, &unit) in held_out.iter().enumerate() {
            m0[unit] = preds_m0[pos];
            m1[unit] = preds_m1[pos];
            e[unit] = preds_e[pos];
        }
    }

    let mut nuis = NuisanceEvaluations::from_mhat(m0, m1).with_ehat(e);
    nuis.clip_propensities(opts.e_min)?;
    Ok((
        nuis,
        FoldAssignment {
            k,
            fold_of,
            seed,
        },
    ))
}

fn check_mhat(m: &MHat, n: usize) -> Result<()> {
    if m.m0.len() != n || m.m1.len() != n {
        return Err(Error::schema(format!(
            "outcome-model evaluations cover {}/{} units, dataset has {n}",
            m.m0.len(),
            m.m1.len()
        )));
    }
    if m.m0.iter().chain(&m.m1).any(|v| !v.is_finite()) {
        return Err(Error::schema("non-finite outcome-model evaluation"));
    }
    Ok(())
}

fn checked_ehat<'a>(nuis: &'a NuisanceEvaluations, n: usize) -> Result<&'a [f64]> {
    let e = nuis
        .e_hat
        .as_ref()
        .ok_or_else(|| Error::schema("missing propensity evaluations (ehat)"))?;
    if e.len() != n {
        return Err(Error::schema(format!(
            "propensity evaluations cover {} units, dataset has {n}",
            e.len()
        )));
    }
    for (i, &v) in e.iter().enumerate() {
        if !(v.is_finite() && v > 0.0 && v < 1.0) {
            return Err(Error::Positivity(format!(
                "propensity estimate at row {} is {v} — degenerate overlap",
                i + 1
            )));
        }
    }
    Ok(e)
}
