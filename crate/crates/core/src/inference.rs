//! Half-sample bootstrap inference.
//!
//! Each replicate draws `floor(n/2)` units without replacement, re-ranks the
//! subsample (ranks and tie groups are re-derived inside it), and recomputes
//! the statistic. The standard deviation of the replicates estimates the
//! sampling standard error directly; p-values are `2 Phi(-|theta| / sigma*)`
//! and intervals are `theta +- z sigma*`.
//!
//! Replicate streams are keyed by `(seed, replicate index)` and aggregated in
//! replicate order, so results are byte-identical regardless of thread
//! count. Subsamples are drawn over canonical rank positions — within a tie
//! group units are ordered by score value — which makes every output
//! invariant to permutations of the input rows.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimator::{self, RankedScores, TocCurve};
use crate::model::{PriorityRanking, RateEstimate, ScoreVector};
use crate::rng::rng_at;
use crate::weights::{self, WeightSpec};

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub(crate) fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Bootstrap replicate count, seed, and confidence level.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    /// Confidence level `1 - alpha`, in (0,1).
    pub level: f64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 200,
            seed: 0,
            level: 0.95,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::schema(format!(
                "bootstrap needs at least 2 replicates, got {}",
                self.replicates
            )));
        }
        if !(self.level.is_finite() && self.level > 0.0 && self.level < 1.0) {
            return Err(Error::schema(format!(
                "confidence level must lie in (0,1), got {}",
                self.level
            )));
        }
        Ok(())
    }
}

/// Canonical ranked view used by the bootstrap: ranking order, but inside
/// each tie group the scores are sorted ascending. Tie averaging makes the
/// estimate independent of within-group order, so this only pins a byte-
/// stable representative.
fn canonical_ranked(scores: &ScoreVector, ranking: &PriorityRanking) -> Result<RankedScores> {
    let mut ranked = RankedScores::from_ranking(scores, ranking)?;
    for &(s, e) in &ranked.runs.clone() {
        if e - s > 1 {
            ranked.gamma[s..e].sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
    }
    Ok(ranked)
}

/// Run index per canonical rank position.
fn run_ids(runs: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut ids = vec![0usize; n];
    for (ridx, &(s, e)) in runs.iter().enumerate() {
        for id in ids.iter_mut().take(e).skip(s) {
            *id = ridx;
        }
    }
    ids
}

/// Subsample (sorted positions) of a canonical sequence, with runs rederived.
fn subsample(gamma: &[f64], ids: &[usize], positions: &[usize]) -> RankedScores {
    let m = positions.len();
    let mut sub_gamma = Vec::with_capacity(m);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for (j, &p) in positions.iter().enumerate() {
        sub_gamma.push(gamma[p]);
        if j + 1 == m || ids[positions[j + 1]] != ids[p] {
            runs.push((start, j + 1));
            start = j + 1;
        }
    }
    RankedScores {
        gamma: sub_gamma,
        runs,
    }
}

fn sample_positions(rng: &mut rand_chacha::ChaCha12Rng, n: usize, m: usize) -> Vec<usize> {
    let mut positions = rand::seq::index::sample(rng, n, m).into_vec();
    positions.sort_unstable();
    positions
}

fn summarize(
    spec: &WeightSpec,
    point: f64,
    replicates: &[f64],
    cfg: &BootstrapConfig,
    n: usize,
) -> RateEstimate {
    let b = replicates.len() as f64;
    let mean = replicates.iter().sum::<f64>() / b;
    let var = replicates.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (b - 1.0);
    let sigma = var.sqrt();
    let degenerate = sigma == 0.0;
    let p_value = if degenerate {
        1.0
    } else {
        2.0 * std_normal_cdf(-point.abs() / sigma)
    };
    let z = std_normal_quantile(0.5 + cfg.level / 2.0);
    let half = if degenerate { 0.0 } else { z * sigma };
    RateEstimate {
        weight: spec.to_string(),
        point,
        std_error: sigma,
        ci_low: point - half,
        ci_high: point + half,
        p_value,
        replicates: replicates.len(),
        seed: cfg.seed,
        n,
        degenerate,
    }
}

/// Half-sample bootstrap for one prioritization rule.
pub fn half_sample_bootstrap(
    scores: &ScoreVector,
    ranking: &PriorityRanking,
    spec: &WeightSpec,
    cfg: &BootstrapConfig,
) -> Result<RateEstimate> {
    cfg.validate()?;
    spec.validate()?;
    let n = scores.n();
    if n < 4 {
        return Err(Error::schema(format!("bootstrap needs at least 4 units, got {n}")));
    }
    if let crate::weights::WeightKind::CustomAlpha(grid) = &spec.kind {
        if grid.len() != n {
            return Err(Error::schema(format!(
                "custom alpha grid has {} entries but n = {n}",
                grid.len()
            )));
        }
    }
    let ranked = canonical_ranked(scores, ranking)?;
    let ids = run_ids(&ranked.runs, n);
    let m = n / 2;
    // Resampled weightings need the subsample size. Custom grids are defined
    // only at u = j/n, so restrict them onto the half-grid j/m = (2j)/n.
    let sub_spec = subsample_spec(spec, m)?;
    let ew_full = weights::empirical_weights(spec, n)?;
    let ew_half = weights::empirical_weights(&sub_spec, m)?;

    let point = estimator::rate_with_weights(&ranked, &ew_full);
    let reps: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_at(cfg.seed, &[r as u64]);
            let positions = sample_positions(&mut rng, n, m);
            let sub = subsample(&ranked.gamma, &ids, &positions);
            estimator::rate_with_weights(&sub, &ew_half)
        })
        .collect();
    Ok(summarize(spec, point, &reps, cfg, n))
}

/// Custom alpha grids are restricted onto the subsample's `j/m` grid; the
/// built-in weightings carry over unchanged.
fn subsample_spec(spec: &WeightSpec, m: usize) -> Result<WeightSpec> {
    match &spec.kind {
        crate::weights::WeightKind::CustomAlpha(grid) => {
            let n = grid.len();
            let alpha: Vec<f64> = (1..=m).map(|j| grid[j * n / m - 1]).collect();
            Ok(WeightSpec {
                kind: crate::weights::WeightKind::CustomAlpha(alpha),
                rescale_to_unit_variance: spec.rescale_to_unit_variance,
            })
        }
        _ => Ok(spec.clone()),
    }
}

/// Paired comparison of two rules: the same half-sample subsets are applied
/// to both rankings and the statistic is the per-replicate difference, so
/// the correlation between the rules is captured.
pub fn paired_bootstrap_difference(
    scores: &ScoreVector,
    ranking_a: &PriorityRanking,
    ranking_b: &PriorityRanking,
    spec: &WeightSpec,
    cfg: &BootstrapConfig,
) -> Result<RateEstimate> {
    cfg.validate()?;
    spec.validate()?;
    let n = scores.n();
    if ranking_a.n() != ranking_b.n() {
        return Err(Error::schema(format!(
            "ranking size mismatch: {} vs {}",
            ranking_a.n(),
            ranking_b.n()
        )));
    }
    if n < 4 {
        return Err(Error::schema(format!("bootstrap needs at least 4 units, got {n}")));
    }

    // Canonical unit order: by rule-a run, then rule-b run, then score.
    // Run indices are value classes of the priorities, so this order is
    // invariant to input row permutations.
    let runa = ranking_a.run_index_by_rank();
    let runb = ranking_b.run_index_by_rank();
    let mut runa_of_unit = vec![0usize; n];
    let mut runb_of_unit = vec![0usize; n];
    for (rank, &unit) in ranking_a.order.iter().enumerate() {
        runa_of_unit[unit] = runa[rank];
    }
    for (rank, &unit) in ranking_b.order.iter().enumerate() {
        runb_of_unit[unit] = runb[rank];
    }
    let mut units: Vec<usize> = (0..n).collect();
    units.sort_by(|&u, &v| {
        runa_of_unit[u]
            .cmp(&runa_of_unit[v])
            .then(runb_of_unit[u].cmp(&runb_of_unit[v]))
            .then(scores.values[u].partial_cmp(&scores.values[v]).unwrap())
    });
    let gamma: Vec<f64> = units.iter().map(|&u| scores.values[u]).collect();
    let ids_a: Vec<usize> = units.iter().map(|&u| runa_of_unit[u]).collect();
    let ids_b: Vec<usize> = units.iter().map(|&u| runb_of_unit[u]).collect();

    let rate_both = |positions: &[usize], ew: &weights::EmpiricalWeights| -> f64 {
        let sub_a = subsample(&gamma, &ids_a, positions);
        let theta_a = estimator::rate_with_weights(&sub_a, ew);
        let mut by_b: Vec<usize> = positions.to_vec();
        by_b.sort_by(|&p, &q| ids_b[p].cmp(&ids_b[q]).then(p.cmp(&q)));
        let sub_b = subsample(&gamma, &ids_b, &by_b);
        let theta_b = estimator::rate_with_weights(&sub_b, ew);
        theta_a - theta_b
    };

    let m = n / 2;
    let sub_spec = subsample_spec(spec, m)?;
    let ew_full = weights::empirical_weights(spec, n)?;
    let ew_half = weights::empirical_weights(&sub_spec, m)?;
    let all_positions: Vec<usize> = (0..n).collect();
    let point = rate_both(&all_positions, &ew_full);
    let reps: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_at(cfg.seed, &[r as u64]);
            let positions = sample_positions(&mut rng, n, m);
            rate_both(&positions, &ew_half)
        })
        .collect();
    let mut est = summarize(spec, point, &reps, cfg, n);
    est.weight = format!("diff:{spec}");
    Ok(est)
}

/// Grid for TOC bands: u in {0.05, 0.10, ..., 1.00}.
fn band_grid() -> Vec<f64> {
    (1..=20).map(|k| k as f64 * 0.05).collect()
}

fn toc_at_grid(ranked: &RankedScores, grid: &[f64]) -> Vec<f64> {
    let n = ranked.n();
    let all = estimator::toc_values(ranked);
    grid.iter()
        .map(|&u| {
            let m = ((u * n as f64).floor() as usize).clamp(1, n);
            all[m - 1]
        })
        .collect()
}

/// TOC curve with pointwise bootstrap confidence bands on a fixed coarse
/// grid. The band at `u = 1` is exactly `{0}`.
pub fn toc_band(
    scores: &ScoreVector,
    ranking: &PriorityRanking,
    cfg: &BootstrapConfig,
) -> Result<TocCurve> {
    cfg.validate()?;
    let n = scores.n();
    if n < 4 {
        return Err(Error::schema(format!("bootstrap needs at least 4 units, got {n}")));
    }
    let ranked = canonical_ranked(scores, ranking)?;
    let ids = run_ids(&ranked.runs, n);
    let grid = band_grid();
    let values = toc_at_grid(&ranked, &grid);
    let m = n / 2;

    let reps: Vec<Vec<f64>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_at(cfg.seed, &[r as u64]);
            let positions = sample_positions(&mut rng, n, m);
            let sub = subsample(&ranked.gamma, &ids, &positions);
            toc_at_grid(&sub, &grid)
        })
        .collect();

    let z = std_normal_quantile(0.5 + cfg.level / 2.0);
    let b = cfg.replicates as f64;
    let bands: Vec<(f64, f64)> = (0..grid.len())
        .map(|gi| {
            let mean = reps.iter().map(|rep| rep[gi]).sum::<f64>() / b;
            let var = reps
                .iter()
                .map(|rep| (rep[gi] - mean) * (rep[gi] - mean))
                .sum::<f64>()
                / (b - 1.0);
            let sigma = var.sqrt();
            if sigma == 0.0 {
                (values[gi], values[gi])
            } else {
                (values[gi] - z * sigma, values[gi] + z * sigma)
            }
        })
        .collect();

    let gamma_mean = scores.values.iter().sum::<f64>() / n as f64;
    Ok(TocCurve {
        grid,
        values,
        gamma_mean,
        bands: Some(bands),
    })
}
