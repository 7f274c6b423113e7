//! TOC curve and RATE point estimation.
//!
//! The TOC value at a treated fraction `m/n` is the mean score among the
//! top-`m` ranked units minus the overall mean score. Inside a tie group the
//! prefix is filled with the group average, which equals averaging the plain
//! estimator over every within-group ordering. The RATE point estimate is the
//! rank-weighted score average with tie-averaged weights; for AUTOC, Qini,
//! and tabulated grids it coincides with averaging `alpha(j/n)` against the
//! TOC curve, and that equivalence is exercised in tests rather than shipped
//! as a second estimator.

use crate::error::{Error, Result};
use crate::model::{PriorityRanking, ScoreVector};
use crate::weights::{self, EmpiricalWeights, WeightSpec};

/// Estimated TOC curve on the grid `u = j/n`, or on a coarse grid when
/// bootstrap bands were requested.
#[derive(Debug, Clone, PartialEq)]
pub struct TocCurve {
    /// Treated fractions the curve is evaluated at, increasing, ending at 1.
    pub grid: Vec<f64>,
    /// Tie-adjusted TOC estimate per grid point; the value at `u = 1` is
    /// exactly zero.
    pub values: Vec<f64>,
    /// Mean score, i.e. the ATE proxy subtracted at every grid point.
    pub gamma_mean: f64,
    /// Pointwise confidence bands `(low, high)` when produced by the
    /// bootstrap; `None` for a plain curve.
    pub bands: Option<Vec<(f64, f64)>>,
}

/// Scores arranged in rank order together with the maximal equal-priority
/// runs. The building block shared by the estimators and the bootstrap.
#[derive(Debug, Clone)]
pub(crate) struct RankedScores {
    pub gamma: Vec<f64>,
    /// Half-open `[start, end)` rank intervals of equal priority, covering
    /// every rank (singletons included), in rank order.
    pub runs: Vec<(usize, usize)>,
}

impl RankedScores {
    pub fn from_ranking(scores: &ScoreVector, ranking: &PriorityRanking) -> Result<Self> {
        if scores.n() != ranking.n() {
            return Err(Error::schema(format!(
                "score length {} does not match ranking size {}",
                scores.n(),
                ranking.n()
            )));
        }
        let gamma: Vec<f64> = ranking.order.iter().map(|&i| scores.values[i]).collect();
        Ok(RankedScores {
            gamma,
            runs: full_runs(ranking),
        })
    }

    pub fn n(&self) -> usize {
        self.gamma.len()
    }
}

/// Expand a ranking's tie groups into a run list covering every rank.
pub(crate) fn full_runs(ranking: &PriorityRanking) -> Vec<(usize, usize)> {
    let n = ranking.n();
    let mut runs = Vec::new();
    let mut rank = 0usize;
    let mut groups = ranking.tie_groups.iter().peekable();
    while rank < n {
        match groups.peek() {
            Some(&&(s, e)) if s == rank => {
                runs.push((s, e));
                rank = e;
                groups.next();
            }
            _ => {
                runs.push((rank, rank + 1));
                rank += 1;
            }
        }
    }
    runs
}

/// TOC values on the full grid `j/n` for a ranked score sequence.
pub(crate) fn toc_values(ranked: &RankedScores) -> Vec<f64> {
    let n = ranked.n();
    let nf = n as f64;
    let mean = ranked.gamma.iter().sum::<f64>() / nf;
    let mut values = vec![0.0f64; n];
    let mut prefix = 0.0f64; // sum of scores in all runs fully above the current one
    for &(s, e) in &ranked.runs {
        let group_sum: f64 = ranked.gamma[s..e].iter().sum();
        let size = (e - s) as f64;
        for m in s..e {
            // Ranks s+1..=e share the group; the partial prefix takes the
            // group average for the (m+1-s) slots inside it.
            let top = prefix + (m + 1 - s) as f64 / size * group_sum;
            values[m] = top / (m + 1) as f64 - mean;
        }
        prefix += group_sum;
    }
    values[n - 1] = 0.0; // pinned exactly
    values
}

/// Rank-weighted score average for a ranked sequence: tie-average the
/// empirical weights over the runs, then take `(1/n) sum_j w(j) gamma(j)`
/// in fixed rank order.
pub(crate) fn rate_from_ranked(ranked: &RankedScores, spec: &WeightSpec) -> Result<f64> {
    let ew = weights::empirical_weights(spec, ranked.n())?;
    Ok(rate_with_weights(ranked, &ew))
}

/// Same as [`rate_from_ranked`] with the size-`n` weights precomputed, so
/// bootstrap replicates of a fixed subsample size can reuse them.
pub(crate) fn rate_with_weights(ranked: &RankedScores, ew: &EmpiricalWeights) -> f64 {
    debug_assert_eq!(ew.n, ranked.n());
    let first = ranked.gamma[0];
    if ew.centered && ranked.gamma.iter().all(|&g| g == first) {
        return 0.0; // centered weights annihilate constants
    }
    let mut w = ew.w.clone();
    let multi: Vec<(usize, usize)> = ranked
        .runs
        .iter()
        .copied()
        .filter(|&(s, e)| e - s > 1)
        .collect();
    weights::tie_average_in_place(&mut w, &multi);
    let n = ranked.n() as f64;
    // For centered weightings the scores are centered before weighting; the
    // weights sum to zero analytically, so this only removes cancellation
    // error. Uncentered weightings take the plain weighted mean.
    let mean = if ew.centered {
        ranked.gamma.iter().sum::<f64>() / n
    } else {
        0.0
    };
    let mut acc = 0.0f64;
    for (wj, gj) in w.iter().zip(&ranked.gamma) {
        acc += wj * (gj - mean);
    }
    acc / n
}

/// Estimate the TOC curve of a priority ranking from per-unit scores.
pub fn toc_curve(scores: &ScoreVector, ranking: &PriorityRanking) -> Result<TocCurve> {
    let ranked = RankedScores::from_ranking(scores, ranking)?;
    let n = ranked.n();
    let values = toc_values(&ranked);
    let gamma_mean = scores.values.iter().sum::<f64>() / n as f64;
    Ok(TocCurve {
        grid: (1..=n).map(|j| j as f64 / n as f64).collect(),
        values,
        gamma_mean,
        bands: None,
    })
}

/// RATE point estimate under a weighting.
pub fn rate_point(
    scores: &ScoreVector,
    ranking: &PriorityRanking,
    spec: &WeightSpec,
) -> Result<f64> {
    let ranked = RankedScores::from_ranking(scores, ranking)?;
    if ranked.n() < 2 {
        return Err(Error::schema("need at least 2 units"));
    }
    rate_from_ranked(&ranked, spec)
}

/// Difference of RATE point estimates for two rules on identical scores.
pub fn rate_difference(
    scores: &ScoreVector,
    ranking_a: &PriorityRanking,
    ranking_b: &PriorityRanking,
    spec: &WeightSpec,
) -> Result<f64> {
    if ranking_a.n() != ranking_b.n() {
        return Err(Error::schema(format!(
            "ranking size mismatch: {} vs {}",
            ranking_a.n(),
            ranking_b.n()
        )));
    }
    Ok(rate_point(scores, ranking_a, spec)? - rate_point(scores, ranking_b, spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rank_values, ScoreFamily};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn sv(values: Vec<f64>) -> ScoreVector {
        ScoreVector::new(values, ScoreFamily::Supplied).unwrap()
    }

    #[test]
    fn toc_prefix_means_without_ties() {
        // Scores already in rank order: [4, 2, 0, -2], mean 1.
        let scores = sv(vec![4.0, 2.0, 0.0, -2.0]);
        let ranking = rank_values(&[4.0, 3.0, 2.0, 1.0]);
        let curve = toc_curve(&scores, &ranking).unwrap();
        assert_eq!(curve.values, vec![3.0, 2.0, 1.0, 0.0]);
        assert_eq!(curve.gamma_mean, 1.0);
    }

    #[test]
    fn toc_tie_group_uses_group_average() {
        // Ranks 1 and 2 tied: TOC(1/3) = (a+b)/2 - mean.
        let (a, b, c) = (5.0, 1.0, -3.0);
        let scores = sv(vec![a, b, c]);
        let ranking = rank_values(&[2.0, 2.0, 1.0]);
        let curve = toc_curve(&scores, &ranking).unwrap();
        let mean = (a + b + c) / 3.0;
        // Both in-group ranks take the group average prefix.
        assert!((curve.values[0] - ((a + b) / 2.0 - mean)).abs() < 1e-15);
        assert!((curve.values[1] - ((a + b) / 2.0 - mean)).abs() < 1e-15);
        assert_eq!(curve.values[2], 0.0);
    }

    #[test]
    fn toc_constant_scores_vanish() {
        let scores = sv(vec![7.0; 5]);
        let ranking = rank_values(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let curve = toc_curve(&scores, &ranking).unwrap();
        assert!(curve.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn toc_all_tied_priorities_vanish() {
        let scores = sv(vec![3.0, -1.0, 2.0, 0.5]);
        let ranking = rank_values(&[1.0; 4]);
        let curve = toc_curve(&scores, &ranking).unwrap();
        assert!(curve.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn rate_autoc_two_units() {
        let (g1, g2) = (3.0, -1.0);
        let scores = sv(vec![g1, g2]);
        let ranking = rank_values(&[2.0, 1.0]);
        let theta = rate_point(&scores, &ranking, &WeightSpec::autoc()).unwrap();
        assert!((theta - (g1 - g2) / 4.0).abs() < 1e-15);
        // Cross-check: (1/2)(TOC(1/2) + TOC(1)) with alpha == 1.
        let curve = toc_curve(&scores, &ranking).unwrap();
        let via_toc = (curve.values[0] + curve.values[1]) / 2.0;
        assert!((theta - via_toc).abs() < 1e-15);
    }

    #[test]
    fn rate_qini_two_units() {
        let (g1, g2) = (3.0, -1.0);
        let scores = sv(vec![g1, g2]);
        let ranking = rank_values(&[2.0, 1.0]);
        let theta = rate_point(&scores, &ranking, &WeightSpec::qini()).unwrap();
        assert!((theta - (g1 - g2) / 8.0).abs() < 1e-15);
    }

    #[test]
    fn rate_constant_scores_is_zero() {
        let scores = sv(vec![2.5; 6]);
        let ranking = rank_values(&[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        for spec in [
            WeightSpec::autoc(),
            WeightSpec::qini(),
            WeightSpec::high_vs_others(0.5),
        ] {
            let theta = rate_point(&scores, &ranking, &spec).unwrap();
            assert!(theta.abs() < 1e-12, "{spec}: {theta}");
        }
    }

    #[test]
    fn rate_difference_identical_rules_is_zero() {
        let scores = sv(vec![1.0, 2.0, 3.0, 4.0]);
        let r = rank_values(&[0.4, 0.3, 0.2, 0.1]);
        let d = rate_difference(&scores, &r, &r, &WeightSpec::autoc()).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn rate_difference_constant_scores_any_rules() {
        let scores = sv(vec![1.5; 5]);
        let a = rank_values(&[5.0, 4.0, 3.0, 2.0, 1.0]);
        let b = rank_values(&[1.0, 3.0, 5.0, 2.0, 4.0]);
        let d = rate_difference(&scores, &a, &b, &WeightSpec::qini()).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn rate_difference_composes_hand_values() {
        let (g1, g2) = (3.0, -1.0);
        let scores = sv(vec![g1, g2]);
        let a = rank_values(&[2.0, 1.0]); // ranks scores as [g1, g2]
        let b = rank_values(&[1.0, 2.0]); // reversed
        let d = rate_difference(&scores, &a, &b, &WeightSpec::autoc()).unwrap();
        // (g1-g2)/4 - (g2-g1)/4 = (g1-g2)/2.
        assert!((d - (g1 - g2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn rate_difference_size_mismatch_errors() {
        let scores = sv(vec![1.0, 2.0]);
        let a = rank_values(&[2.0, 1.0]);
        let b = rank_values(&[1.0]);
        assert!(rate_difference(&scores, &a, &b, &WeightSpec::autoc()).is_err());
    }

    #[test]
    fn high_vs_others_equals_toc_value() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 40;
        let gamma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        // Coarse priorities create ties.
        let pri: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 6.0).floor()).collect();
        let scores = sv(gamma);
        let ranking = rank_values(&pri);
        let curve = toc_curve(&scores, &ranking).unwrap();
        for u in [0.25, 0.5, 0.75, 1.0] {
            let theta =
                rate_point(&scores, &ranking, &WeightSpec::high_vs_others(u)).unwrap();
            let m = (u * n as f64).ceil() as usize;
            assert!(
                (theta - curve.values[m - 1]).abs() < 1e-12,
                "u={u}: {theta} vs {}",
                curve.values[m - 1]
            );
        }
    }

    /// Enumerate every within-tie-group permutation, apply the plain no-tie
    /// formulas, and average. Small-n oracle for the tie-adjusted paths.
    fn brute_force_tie_average(
        gamma_ranked: &[f64],
        runs: &[(usize, usize)],
        spec: &WeightSpec,
    ) -> (Vec<f64>, f64) {
        fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items.to_vec()];
            }
            let mut out = Vec::new();
            for (i, &head) in items.iter().enumerate() {
                let mut rest = items.to_vec();
                rest.remove(i);
                for mut tail in permutations(&rest) {
                    tail.insert(0, head);
                    out.push(tail);
                }
            }
            out
        }

        let n = gamma_ranked.len();
        let per_run: Vec<Vec<Vec<usize>>> = runs
            .iter()
            .map(|&(s, e)| permutations(&(s..e).collect::<Vec<_>>()))
            .collect();
        let mut toc_acc = vec![0.0f64; n];
        let mut rate_acc = 0.0f64;
        let mut count = 0usize;
        let ew = weights::empirical_weights(spec, n).unwrap();

        // Odometer over the cartesian product of run permutations.
        let mut idx = vec![0usize; per_run.len()];
        loop {
            let mut arrangement = Vec::with_capacity(n);
            for (r, perms) in per_run.iter().enumerate() {
                arrangement.extend(perms[idx[r]].iter().map(|&j| gamma_ranked[j]));
            }
            let mean = arrangement.iter().sum::<f64>() / n as f64;
            let mut prefix = 0.0;
            for (m, g) in arrangement.iter().enumerate() {
                prefix += g;
                toc_acc[m] += prefix / (m + 1) as f64 - mean;
            }
            rate_acc += arrangement
                .iter()
                .zip(&ew.w)
                .map(|(g, w)| g * w)
                .sum::<f64>()
                / n as f64;
            count += 1;

            let mut carry = per_run.len();
            while carry > 0 {
                idx[carry - 1] += 1;
                if idx[carry - 1] < per_run[carry - 1].len() {
                    break;
                }
                idx[carry - 1] = 0;
                carry -= 1;
            }
            if carry == 0 {
                break;
            }
        }
        for v in &mut toc_acc {
            *v /= count as f64;
        }
        (toc_acc, rate_acc / count as f64)
    }

    #[test]
    fn tie_handling_matches_permutation_oracle_small() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for n in 2..=5usize {
            for _ in 0..8 {
                let gamma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let pri: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 2.5).floor()).collect();
                let ranking = rank_values(&pri);
                let ranked_gamma: Vec<f64> =
                    ranking.order.iter().map(|&i| gamma[i]).collect();
                let runs = full_runs(&ranking);
                let scores = sv(gamma);
                for spec in [WeightSpec::autoc(), WeightSpec::qini()] {
                    let (toc_oracle, rate_oracle) =
                        brute_force_tie_average(&ranked_gamma, &runs, &spec);
                    let curve = toc_curve(&scores, &ranking).unwrap();
                    for m in 0..n - 1 {
                        assert!(
                            (curve.values[m] - toc_oracle[m]).abs() < 1e-12,
                            "n={n} m={m}: {} vs {}",
                            curve.values[m],
                            toc_oracle[m]
                        );
                    }
                    let theta = rate_point(&scores, &ranking, &spec).unwrap();
                    assert!((theta - rate_oracle).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shuffled_scores_have_zero_expected_rate() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let n = 50;
        let gamma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
        let ranking = rank_values(&(0..n).map(|j| -(j as f64)).collect::<Vec<_>>());
        let spec = WeightSpec::autoc();
        let shuffles = 10_000usize;
        let mut estimates = Vec::with_capacity(shuffles);
        let mut g = gamma;
        for _ in 0..shuffles {
            g.shuffle(&mut rng);
            let theta = rate_point(&sv(g.clone()), &ranking, &spec).unwrap();
            estimates.push(theta);
        }
        let mean = estimates.iter().sum::<f64>() / shuffles as f64;
        let var = estimates.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / (shuffles - 1) as f64;
        let mc_se = (var / shuffles as f64).sqrt();
        assert!(
            mean.abs() <= 3.0 * mc_se,
            "mean {mean} exceeds 3 x MC SE {mc_se}"
        );
    }

    proptest! {
        /// RATE depends on the priority column only through its ranking, so a
        /// strictly increasing transform leaves the estimate bit-identical.
        #[test]
        fn rate_invariant_to_monotone_transform(
            vals in proptest::collection::vec(0.0f64..4.0, 4..40)
        ) {
            let pri: Vec<f64> = vals.iter().map(|v| (v * 2.0).floor()).collect();
            let gamma: Vec<f64> = vals.iter().map(|v| v.sin() * 2.0).collect();
            let transformed: Vec<f64> = pri.iter().map(|p| (p * 0.7).exp() + 1.0).collect();
            let scores = sv(gamma);
            let a = rank_values(&pri);
            let b = rank_values(&transformed);
            for spec in [WeightSpec::autoc(), WeightSpec::qini()] {
                let ta = rate_point(&scores, &a, &spec).unwrap();
                let tb = rate_point(&scores, &b, &spec).unwrap();
                prop_assert_eq!(ta, tb);
            }
        }

        /// Centered weights annihilate constant shifts.
        #[test]
        fn rate_location_invariance(
            gamma in proptest::collection::vec(-2.0f64..2.0, 4..50),
            shift in -10.0f64..10.0
        ) {
            let n = gamma.len();
            let pri: Vec<f64> = (0..n).map(|j| ((j * 7) % 5) as f64).collect();
            let ranking = rank_values(&pri);
            let shifted: Vec<f64> = gamma.iter().map(|g| g + shift).collect();
            for spec in [WeightSpec::autoc(), WeightSpec::qini()] {
                let t0 = rate_point(&sv(gamma.clone()), &ranking, &spec).unwrap();
                let t1 = rate_point(&sv(shifted.clone()), &ranking, &spec).unwrap();
                prop_assert!((t0 - t1).abs() < 1e-10);
            }
        }
    }
}
