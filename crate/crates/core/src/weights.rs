//! RATE weight functions.
//!
//! A weighting is specified by `alpha(u)` over treated fractions `u`. The
//! built-in choices are AUTOC (`alpha == 1`), the Qini coefficient
//! (`alpha(u) = u`), the high-vs-others contrast at a single `u`, and
//! tabulated custom grids. Each induces
//!
//! * a population weight `w(t)` for the weighted-ATE form,
//!   `w(t) = int_t^1 alpha(u)/u du - int_0^1 alpha(u) du`, and
//! * an empirical weight sequence `w_n(k)` over ranks, obtained by summing
//!   `alpha` over the discrete TOC grid:
//!   `w_n(k) = sum_{j>=k} alpha(j/n)/j - (1/n) sum_j alpha(j/n)`.
//!
//! The empirical transform makes the rank-weighted score average coincide
//! exactly with averaging `alpha(j/n)` against the estimated TOC curve, and
//! it centers the weights: `sum_k w_n(k) = 0` identically.

use crate::error::{Error, Result};
use crate::model::PriorityRanking;

/// Which weighting to apply.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightKind {
    /// Area under the TOC curve; population weight `-log(t) - 1`.
    Autoc,
    /// Qini coefficient; population weight `1/2 - t`.
    Qini,
    /// The Qini coefficient in its uncentered cumulative-gain form,
    /// population weight `-t`. Differs from [`WeightKind::Qini`] by half the
    /// average score, so unlike the centered metrics its null hypothesis is
    /// sensitive to the overall effect level. Kept for comparisons with
    /// implementations that weight scores by the empirical rank CDF directly.
    QiniUncentered,
    /// ATE in the top `u` fraction versus everyone, `0 < u <= 1`.
    HighVsOthers(f64),
    /// Tabulated `alpha` at `u = j/n`; must match the evaluation `n` exactly
    /// (no interpolation).
    CustomAlpha(Vec<f64>),
}

impl WeightKind {
    /// Whether the induced weights sum to zero (every kind except the
    /// uncentered Qini form).
    pub fn centered(&self) -> bool {
        !matches!(self, WeightKind::QiniUncentered)
    }
}

/// A weighting plus the optional unit-variance rescaling used when comparing
/// metrics on a common scale.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub rescale_to_unit_variance: bool,
}

impl WeightSpec {
    pub fn autoc() -> Self {
        WeightSpec {
            kind: WeightKind::Autoc,
            rescale_to_unit_variance: false,
        }
    }

    pub fn qini() -> Self {
        WeightSpec {
            kind: WeightKind::Qini,
            rescale_to_unit_variance: false,
        }
    }

    pub fn qini_uncentered() -> Self {
        WeightSpec {
            kind: WeightKind::QiniUncentered,
            rescale_to_unit_variance: false,
        }
    }

    pub fn high_vs_others(u: f64) -> Self {
        WeightSpec {
            kind: WeightKind::HighVsOthers(u),
            rescale_to_unit_variance: false,
        }
    }

    pub fn custom(alpha: Vec<f64>) -> Self {
        WeightSpec {
            kind: WeightKind::CustomAlpha(alpha),
            rescale_to_unit_variance: false,
        }
    }

    pub fn rescaled(mut self) -> Self {
        self.rescale_to_unit_variance = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            WeightKind::HighVsOthers(u) => {
                if !(u.is_finite() && *u > 0.0 && *u <= 1.0) {
                    return Err(Error::schema(format!(
                        "high-vs-others threshold must lie in (0,1], got {u}"
                    )));
                }
            }
            WeightKind::CustomAlpha(grid) => {
                if grid.is_empty() {
                    return Err(Error::schema("custom alpha grid is empty"));
                }
                if let Some(i) = grid.iter().position(|a| !a.is_finite()) {
                    return Err(Error::schema_at("alpha", i + 1, "non-finite value"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl std::fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.kind {
            WeightKind::Autoc => write!(f, "autoc")?,
            WeightKind::Qini => write!(f, "qini")?,
            WeightKind::QiniUncentered => write!(f, "qini_uncentered")?,
            WeightKind::HighVsOthers(u) => write!(f, "toc(u={u})")?,
            WeightKind::CustomAlpha(g) => write!(f, "custom(n={})", g.len())?,
        }
        if self.rescale_to_unit_variance {
            write!(f, ":rescaled")?;
        }
        Ok(())
    }
}

/// Empirical weight sequence over ranks `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalWeights {
    pub n: usize,
    /// `w[k-1]` is the weight applied to the score at rank `k`.
    pub w: Vec<f64>,
    /// Whether the weights sum to zero analytically.
    pub centered: bool,
}

/// Population weight `w(t)` at a quantile `t` strictly inside `(0,1)`.
///
/// Custom grids have no closed-form population weight and are rejected.
pub fn population_weight(spec: &WeightSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    if !(t.is_finite() && t > 0.0 && t < 1.0) {
        return Err(Error::schema(format!("quantile t must lie in (0,1), got {t}")));
    }
    let raw = match &spec.kind {
        WeightKind::Autoc => -t.ln() - 1.0,
        WeightKind::Qini => 0.5 - t,
        WeightKind::QiniUncentered => -t,
        WeightKind::HighVsOthers(u) => {
            if t <= *u {
                1.0 / u - 1.0
            } else {
                -1.0
            }
        }
        WeightKind::CustomAlpha(_) => {
            return Err(Error::schema(
                "custom alpha grids have no closed-form population weight",
            ));
        }
    };
    if spec.rescale_to_unit_variance {
        let sd = population_weight_sd(&spec.kind)?;
        Ok(raw / sd)
    } else {
        Ok(raw)
    }
}

/// Standard deviation of `w(U)` for `U ~ Unif(0,1)`, used by the rescaling.
pub(crate) fn population_weight_sd(kind: &WeightKind) -> Result<f64> {
    match kind {
        // Var(-log U - 1) = 1.
        WeightKind::Autoc => Ok(1.0),
        // Var(1/2 - U) = Var(-U) = 1/12.
        WeightKind::Qini | WeightKind::QiniUncentered => Ok((1.0f64 / 12.0).sqrt()),
        // Var(1{U<=u}/u - 1) = (1-u)/u.
        WeightKind::HighVsOthers(u) => {
            let var = (1.0 - u) / u;
            if var <= 0.0 {
                return Err(Error::Degenerate(
                    "zero-variance weights cannot be rescaled".into(),
                ));
            }
            Ok(var.sqrt())
        }
        WeightKind::CustomAlpha(_) => Err(Error::schema(
            "custom alpha grids have no closed-form population weight",
        )),
    }
}

/// Empirical weights `w_n(k)` for a sample of size `n >= 2`.
pub fn empirical_weights(spec: &WeightSpec, n: usize) -> Result<EmpiricalWeights> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::schema(format!("need at least 2 units, got {n}")));
    }
    let mut w = match &spec.kind {
        WeightKind::Autoc => {
            // w_n(k) = H_n - H_{k-1} - 1 with H_0 = 0.
            let mut h = vec![0.0f64; n + 1];
            for k in 1..=n {
                h[k] = h[k - 1] + 1.0 / k as f64;
            }
            (1..=n).map(|k| h[n] - h[k - 1] - 1.0).collect::<Vec<_>>()
        }
        WeightKind::Qini => {
            let nf = n as f64;
            (1..=n)
                .map(|k| (nf - k as f64 + 1.0) / nf - (nf + 1.0) / (2.0 * nf))
                .collect()
        }
        // Empirical rank-CDF weighting F(S_(k)) - 1 = -(k-1)/n.
        WeightKind::QiniUncentered => {
            let nf = n as f64;
            (1..=n).map(|k| -((k - 1) as f64) / nf).collect()
        }
        WeightKind::HighVsOthers(u) => {
            let m = (u * n as f64).ceil().max(1.0) as usize;
            let top = n as f64 / m as f64 - 1.0;
            (1..=n).map(|k| if k <= m { top } else { -1.0 }).collect()
        }
        WeightKind::CustomAlpha(alpha) => {
            if alpha.len() != n {
                return Err(Error::schema(format!(
                    "custom alpha grid has {} entries but n = {n}; grids must be tabulated at u = j/n",
                    alpha.len()
                )));
            }
            alpha_transform(alpha)
        }
    };
    if spec.rescale_to_unit_variance {
        let mean = w.iter().sum::<f64>() / n as f64;
        let var = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        if var <= 0.0 {
            return Err(Error::Degenerate(
                "zero-variance weights cannot be rescaled".into(),
            ));
        }
        let sd = var.sqrt();
        for v in &mut w {
            *v /= sd;
        }
    }
    Ok(EmpiricalWeights {
        n,
        w,
        centered: spec.kind.centered(),
    })
}

/// Generic rank-weight transform of a tabulated `alpha(j/n)` grid:
/// `w_n(k) = sum_{j>=k} alpha(j/n)/j - (1/n) sum_j alpha(j/n)`.
pub(crate) fn alpha_transform(alpha: &[f64]) -> Vec<f64> {
    let n = alpha.len();
    let mean_alpha = alpha.iter().sum::<f64>() / n as f64;
    let mut w = vec![0.0f64; n];
    let mut suffix = 0.0f64;
    for k in (0..n).rev() {
        suffix += alpha[k] / (k + 1) as f64;
        w[k] = suffix - mean_alpha;
    }
    w
}

/// Replace the weights inside each tie group by their within-group mean.
///
/// Weights outside tie groups are unchanged and the total sum is preserved.
pub fn tie_average_weights(
    ew: &EmpiricalWeights,
    ranking: &PriorityRanking,
) -> Result<EmpiricalWeights> {
    if ew.n != ranking.n() {
        return Err(Error::schema(format!(
            "weight length {} does not match ranking size {}",
            ew.n,
            ranking.n()
        )));
    }
    let mut w = ew.w.clone();
    tie_average_in_place(&mut w, &ranking.tie_groups);
    Ok(EmpiricalWeights {
        n: ew.n,
        w,
        centered: ew.centered,
    })
}

pub(crate) fn tie_average_in_place(w: &mut [f64], tie_groups: &[(usize, usize)]) {
    for &(s, e) in tie_groups {
        let mean = w[s..e].iter().sum::<f64>() / (e - s) as f64;
        for v in &mut w[s..e] {
            *v = mean;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rank_values;
    use proptest::prelude::*;

    /// Adaptive Simpson quadrature, used as an independent oracle for the
    /// population-weight integrals.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn autoc_population_weight_matches_quadrature() {
        let spec = WeightSpec::autoc();
        // At t = 1/e the weight crosses zero.
        let at_inv_e = population_weight(&spec, (1.0f64).exp().recip()).unwrap();
        assert!(at_inv_e.abs() < 1e-12);

        let t = 0.1;
        let by_integral = simpson(&|u: f64| 1.0 / u, t, 1.0, 10_000) - 1.0;
        let w = population_weight(&spec, t).unwrap();
        assert!((w - by_integral).abs() < 1e-9, "{w} vs {by_integral}");
        assert!((w - 1.302_585_092_994_045_7).abs() < 1e-12);
    }

    #[test]
    fn qini_population_weight_centered_at_half() {
        let spec = WeightSpec::qini();
        assert_eq!(population_weight(&spec, 0.5).unwrap(), 0.0);
        // Quadrature oracle for w(t) = int_t^1 du - int_0^1 u du.
        let t = 0.3;
        let by_integral = simpson(&|_| 1.0, t, 1.0, 100) - 0.5;
        assert!((population_weight(&spec, t).unwrap() - by_integral).abs() < 1e-12);
    }

    #[test]
    fn high_vs_others_population_weight() {
        let spec = WeightSpec::high_vs_others(0.25);
        assert!((population_weight(&spec, 0.2).unwrap() - 3.0).abs() < 1e-15);
        assert!((population_weight(&spec, 0.3).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn population_weight_rejects_boundary_quantiles() {
        let spec = WeightSpec::autoc();
        assert!(population_weight(&spec, 0.0).is_err());
        assert!(population_weight(&spec, 1.0).is_err());
    }

    #[test]
    fn autoc_empirical_weights_n2() {
        let ew = empirical_weights(&WeightSpec::autoc(), 2).unwrap();
        assert!((ew.w[0] - 0.5).abs() < 1e-15);
        assert!((ew.w[1] + 0.5).abs() < 1e-15);
        // Cross-check against the generic transform with alpha == 1.
        let oracle = alpha_transform(&[1.0, 1.0]);
        assert!((ew.w[0] - oracle[0]).abs() < 1e-15);
        assert!((ew.w[1] - oracle[1]).abs() < 1e-15);
    }

    #[test]
    fn qini_empirical_weights_n2() {
        let ew = empirical_weights(&WeightSpec::qini(), 2).unwrap();
        assert!((ew.w[0] - 0.25).abs() < 1e-15);
        assert!((ew.w[1] + 0.25).abs() < 1e-15);
        let oracle = alpha_transform(&[0.5, 1.0]);
        assert!((ew.w[0] - oracle[0]).abs() < 1e-15);
        assert!((ew.w[1] - oracle[1]).abs() < 1e-15);
    }

    #[test]
    fn high_vs_others_empirical_weights() {
        let ew = empirical_weights(&WeightSpec::high_vs_others(0.5), 4).unwrap();
        assert_eq!(ew.w, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn qini_uncentered_is_rank_cdf_minus_one() {
        let spec = WeightSpec::qini_uncentered();
        let ew = empirical_weights(&spec, 4).unwrap();
        assert_eq!(ew.w, vec![0.0, -0.25, -0.5, -0.75]);
        assert!(!ew.centered);
        // Offset from the centered form by a constant (n+1)/(2n) - 1/n shift
        // structure: population weights differ by exactly 1/2.
        let t = 0.3;
        let unc = population_weight(&spec, t).unwrap();
        let cen = population_weight(&WeightSpec::qini(), t).unwrap();
        assert!((cen - unc - 0.5).abs() < 1e-15);
        assert_eq!(spec.to_string(), "qini_uncentered");
    }

    #[test]
    fn closed_forms_match_alpha_transform_everywhere() {
        for n in [3usize, 7, 50, 173] {
            let ones = vec![1.0; n];
            let lin: Vec<f64> = (1..=n).map(|j| j as f64 / n as f64).collect();
            let autoc = empirical_weights(&WeightSpec::autoc(), n).unwrap().w;
            let qini = empirical_weights(&WeightSpec::qini(), n).unwrap().w;
            for (a, b) in autoc.iter().zip(alpha_transform(&ones)) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in qini.iter().zip(alpha_transform(&lin)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_weights_require_two_units() {
        assert!(empirical_weights(&WeightSpec::autoc(), 1).is_err());
    }

    #[test]
    fn custom_grid_must_match_n() {
        let spec = WeightSpec::custom(vec![1.0, 2.0, 3.0]);
        assert!(empirical_weights(&spec, 4).is_err());
        assert!(empirical_weights(&spec, 3).is_ok());
    }

    #[test]
    fn tie_average_examples() {
        let ew = EmpiricalWeights {
            n: 3,
            w: vec![3.0, 1.0, -4.0],
            centered: true,
        };
        let r = rank_values(&[2.0, 2.0, 1.0]);
        let out = tie_average_weights(&ew, &r).unwrap();
        assert_eq!(out.w, vec![2.0, 2.0, -4.0]);

        let no_ties = rank_values(&[3.0, 2.0, 1.0]);
        assert_eq!(tie_average_weights(&ew, &no_ties).unwrap().w, ew.w);

        let all_tied = rank_values(&[1.0, 1.0, 1.0]);
        let centered = empirical_weights(&WeightSpec::autoc(), 3).unwrap();
        let out = tie_average_weights(&centered, &all_tied).unwrap();
        for v in out.w {
            assert!(v.abs() < 1e-15);
        }
    }

    #[test]
    fn tie_average_rejects_size_mismatch() {
        let ew = empirical_weights(&WeightSpec::autoc(), 4).unwrap();
        let r = rank_values(&[1.0, 2.0, 3.0]);
        assert!(tie_average_weights(&ew, &r).is_err());
    }

    #[test]
    fn empirical_variances_approach_population_limits() {
        let n = 100_000;
        let autoc = empirical_weights(&WeightSpec::autoc(), n).unwrap().w;
        let qini = empirical_weights(&WeightSpec::qini(), n).unwrap().w;
        let var = |w: &[f64]| {
            let m = w.iter().sum::<f64>() / w.len() as f64;
            w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / w.len() as f64
        };
        let v_autoc = var(&autoc);
        let v_qini = var(&qini);
        assert!((v_autoc - 1.0).abs() < 0.01, "autoc weight variance {v_autoc}");
        assert!(
            (v_qini - 1.0 / 12.0).abs() < 0.01 / 12.0,
            "qini weight variance {v_qini}"
        );
    }

    #[test]
    fn rescaling_yields_unit_empirical_variance() {
        let n = 500;
        for spec in [
            WeightSpec::autoc().rescaled(),
            WeightSpec::qini().rescaled(),
            WeightSpec::high_vs_others(0.2).rescaled(),
        ] {
            let w = empirical_weights(&spec, n).unwrap().w;
            let m = w.iter().sum::<f64>() / n as f64;
            let var = w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            assert!((var - 1.0).abs() < 1e-10, "{spec}: var {var}");
        }
    }

    #[test]
    fn rescaling_zero_variance_weights_fails() {
        // u = 1 puts every unit in the "high" group, so all weights vanish.
        let spec = WeightSpec::high_vs_others(1.0).rescaled();
        assert!(matches!(
            empirical_weights(&spec, 8),
            Err(crate::error::Error::Degenerate(_))
        ));
    }

    proptest! {
        #[test]
        fn centering_holds_for_any_alpha(
            alpha in proptest::collection::vec(-5.0f64..5.0, 2..40)
        ) {
            let n = alpha.len();
            let spec = WeightSpec::custom(alpha);
            let ew = empirical_weights(&spec, n).unwrap();
            let mean = ew.w.iter().sum::<f64>() / n as f64;
            prop_assert!(mean.abs() <= 1e-12);
        }

        #[test]
        fn centering_holds_for_builtins(n in 2usize..200, u in 0.01f64..1.0) {
            for spec in [
                WeightSpec::autoc(),
                WeightSpec::qini(),
                WeightSpec::high_vs_others(u),
            ] {
                let ew = empirical_weights(&spec, n).unwrap();
                let mean = ew.w.iter().sum::<f64>() / n as f64;
                prop_assert!(mean.abs() <= 1e-12, "{spec} at n={n}: mean {mean}");
            }
        }

        #[test]
        fn tie_average_preserves_total(
            vals in proptest::collection::vec(0.0f64..3.0, 3..30)
        ) {
            // Coarse priorities force plenty of exact ties.
            let pri: Vec<f64> = vals.iter().map(|v| (v * 3.0).floor()).collect();
            let r = rank_values(&pri);
            let n = pri.len();
            let ew = empirical_weights(&WeightSpec::autoc(), n).unwrap();
            let out = tie_average_weights(&ew, &r).unwrap();
            let before: f64 = ew.w.iter().sum();
            let after: f64 = out.w.iter().sum();
            prop_assert!((before - after).abs() <= 1e-12);
        }
    }
}
