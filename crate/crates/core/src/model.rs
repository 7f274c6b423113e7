//! Core domain types: evaluation datasets, priority rankings, score vectors,
//! and the result record produced by bootstrap inference.
//!
//! All types are immutable after construction and safe to share across
//! threads. Construction goes through [`validate_dataset`] (for named raw
//! columns, e.g. parsed from CSV) or [`EvalDataset::from_parts`], both of
//! which enforce the dataset invariants.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::schema(format!(
                "feature matrix size mismatch: {} values for {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(FeatureMatrix { data, rows, cols })
    }

    /// Build from per-column vectors (`x1..xd` order).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for col in columns {
                data.push(col[r]);
            }
        }
        FeatureMatrix::new(data, rows, cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Copy of the listed rows, preserving their order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            data,
            rows: rows.len(),
            cols: self.cols,
        }
    }
}

/// One evaluation dataset: per-unit treatment, outcome, optional censoring
/// observables, optional propensities and features, and one or more named
/// priority columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset {
    n: usize,
    pub treatment: Vec<u8>,
    pub outcome: Vec<f64>,
    pub propensity: Option<Vec<f64>>,
    pub event_time: Option<Vec<f64>>,
    pub event_observed: Option<Vec<u8>>,
    pub features: Option<FeatureMatrix>,
    pub priorities: BTreeMap<String, Vec<f64>>,
    /// Precomputed per-unit scores carried in the `gamma` CSV column.
    pub gamma: Option<Vec<f64>>,
}

impl EvalDataset {
    /// Validating constructor used by the simulator and tests.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        treatment: Vec<u8>,
        outcome: Vec<f64>,
        propensity: Option<Vec<f64>>,
        event_time: Option<Vec<f64>>,
        event_observed: Option<Vec<u8>>,
        features: Option<FeatureMatrix>,
        priorities: BTreeMap<String, Vec<f64>>,
        gamma: Option<Vec<f64>>,
    ) -> Result<Self> {
        let d = EvalDataset {
            n: treatment.len(),
            treatment,
            outcome,
            propensity,
            event_time,
            event_observed,
            features,
            priorities,
            gamma,
        };
        d.check_invariants()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn priority(&self, name: &str) -> Result<&[f64]> {
        self.priorities
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::schema(format!("unknown priority column `{name}`")))
    }

    fn check_invariants(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::schema("dataset is empty"));
        }
        let check_len = |len: usize, column: &str| -> Result<()> {
            if len != n {
                Err(Error::schema(format!(
                    "column length mismatch: `{column}` has {len} rows, expected {n}"
                )))
            } else {
                Ok(())
            }
        };
        check_len(self.outcome.len(), "y")?;
        for (i, &w) in self.treatment.iter().enumerate() {
            if w > 1 {
                return Err(Error::schema_at("w", i + 1, "treatment not in {0,1}"));
            }
        }
        for (i, &y) in self.outcome.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::schema_at("y", i + 1, "non-finite value"));
            }
        }
        if let Some(p) = &self.propensity {
            check_len(p.len(), "propensity")?;
            for (i, &e) in p.iter().enumerate() {
                if !(e.is_finite() && e > 0.0 && e < 1.0) {
                    return Err(Error::schema_at(
                        "propensity",
                        i + 1,
                        "propensity outside (0,1)",
                    ));
                }
            }
        }
        match (&self.event_time, &self.event_observed) {
            (Some(t), Some(obs)) => {
                check_len(t.len(), "event_time")?;
                check_len(obs.len(), "event_observed")?;
                for (i, &u) in t.iter().enumerate() {
                    if !(u.is_finite() && u >= 0.0) {
                        return Err(Error::schema_at(
                            "event_time",
                            i + 1,
                            "event time must be a nonnegative finite number",
                        ));
                    }
                }
                for (i, &d) in obs.iter().enumerate() {
                    if d > 1 {
                        return Err(Error::schema_at(
                            "event_observed",
                            i + 1,
                            "event indicator not in {0,1}",
                        ));
                    }
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::schema(
                    "missing paired censoring column: `event_time` and `event_observed` \
                     must be present together",
                ));
            }
        }
        if let Some(x) = &self.features {
            check_len(x.rows(), "x*")?;
            for i in 0..x.rows() {
                if let Some(j) = x.row(i).iter().position(|v| !v.is_finite()) {
                    return Err(Error::schema_at(format!("x{}", j + 1), i + 1, "non-finite value"));
                }
            }
        }
        for (name, col) in &self.priorities {
            check_len(col.len(), &format!("priority.{name}"))?;
            for (i, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::schema_at(
                        format!("priority.{name}"),
                        i + 1,
                        "non-finite value",
                    ));
                }
            }
        }
        if let Some(g) = &self.gamma {
            check_len(g.len(), "gamma")?;
            for (i, &v) in g.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::schema_at("gamma", i + 1, "non-finite value"));
                }
            }
        }
        Ok(())
    }
}

/// Build a validated [`EvalDataset`] from named raw columns.
///
/// Recognized names follow the CSV schema: `w`, `y`, `propensity`,
/// `event_time`, `event_observed`, features `x1..xd`, `priority.<name>`,
/// and `gamma`. Unknown columns are rejected so that typos fail loudly.
pub fn validate_dataset(raw_columns: &[(String, Vec<f64>)]) -> Result<EvalDataset> {
    let mut treatment: Option<Vec<u8>> = None;
    let mut outcome = None;
    let mut propensity = None;
    let mut event_time = None;
    let mut event_observed: Option<Vec<u8>> = None;
    let mut gamma = None;
    let mut features: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut priorities = BTreeMap::new();

    let to_binary = |col: &[f64], name: &str| -> Result<Vec<u8>> {
        col.iter()
            .enumerate()
            .map(|(i, &v)| {
                if v == 0.0 {
                    Ok(0u8)
                } else if v == 1.0 {
                    Ok(1u8)
                } else {
                    let what = if name == "w" {
                        "treatment not in {0,1}"
                    } else {
                        "indicator not in {0,1}"
                    };
                    Err(Error::schema_at(name, i + 1, what))
                }
            })
            .collect()
    };

    for (name, col) in raw_columns {
        match name.as_str() {
            "w" => treatment = Some(to_binary(col, "w")?),
            "y" => outcome = Some(col.clone()),
            "propensity" => propensity = Some(col.clone()),
            "event_time" => event_time = Some(col.clone()),
            "event_observed" => event_observed = Some(to_binary(col, "event_observed")?),
            "gamma" => gamma = Some(col.clone()),
            other => {
                if let Some(rest) = other.strip_prefix("priority.") {
                    if rest.is_empty() {
                        return Err(Error::schema("priority column with empty name"));
                    }
                    priorities.insert(rest.to_string(), col.clone());
                } else if let Some(idx) = other.strip_prefix('x').and_then(|s| s.parse::<usize>().ok())
                {
                    if idx == 0 {
                        return Err(Error::schema("feature columns are numbered from x1"));
                    }
                    features.push((idx, col.clone()));
                } else {
                    return Err(Error::schema(format!("unrecognized column `{other}`")));
                }
            }
        }
    }

    let treatment = treatment.ok_or_else(|| Error::schema("missing required column `w`"))?;
    let outcome = outcome.ok_or_else(|| Error::schema("missing required column `y`"))?;

    let feature_matrix = if features.is_empty() {
        None
    } else {
        features.sort_by_key(|(idx, _)| *idx);
        for (expect, (idx, _)) in features.iter().enumerate() {
            if *idx != expect + 1 {
                return Err(Error::schema(format!(
                    "feature columns must be contiguous x1..x{}, found x{}",
                    features.len(),
                    idx
                )));
            }
        }
        let cols: Vec<Vec<f64>> = features.into_iter().map(|(_, c)| c).collect();
        if cols.iter().any(|c| c.len() != cols[0].len()) {
            return Err(Error::schema("column length mismatch among feature columns"));
        }
        Some(FeatureMatrix::from_columns(&cols)?)
    };

    EvalDataset::from_parts(
        treatment,
        outcome,
        propensity,
        event_time,
        event_observed,
        feature_matrix,
        priorities,
        gamma,
    )
}

/// A descending-priority ranking of the dataset units, with tie bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriorityRanking {
    /// `order[j]` is the 0-based unit index holding rank `j` (rank 0 is
    /// treated first). Within a tie the original unit order is retained;
    /// estimators are invariant to that order by construction.
    pub order: Vec<usize>,
    /// Half-open rank intervals `[start, end)` covering exactly the ranks
    /// whose priority value repeats (`end - start >= 2`).
    pub tie_groups: Vec<(usize, usize)>,
}

impl PriorityRanking {
    pub fn n(&self) -> usize {
        self.order.len()
    }

    /// Maximal equal-priority run index for each rank. Singleton ranks get
    /// their own run; runs are numbered in rank order (0 = highest priority).
    pub fn run_index_by_rank(&self) -> Vec<usize> {
        let n = self.n();
        let mut run = vec![usize::MAX; n];
        let mut next = 0usize;
        let mut rank = 0usize;
        let mut groups = self.tie_groups.iter().peekable();
        while rank < n {
            if let Some(&&(s, e)) = groups.peek() {
                if rank == s {
                    for r in run.iter_mut().take(e).skip(s) {
                        *r = next;
                    }
                    next += 1;
                    rank = e;
                    groups.next();
                    continue;
                }
            }
            run[rank] = next;
            next += 1;
            rank += 1;
        }
        run
    }
}

/// Rank units by a priority column, descending, grouping exact ties.
///
/// Ties are detected by exact floating-point equality; there is no epsilon
/// tolerance, so results never depend on an arbitrary threshold.
pub fn rank_by_priority(d: &EvalDataset, priority_name: &str) -> Result<PriorityRanking> {
    let values = d.priority(priority_name)?;
    Ok(rank_values(values))
}

/// Rank an explicit priority vector (used internally by the simulator).
pub fn rank_values(values: &[f64]) -> PriorityRanking {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order inside each tie.
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("finite priorities"));

    let mut tie_groups = Vec::new();
    let mut start = 0usize;
    for j in 1..=n {
        let boundary = j == n || values[order[j]] != values[order[start]];
        if boundary {
            if j - start >= 2 {
                tie_groups.push((start, j));
            }
            start = j;
        }
    }
    PriorityRanking { order, tie_groups }
}

/// Family a score vector was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFamily {
    Ipw,
    AipwRct,
    AipwObs,
    AipwSurvival,
    Supplied,
}

impl std::fmt::Display for ScoreFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ScoreFamily::Ipw => "ipw",
            ScoreFamily::AipwRct => "aipw_rct",
            ScoreFamily::AipwObs => "aipw_obs",
            ScoreFamily::AipwSurvival => "aipw_survival",
            ScoreFamily::Supplied => "supplied",
        };
        f.write_str(s)
    }
}

/// Survival endpoint for time-to-event outcomes, with horizon `t0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    /// Event occurred by the horizon: `Y = 1{T <= t0}`.
    AbsoluteRisk(f64),
    /// Restricted mean survival time: `Y = min(T, t0)`.
    Rmst(f64),
}

impl Endpoint {
    pub fn horizon(&self) -> f64 {
        match *self {
            Endpoint::AbsoluteRisk(t0) | Endpoint::Rmst(t0) => t0,
        }
    }
}

/// Per-unit doubly robust score values with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub family: ScoreFamily,
    /// Fold id per unit when the scores were cross-fit.
    pub fold_assignment: Option<Vec<usize>>,
    /// Endpoint the outcome was transformed to, for survival scores.
    pub endpoint: Option<Endpoint>,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, family: ScoreFamily) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::schema("empty score vector"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::schema_at("gamma", i + 1, "non-finite score"));
        }
        Ok(ScoreVector {
            values,
            family,
            fold_assignment: None,
            endpoint: None,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// Point estimate with half-sample-bootstrap inference attached.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    /// Identifier of the weighting that produced this estimate.
    pub weight: String,
    pub point: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p_value: f64,
    pub replicates: usize,
    pub seed: u64,
    pub n: usize,
    /// Set when the bootstrap spread was exactly zero (for example constant
    /// scores); the p-value is then reported as 1.
    pub degenerate: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(pairs: &[(&str, Vec<f64>)]) -> Vec<(String, Vec<f64>)> {
        pairs
            .iter()
            .map(|(n, v)| (n.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn minimal_valid_dataset() {
        let d = validate_dataset(&cols(&[("w", vec![0.0, 1.0]), ("y", vec![1.0, 2.0])])).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.treatment, vec![0, 1]);
    }

    #[test]
    fn rejects_nonbinary_treatment() {
        let err = validate_dataset(&cols(&[("w", vec![0.0, 2.0]), ("y", vec![1.0, 2.0])]))
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("treatment not in {0,1}"), "{msg}");
        assert!(msg.contains("row 2"), "{msg}");
    }

    #[test]
    fn rejects_length_mismatch() {
        let err =
            validate_dataset(&cols(&[("w", vec![0.0, 1.0]), ("y", vec![1.0])])).unwrap_err();
        assert!(err.to_string().contains("column length mismatch"));
    }

    #[test]
    fn rejects_propensity_outside_open_interval() {
        let err = validate_dataset(&cols(&[
            ("w", vec![0.0, 1.0]),
            ("y", vec![1.0, 2.0]),
            ("propensity", vec![0.5, 1.0]),
        ]))
        .unwrap_err();
        assert!(err.to_string().contains("propensity outside (0,1)"));
    }

    #[test]
    fn rejects_unpaired_censoring_column() {
        let err = validate_dataset(&cols(&[
            ("w", vec![0.0, 1.0]),
            ("y", vec![1.0, 2.0]),
            ("event_time", vec![1.0, 2.0]),
        ]))
        .unwrap_err();
        assert!(err.to_string().contains("missing paired censoring column"));
    }

    #[test]
    fn rejects_non_finite_values() {
        let err = validate_dataset(&cols(&[
            ("w", vec![0.0, 1.0]),
            ("y", vec![1.0, f64::NAN]),
        ]))
        .unwrap_err();
        assert!(err.to_string().contains("non-finite value"));
    }

    #[test]
    fn rank_simple_descending_order() {
        let d = validate_dataset(&cols(&[
            ("w", vec![0.0, 1.0, 0.0]),
            ("y", vec![0.0; 3]),
            ("priority.s", vec![0.1, 0.9, 0.5]),
        ]))
        .unwrap();
        let r = rank_by_priority(&d, "s").unwrap();
        assert_eq!(r.order, vec![1, 2, 0]);
        assert!(r.tie_groups.is_empty());
    }

    #[test]
    fn rank_groups_ties_stably() {
        let r = rank_values(&[0.5, 0.5, 0.1]);
        assert_eq!(r.order, vec![0, 1, 2]);
        assert_eq!(r.tie_groups, vec![(0, 2)]);
    }

    #[test]
    fn rank_all_tied() {
        let r = rank_values(&[3.0, 3.0, 3.0]);
        assert_eq!(r.tie_groups, vec![(0, 3)]);
        assert_eq!(r.run_index_by_rank(), vec![0, 0, 0]);
    }

    #[test]
    fn unknown_priority_errors() {
        let d = validate_dataset(&cols(&[("w", vec![0.0]), ("y", vec![1.0])])).unwrap();
        assert!(rank_by_priority(&d, "nope").is_err());
    }

    #[test]
    fn run_index_mixes_groups_and_singletons() {
        let r = rank_values(&[5.0, 5.0, 3.0, 1.0, 1.0]);
        assert_eq!(r.run_index_by_rank(), vec![0, 0, 1, 2, 2]);
    }
}
