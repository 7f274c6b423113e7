//! Evaluation of treatment prioritization rules via rank-weighted average
//! treatment effects (RATE).
//!
//! A prioritization rule scores units so that higher-scored units are treated
//! first. This crate measures how well such a rule targets treatment benefit:
//!
//! * [`estimator::toc_curve`] estimates the targeting operator characteristic
//!   — the average treatment effect among the top-`u` fraction of units minus
//!   the overall average — from per-unit doubly robust scores;
//! * [`estimator::rate_point`] summarizes the curve under a weighting
//!   ([`weights::WeightSpec`]): AUTOC, Qini, a single high-vs-others
//!   contrast, or a tabulated custom weighting;
//! * [`scores`] builds the doubly robust scores for randomized trials (IPW
//!   and augmented IPW), observational studies under unconfoundedness
//!   (cross-fit AIPW), and right-censored survival endpoints (absolute risk
//!   or restricted mean survival time at a horizon);
//! * [`inference`] attaches half-sample bootstrap standard errors, normal
//!   confidence intervals, and two-sided p-values, including paired
//!   comparisons of two rules on shared resamples;
//! * [`simulate`] provides reproducible data-generating scenarios and a
//!   Monte Carlo power harness.
//!
//! Every operation is a pure function of its inputs and seeds: repeated runs
//! produce identical bytes regardless of thread count.

pub mod cli;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod io;
pub mod model;
pub mod nuisance;
mod rng;
pub mod scores;
pub mod simulate;
pub mod weights;

pub use error::{Error, Result};
pub use estimator::{rate_difference, rate_point, toc_curve, TocCurve};
pub use inference::{half_sample_bootstrap, paired_bootstrap_difference, toc_band, BootstrapConfig};
pub use model::{
    rank_by_priority, validate_dataset, Endpoint, EvalDataset, FeatureMatrix, PriorityRanking,
    RateEstimate, ScoreFamily, ScoreVector,
};
pub use weights::{empirical_weights, population_weight, tie_average_weights, WeightKind, WeightSpec};
