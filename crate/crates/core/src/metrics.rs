//! Per-round and per-instance scoring.
//!
//! Per round: accuracy (invalid counts as wrong) and ORD, defined only for
//! M >= 3 and 0 for invalid rounds. Per instance: AER, the mean error;
//! avg ORD over rounds where ORD is defined; ERR, the relative drop from
//! the first-quarter to the last-quarter error rate, with quarters of
//! ceil(N/4) rounds and ERR = 0 when the first quarter is error-free.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict_gen::ConflictDataset;
use crate::environment::{EpisodeTrace, RoundRecord};

/// Prefix lengths at which AER is reported.
pub const CHECKPOINTS: [usize; 5] = [1, 25, 50, 75, 104];

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace has {trace} rounds but truth has {truth}")]
    LengthMismatch { trace: usize, truth: usize },
    #[error("round {index}: trace round {trace} does not match truth round {truth}")]
    RoundMismatch { index: usize, trace: String, truth: String },
    #[error("trace for {trace} scored against truth for {truth}")]
    UserMismatch { trace: String, truth: String },
    #[error("no instances to aggregate")]
    Empty,
}

/// The scoring-relevant part of one closed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub valid: bool,
    pub accept: Option<String>,
    pub ranking: Option<Vec<String>>,
}

impl From<&RoundRecord> for RoundOutcome {
    fn from(r: &RoundRecord) -> Self {
        RoundOutcome {
            valid: r.valid,
            accept: r.decision.as_ref().map(|d| d.accept.clone()),
            ranking: r.decision.as_ref().map(|d| d.ranking.clone()),
        }
    }
}

impl RoundOutcome {
    pub fn invalid() -> Self {
        RoundOutcome {
            valid: false,
            accept: None,
            ranking: None,
        }
    }
}

pub fn round_accuracy(outcome: &RoundOutcome, truth_accept: &str) -> u8 {
    u8::from(outcome.valid && outcome.accept.as_deref() == Some(truth_accept))
}

/// 1 - pos/(M-1) for the 0-based position of the truth in `ranking`, or 0
/// when `ranking` is not a length-M list containing it. Requires M >= 2.
pub fn rank_score(ranking: &[String], truth_accept: &str, m: usize) -> f64 {
    if m < 2 || ranking.len() != m {
        return 0.0;
    }
    match ranking.iter().position(|id| id == truth_accept) {
        Some(pos) => 1.0 - pos as f64 / (m - 1) as f64,
        None => 0.0,
    }
}

/// ORD; `None` when M < 3.
pub fn ord(ranking: &[String], truth_accept: &str, m: usize) -> Option<f64> {
    (m >= 3).then(|| rank_score(ranking, truth_accept, m))
}

/// ORD of a closed round, 0 for invalid rounds; `None` when M < 3.
pub fn round_ord(outcome: &RoundOutcome, truth_accept: &str, m: usize) -> Option<f64> {
    if m < 3 {
        return None;
    }
    match (&outcome.ranking, outcome.valid) {
        (Some(r), true) => ord(r, truth_accept, m),
        _ => Some(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetric {
    pub round_index: usize,
    pub round_id: String,
    pub correct: u8,
    pub ord: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterErrors {
    pub quarter_len: usize,
    pub q1: f64,
    pub q2: Option<f64>,
    pub q3: Option<f64>,
    pub q4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub aer: f64,
    pub avg_ord: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub user_id: String,
    pub rollout_id: String,
    pub n_rounds: usize,
    pub invalid_rounds: usize,
    pub aer: f64,
    pub avg_ord: Option<f64>,
    pub err: f64,
    pub quarter_errors: QuarterErrors,
    pub checkpoints: Vec<Checkpoint>,
    pub per_round: Vec<RoundMetric>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_opt(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = xs.collect();
    (!v.is_empty()).then(|| mean(&v))
}

/// Quarter error rates over a per-round error sequence (N >= 1).
pub fn quarter_errors(errors: &[f64]) -> QuarterErrors {
    let n = errors.len();
    assert!(n >= 1, "quarter errors need at least one round");
    let q = n.div_ceil(4);
    let slice_mean = |a: usize, b: usize| (a < b).then(|| mean(&errors[a..b]));
    QuarterErrors {
        quarter_len: q,
        q1: mean(&errors[..q]),
        q2: slice_mean(q, (2 * q).min(n)),
        q3: slice_mean(2 * q, (3 * q).min(n)),
        q4: mean(&errors[n - q..]),
    }
}

pub fn err_from_quarters(q: &QuarterErrors) -> f64 {
    if q.q1 == 0.0 {
        0.0
    } else {
        (q.q1 - q.q4) / q.q1
    }
}

/// Score closed rounds against `(round_id, truth_accept, M)` triples.
pub fn metrics_from_outcomes(
    user_id: &str,
    rollout_id: &str,
    outcomes: &[RoundOutcome],
    truths: &[(&str, &str, usize)],
) -> Result<MetricsReport, MetricsError> {
    if outcomes.len() != truths.len() || outcomes.is_empty() {
        return Err(MetricsError::LengthMismatch {
            trace: outcomes.len(),
            truth: truths.len(),
        });
    }
    let per_round: Vec<RoundMetric> = outcomes
        .iter()
        .zip(truths)
        .enumerate()
        .map(|(i, (o, (round_id, accept, m)))| RoundMetric {
            round_index: i + 1,
            round_id: round_id.to_string(),
            correct: round_accuracy(o, accept),
            ord: round_ord(o, accept, *m),
            valid: o.valid,
        })
        .collect();
    let errors: Vec<f64> = per_round.iter().map(|r| 1.0 - f64::from(r.correct)).collect();
    let quarters = quarter_errors(&errors);
    let checkpoints = CHECKPOINTS
        .iter()
        .filter(|&&n| n <= per_round.len())
        .map(|&n| Checkpoint {
            n,
            aer: mean(&errors[..n]),
            avg_ord: mean_opt(per_round[..n].iter().filter_map(|r| r.ord)),
        })
        .collect();
    Ok(MetricsReport {
        user_id: user_id.to_string(),
        rollout_id: rollout_id.to_string(),
        n_rounds: per_round.len(),
        invalid_rounds: per_round.iter().filter(|r| !r.valid).count(),
        aer: mean(&errors),
        avg_ord: mean_opt(per_round.iter().filter_map(|r| r.ord)),
        err: err_from_quarters(&quarters),
        quarter_errors: quarters,
        checkpoints,
        per_round,
    })
}

pub fn instance_metrics(trace: &EpisodeTrace, truth: &ConflictDataset) -> Result<MetricsReport, MetricsError> {
    if trace.header.user_id != truth.user_id {
        return Err(MetricsError::UserMismatch {
            trace: trace.header.user_id.clone(),
            truth: truth.user_id.clone(),
        });
    }
    if trace.rounds.len() != truth.rounds.len() {
        return Err(MetricsError::LengthMismatch {
            trace: trace.rounds.len(),
            truth: truth.rounds.len(),
        });
    }
    for (i, (r, t)) in trace.rounds.iter().zip(&truth.rounds).enumerate() {
        if r.round_id != t.round_id {
            return Err(MetricsError::RoundMismatch {
                index: i + 1,
                trace: r.round_id.clone(),
                truth: t.round_id.clone(),
            });
        }
    }
    let outcomes: Vec<RoundOutcome> = trace.rounds.iter().map(RoundOutcome::from).collect();
    let truths: Vec<(&str, &str, usize)> = truth
        .rounds
        .iter()
        .map(|r| (r.round_id.as_str(), r.truth_accept.as_str(), r.m()))
        .collect();
    metrics_from_outcomes(&truth.user_id, &trace.header.rollout_id, &outcomes, &truths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_instances: usize,
    pub total_rounds: usize,
    pub mean_aer: f64,
    pub mean_avg_ord: Option<f64>,
    pub mean_err: f64,
    /// Mean prefix AER at each checkpoint reached by every instance.
    pub checkpoints: Vec<Checkpoint>,
    /// Mean error at round t across instances that reach round t.
    pub error_curve: Vec<f64>,
}

pub fn aggregate(reports: &[MetricsReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::Empty);
    }
    let min_n = reports.iter().map(|r| r.n_rounds).min().unwrap_or(0);
    let max_n = reports.iter().map(|r| r.n_rounds).max().unwrap_or(0);
    let checkpoints = CHECKPOINTS
        .iter()
        .filter(|&&n| n <= min_n)
        .map(|&n| {
            let found: Vec<&Checkpoint> = reports
                .iter()
                .filter_map(|r| r.checkpoints.iter().find(|c| c.n == n))
                .collect();
            Checkpoint {
                n,
                aer: mean(&found.iter().map(|c| c.aer).collect::<Vec<_>>()),
                avg_ord: mean_opt(found.iter().filter_map(|c| c.avg_ord)),
            }
        })
        .collect();
    let error_curve = (0..max_n)
        .map(|t| {
            let at: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.per_round.get(t))
                .map(|m| 1.0 - f64::from(m.correct))
                .collect();
            mean(&at)
        })
        .collect();
    Ok(AggregateReport {
        n_instances: reports.len(),
        total_rounds: reports.iter().map(|r| r.n_rounds).sum(),
        mean_aer: mean(&reports.iter().map(|r| r.aer).collect::<Vec<_>>()),
        mean_avg_ord: mean_opt(reports.iter().filter_map(|r| r.avg_ord)),
        mean_err: mean(&reports.iter().map(|r| r.err).collect::<Vec<_>>()),
        checkpoints,
        error_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn ids(m: usize) -> Vec<String> {
        (1..=m).map(|i| format!("e{i}")).collect()
    }

    fn outcome(accept: &str, ranking: Vec<String>) -> RoundOutcome {
        RoundOutcome {
            valid: true,
            accept: Some(accept.into()),
            ranking: Some(ranking),
        }
    }

    #[test]
    fn accuracy_cases() {
        let o = outcome("e2", ids(3));
        assert_eq!(round_accuracy(&o, "e2"), 1);
        assert_eq!(round_accuracy(&o, "e1"), 0);
        assert_eq!(round_accuracy(&RoundOutcome::invalid(), "e2"), 0);
    }

    #[test]
    fn ord_endpoints_and_midpoint() {
        let r = ids(5);
        assert_eq!(ord(&r, "e1", 5), Some(1.0));
        assert_eq!(ord(&r, "e5", 5), Some(0.0));
        assert_eq!(ord(&r, "e3", 5), Some(0.5));
        assert_eq!(ord(&ids(2), "e1", 2), None);
        assert_eq!(round_ord(&RoundOutcome::invalid(), "e1", 5), Some(0.0));
    }

    #[test]
    fn err_hand_example() {
        // Q1 errors {1,1,0,1}, Q4 errors {0,0,0,1} over N = 16.
        let mut errors = vec![1.0, 1.0, 0.0, 1.0];
        errors.extend([0.0; 8]);
        errors.extend([0.0, 0.0, 0.0, 1.0]);
        let q = quarter_errors(&errors);
        assert_eq!((q.q1, q.q4), (0.75, 0.25));
        assert!((err_from_quarters(&q) - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn err_zero_when_first_quarter_clean() {
        let q = quarter_errors(&[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(err_from_quarters(&q), 0.0);
    }

    #[test]
    fn quarters_use_ceiling() {
        let q = quarter_errors(&[1.0; 5]);
        assert_eq!(q.quarter_len, 2);
        assert_eq!(q.q3, Some(1.0));
        let q = quarter_errors(&[1.0]);
        assert_eq!((q.q2, q.q3), (None, None));
    }

    #[test]
    fn perfect_outcomes() {
        let truths: Vec<(String, String, usize)> = (0..104).map(|i| (format!("r{i}"), "e1".to_string(), 5)).collect();
        let t: Vec<(&str, &str, usize)> = truths.iter().map(|(a, b, m)| (a.as_str(), b.as_str(), *m)).collect();
        let outcomes = vec![outcome("e1", ids(5)); 104];
        let rep = metrics_from_outcomes("u", "r", &outcomes, &t).unwrap();
        assert_eq!((rep.aer, rep.avg_ord, rep.err), (0.0, Some(1.0), 0.0));
        assert_eq!(rep.checkpoints.len(), 5);
    }

    #[test]
    fn m2_rounds_excluded_from_ord() {
        let t = [("a", "e1", 2), ("b", "e1", 3)];
        let outs = [outcome("e1", ids(2)), outcome("e2", vec!["e2".into(), "e3".into(), "e1".into()])];
        let rep = metrics_from_outcomes("u", "r", &outs, &t).unwrap();
        assert_eq!(rep.avg_ord, Some(0.0));
        assert_eq!(rep.aer, 0.5);
    }

    #[test]
    fn random_ranking_ord_expectation() {
        let mut rng = crate::seed::stream(1, &["ord-mc"]);
        let mut r = ids(5);
        let n = 100_000;
        let total: f64 = (0..n)
            .map(|_| {
                r.shuffle(&mut rng);
                ord(&r, "e1", 5).unwrap()
            })
            .sum();
        assert!((total / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn random_accept_aer_expectation() {
        let mut rng = crate::seed::stream(2, &["aer-mc"]);
        let n = 10_000;
        let wrong = (0..n).filter(|_| rng.gen_range(0..5) != 0).count();
        assert!((wrong as f64 / n as f64 - 0.8).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn ord_bounded_and_one_iff_top(perm in Just(ids(6)).prop_shuffle(), t in 0usize..6) {
            let truth = format!("e{}", t + 1);
            let v = ord(&perm, &truth, 6).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(v == 1.0, perm[0] == truth);
        }

        #[test]
        fn err_sign_follows_trend(n in 4usize..200) {
            let q = n.div_ceil(4);
            let improving: Vec<f64> = (0..n).map(|i| if i < q { 1.0 } else { 0.0 }).collect();
            prop_assert!(err_from_quarters(&quarter_errors(&improving)) > 0.0);
            let worsening: Vec<f64> = (0..n).map(|i| if i < q { 0.5 * f64::from(u8::from(i % 2 == 0)) } else { 1.0 }).collect();
            let qe = quarter_errors(&worsening);
            if qe.q1 > 0.0 {
                prop_assert!(err_from_quarters(&qe) < 0.0);
            }
        }
    }
}
