//! Shaped round rewards, curriculum weights, returns-to-go and round-wise
//! advantages, exported for an external trainer.
//!
//! shaped_t = lf*r_f + la*r_a + lr_t*r_r + li_t*r_i with i_t = t/N,
//! lr_t = 0.5*i_t and li_t = 0.5*(1 - i_t); both are 0.25 without the
//! curriculum. Advantages normalise the return-to-go separately at each
//! round position across a group of G >= 2 rollouts, using the population
//! variance with epsilon inside the square root.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict_gen::{ConflictDataset, ConflictRound};
use crate::environment::{EpisodeTrace, RoundRecord};
use crate::metrics::{rank_score, round_accuracy, RoundOutcome};

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("round index {t} outside 1..={n}")]
    RoundOutOfRange { t: usize, n: usize },
    #[error("invalid reward config: {0}")]
    InvalidConfig(String),
    #[error("group size must be >= 2, got {0}")]
    GroupTooSmall(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("trace round {trace} does not match truth round {truth}")]
    RoundMismatch { trace: String, truth: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub lambda_f: f64,
    pub lambda_a: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub curriculum: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lambda_f: 1.0,
            lambda_a: 1.0,
            gamma: 1.0,
            epsilon: 1e-8,
            curriculum: true,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::InvalidConfig(m.to_string()));
        if !(self.lambda_f >= 0.0 && self.lambda_a >= 0.0) {
            return bad("lambda_f and lambda_a must be >= 0");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be a positive finite number");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundReward {
    pub r_f: u8,
    pub r_a: u8,
    pub r_r: f64,
    pub r_i: u8,
    pub lambda_r_t: f64,
    pub lambda_i_t: f64,
    pub shaped: f64,
}

impl RoundReward {
    pub fn new(r_f: u8, r_a: u8, r_r: f64, r_i: u8, lambda_r_t: f64, lambda_i_t: f64, cfg: &RewardConfig) -> Self {
        let mut r = RoundReward {
            r_f,
            r_a,
            r_r,
            r_i,
            lambda_r_t,
            lambda_i_t,
            shaped: 0.0,
        };
        r.shaped = r.recompute(cfg.lambda_f, cfg.lambda_a);
        r
    }

    pub fn recompute(&self, lambda_f: f64, lambda_a: f64) -> f64 {
        lambda_f * f64::from(self.r_f)
            + lambda_a * f64::from(self.r_a)
            + self.lambda_r_t * self.r_r
            + self.lambda_i_t * f64::from(self.r_i)
    }
}

/// (lr_t, li_t) for round t of N, t 1-based.
pub fn curriculum_weights(t: usize, n: usize) -> Result<(f64, f64), RewardError> {
    if t == 0 || t > n {
        return Err(RewardError::RoundOutOfRange { t, n });
    }
    let i = t as f64 / n as f64;
    Ok((0.5 * i, 0.5 * (1.0 - i)))
}

fn weights(cfg: &RewardConfig, t: usize, n: usize) -> Result<(f64, f64), RewardError> {
    if cfg.curriculum {
        curriculum_weights(t, n)
    } else if t == 0 || t > n {
        Err(RewardError::RoundOutOfRange { t, n })
    } else {
        Ok((0.25, 0.25))
    }
}

pub fn score_round(
    record: &RoundRecord,
    truth: &ConflictRound,
    cfg: &RewardConfig,
    t: usize,
    n: usize,
) -> Result<RoundReward, RewardError> {
    if record.round_id != truth.round_id {
        return Err(RewardError::RoundMismatch {
            trace: record.round_id.clone(),
            truth: truth.round_id.clone(),
        });
    }
    let (lr, li) = weights(cfg, t, n)?;
    let outcome = RoundOutcome::from(record);
    let r_r = match (&outcome.ranking, outcome.valid) {
        (Some(r), true) => rank_score(r, &truth.truth_accept, truth.m()),
        _ => 0.0,
    };
    Ok(RoundReward::new(
        u8::from(record.valid),
        round_accuracy(&outcome, &truth.truth_accept),
        r_r,
        u8::from(record.u_t),
        lr,
        li,
        cfg,
    ))
}

/// Round rewards for a whole trace, with N taken from the dataset.
pub fn score_trace(trace: &EpisodeTrace, truth: &ConflictDataset, cfg: &RewardConfig) -> Result<Vec<RoundReward>, RewardError> {
    cfg.validate()?;
    if trace.rounds.len() != truth.rounds.len() {
        return Err(RewardError::Shape(format!(
            "trace has {} rounds, truth has {}",
            trace.rounds.len(),
            truth.rounds.len()
        )));
    }
    let n = truth.rounds.len();
    trace
        .rounds
        .iter()
        .zip(&truth.rounds)
        .enumerate()
        .map(|(i, (rec, tr))| score_round(rec, tr, cfg, i + 1, n))
        .collect()
}

/// sum_t gamma^(t-1) * r_t.
pub fn trajectory_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// G_t = r_t + gamma * G_{t+1} per rollout row.
pub fn returns_to_go(rewards: &[Vec<f64>], gamma: f64) -> Result<Vec<Vec<f64>>, RewardError> {
    let n = check_shape(rewards)?;
    Ok(rewards
        .iter()
        .map(|row| {
            let mut out = vec![0.0; n];
            let mut acc = 0.0;
            for t in (0..n).rev() {
                acc = row[t] + gamma * acc;
                out[t] = acc;
            }
            out
        })
        .collect())
}

fn check_shape(m: &[Vec<f64>]) -> Result<usize, RewardError> {
    let n = m.first().map(Vec::len).ok_or_else(|| RewardError::Shape("no rollouts".into()))?;
    if n == 0 {
        return Err(RewardError::Shape("rollouts have no rounds".into()));
    }
    if let Some(bad) = m.iter().position(|r| r.len() != n) {
        return Err(RewardError::Shape(format!("rollout {bad} has {} rounds, expected {n}", m[bad].len())));
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageBatch {
    pub returns_to_go: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
}

/// Normalise each round-position column of a G x N return matrix.
pub fn roundwise_advantages(returns: &[Vec<f64>], epsilon: f64) -> Result<AdvantageBatch, RewardError> {
    let n = check_shape(returns)?;
    let g = returns.len();
    if g < 2 {
        return Err(RewardError::GroupTooSmall(g));
    }
    let mut mu = vec![0.0; n];
    let mut sigma = vec![0.0; n];
    for t in 0..n {
        let m = returns.iter().map(|r| r[t]).sum::<f64>() / g as f64;
        let var = returns.iter().map(|r| (r[t] - m).powi(2)).sum::<f64>() / g as f64;
        mu[t] = m;
        sigma[t] = (var + epsilon).sqrt();
    }
    let advantages = returns
        .iter()
        .map(|row| (0..n).map(|t| (row[t] - mu[t]) / sigma[t]).collect())
        .collect();
    Ok(AdvantageBatch {
        returns_to_go: returns.to_vec(),
        mu,
        sigma,
        advantages,
    })
}

/// Returns-to-go then advantages for a G x N shaped-reward matrix.
pub fn advantage_batch(rewards: &[Vec<f64>], cfg: &RewardConfig) -> Result<AdvantageBatch, RewardError> {
    cfg.validate()?;
    let g = returns_to_go(rewards, cfg.gamma)?;
    roundwise_advantages(&g, cfg.epsilon)
}

/// One row of the tabular advantage export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub prompt_id: String,
    pub rollout_id: String,
    pub round: usize,
    pub r_f: u8,
    pub r_a: u8,
    pub r_r: f64,
    pub r_i: u8,
    pub shaped: f64,
    pub return_to_go: f64,
    pub advantage: Option<f64>,
}
