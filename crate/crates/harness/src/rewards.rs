//! `rewards`: shaped round rewards, returns-to-go and round-wise advantages.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use calconf_core::rewards::{advantage_batch, returns_to_go, score_trace, ExportRow, RoundReward};
use serde::Serialize;

use crate::config::{required, RewardsConfig};
use crate::data::DataDir;
use crate::error::{Classify, CliError, CliResult};
use crate::manifest::{write_atomic, write_json, Manifest};
use crate::score::{load_traces, truth_for};

#[derive(Debug, Clone, Default)]
pub struct RewardsSummary {
    pub out: PathBuf,
    pub groups: usize,
    pub rows: usize,
    pub skipped: Vec<(String, String)>,
}

#[derive(Serialize)]
struct GroupStats {
    rollouts: Vec<String>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

pub fn rewards(cfg: &RewardsConfig) -> CliResult<RewardsSummary> {
    let traces_dir = required(&cfg.traces, "traces").usage_err()?;
    let data_root = required(&cfg.data, "data").usage_err()?;
    let out = required(&cfg.out, "out").usage_err()?;
    cfg.reward.validate().usage_err()?;
    let data = DataDir::open(&data_root).data_err()?;
    let (traces, traces_manifest) = load_traces(&traces_dir).data_err()?;

    let mut summary = RewardsSummary {
        out: out.clone(),
        ..RewardsSummary::default()
    };
    // prompt (group) id -> rollout id -> round rewards
    let mut groups: BTreeMap<String, BTreeMap<String, Vec<RoundReward>>> = BTreeMap::new();
    for t in &traces {
        if !t.trace.is_complete() {
            summary.skipped.push((t.rel.clone(), "trace is incomplete".into()));
            continue;
        }
        let ds = truth_for(&data, &t.trace).with_context(|| format!("scoring {}", t.rel)).data_err()?;
        let rs = score_trace(&t.trace, &ds, &cfg.reward).with_context(|| format!("scoring {}", t.rel)).data_err()?;
        groups
            .entry(t.trace.header.prompt_id.clone())
            .or_default()
            .insert(t.trace.header.rollout_id.clone(), rs);
    }
    if groups.is_empty() {
        return Err(CliError::data(anyhow!("no complete traces in {}", traces_dir.display())));
    }

    let mut rows = Vec::new();
    let mut stats = BTreeMap::new();
    for (prompt, rollouts) in &groups {
        let shaped: Vec<Vec<f64>> = rollouts.values().map(|r| r.iter().map(|x| x.shaped).collect()).collect();
        let (returns, advantages) = if cfg.advantages {
            let batch = advantage_batch(&shaped, &cfg.reward)
                .map_err(|e| CliError::data(anyhow!("group {prompt}: {e}")))?;
            stats.insert(
                prompt.clone(),
                GroupStats {
                    rollouts: rollouts.keys().cloned().collect(),
                    mu: batch.mu.clone(),
                    sigma: batch.sigma.clone(),
                },
            );
            (batch.returns_to_go, Some(batch.advantages))
        } else {
            (returns_to_go(&shaped, cfg.reward.gamma).data_err()?, None)
        };
        for (i, (rollout, rs)) in rollouts.iter().enumerate() {
            for (t, r) in rs.iter().enumerate() {
                rows.push(ExportRow {
                    prompt_id: prompt.clone(),
                    rollout_id: rollout.clone(),
                    round: t + 1,
                    r_f: r.r_f,
                    r_a: r.r_a,
                    r_r: r.r_r,
                    r_i: r.r_i,
                    shaped: r.shaped,
                    return_to_go: returns[i][t],
                    advantage: advantages.as_ref().map(|a| a[i][t]),
                });
            }
        }
    }

    let mut manifest = Manifest::new("rewards", None, serde_json::to_value(cfg.reward).data_err()?);
    manifest.config["advantages"] = cfg.advantages.into();
    manifest.inputs.insert("data".into(), data.manifest_digest.clone());
    if let Some(d) = traces_manifest {
        manifest.inputs.insert("traces".into(), d);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).data_err()?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(anyhow!("{e}")))?;
    let path = out.join("rewards.csv");
    write_atomic(&path, &bytes).data_err()?;
    manifest.record(&out, &path).data_err()?;
    if cfg.advantages {
        let path = out.join("groups.json");
        write_json(&path, &stats).data_err()?;
        manifest.record(&out, &path).data_err()?;
    }
    manifest.write(&out).data_err()?;
    summary.groups = groups.len();
    summary.rows = rows.len();
    Ok(summary)
}
