//! `replay`: re-feed recorded replies through a fresh environment and check
//! that every round record comes out identical.

use std::path::Path;

use anyhow::{anyhow, Context};
use calconf_core::environment::replay as replay_episode;

use crate::data::DataDir;
use crate::error::{Classify, CliError, CliResult};
use crate::score::{load_traces, truth_for};

#[derive(Debug, Clone, Default)]
pub struct ReplaySummary {
    pub checked: usize,
    pub mismatches: Vec<(String, String)>,
}

pub fn replay(traces: &Path, data_root: &Path) -> CliResult<ReplaySummary> {
    let data = DataDir::open(data_root).data_err()?;
    let org = data.org().data_err()?;
    let (loaded, _) = load_traces(traces).data_err()?;
    if loaded.is_empty() {
        return Err(CliError::data(anyhow!("no traces found in {}", traces.display())));
    }
    let mut summary = ReplaySummary::default();
    for t in &loaded {
        let ds = truth_for(&data, &t.trace).with_context(|| format!("replaying {}", t.rel)).data_err()?;
        let calendar = if t.trace.header.config.include_calendar {
            Some(data.calendar(&t.trace.header.user_id).data_err()?)
        } else {
            None
        };
        summary.checked += 1;
        if let Err(e) = replay_episode(&t.trace, &ds, &org, calendar.as_ref()) {
            summary.mismatches.push((t.rel.clone(), e.to_string()));
        }
    }
    Ok(summary)
}
