//! `run`: drive an agent over every (dataset, rollout) episode.
//!
//! One trace file per episode. A rerun skips episodes whose trace is complete
//! and was produced under the same header, so an interrupted run resumes
//! where it stopped. Episode failures are recorded and do not stop the run.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, Context};
use calconf_core::agents::{
    run_episode, Agent, HeuristicAgent, OracleAgent, RandomAgent, RemoteAgent, RequestLimiter, RunMeta,
    TRACE_FORMAT_VERSION,
};
use calconf_core::environment::{EpisodeTrace, TraceHeader};
use calconf_core::seed::sub_seed;
use calconf_core::{ConflictDataset, OrgChart, UserProfile};
use rayon::prelude::*;

use crate::config::{required, AgentSpec, RunConfig};
use crate::data::{public_digest, DataDir};
use crate::error::{Classify, CliError, CliResult};
use crate::layout;
use crate::manifest::{write_atomic, EpisodeStatus, Manifest};

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub out: PathBuf,
    pub completed: usize,
    pub resumed: usize,
    pub failed: Vec<(String, String)>,
}

struct Job<'a> {
    user: &'a str,
    rollout: String,
    dataset: &'a ConflictDataset,
    digest: &'a str,
}

enum JobOutcome {
    Completed,
    Resumed,
}

struct Runner<'a> {
    cfg: &'a RunConfig,
    spec: AgentSpec,
    data: &'a DataDir,
    out: &'a Path,
    org: &'a OrgChart,
    profiles: &'a BTreeMap<String, UserProfile>,
}

impl Runner<'_> {
    fn agent_seed(&self, job: &Job<'_>) -> u64 {
        sub_seed(self.cfg.seed, &["agent", job.user, &job.rollout])
    }

    fn agent_name(&self, job: &Job<'_>) -> String {
        match self.spec {
            AgentSpec::Oracle => "oracle".into(),
            AgentSpec::Random => RandomAgent::new(self.agent_seed(job)).name(),
            AgentSpec::Heuristic(rule) => HeuristicAgent::new(rule).name(),
            AgentSpec::Remote => format!("remote:{}", self.cfg.remote.model),
        }
    }

    fn build_agent(&self, job: &Job<'_>) -> anyhow::Result<Box<dyn Agent>> {
        Ok(match self.spec {
            AgentSpec::Oracle => {
                let profile = self
                    .profiles
                    .get(job.user)
                    .with_context(|| format!("no hidden profile for {}", job.user))?;
                Box::new(OracleAgent::new(profile.clone(), self.org.clone()))
            }
            AgentSpec::Random => Box::new(RandomAgent::new(self.agent_seed(job))),
            AgentSpec::Heuristic(rule) => Box::new(HeuristicAgent::new(rule)),
            AgentSpec::Remote => {
                let mut remote = self.cfg.remote.clone();
                let log = self.out.join(layout::request_log(job.user, &job.rollout));
                std::fs::create_dir_all(log.parent().expect("log path has a parent"))?;
                // A fresh attempt gets a fresh log.
                let _ = std::fs::remove_file(&log);
                remote.log_path = Some(log);
                Box::new(RemoteAgent::new(remote)?)
            }
        })
    }

    fn expected_header(&self, job: &Job<'_>) -> TraceHeader {
        TraceHeader {
            format_version: TRACE_FORMAT_VERSION,
            org_id: job.dataset.org_id.clone(),
            user_id: job.dataset.user_id.clone(),
            dataset_digest: job.digest.to_string(),
            prompt_id: job.user.to_string(),
            rollout_id: job.rollout.clone(),
            agent: self.agent_name(job),
            config: self.cfg.env,
            n_rounds: job.dataset.n(),
        }
    }

    fn already_done(&self, path: &Path, job: &Job<'_>) -> bool {
        let Ok(file) = std::fs::File::open(path) else {
            return false;
        };
        match EpisodeTrace::read_jsonl(BufReader::new(file)) {
            Ok(t) => t.is_complete() && t.header == self.expected_header(job) && t.rounds.len() == job.dataset.n(),
            Err(_) => false,
        }
    }

    fn run_job(&self, job: &Job<'_>) -> anyhow::Result<JobOutcome> {
        let path = self.out.join(layout::trace(job.user, &job.rollout));
        if self.already_done(&path, job) {
            return Ok(JobOutcome::Resumed);
        }
        let mut agent = self.build_agent(job)?;
        let calendar = if self.cfg.env.include_calendar {
            Some(self.data.calendar(job.user)?)
        } else {
            None
        };
        let meta = RunMeta {
            prompt_id: job.user.to_string(),
            rollout_id: job.rollout.clone(),
            dataset_digest: Some(job.digest.to_string()),
        };
        // Remote episodes are slow, so persist progress after every round.
        let persist_partial = self.spec == AgentSpec::Remote;
        let mut write_err = None;
        let trace = run_episode(
            agent.as_mut(),
            job.dataset,
            self.org,
            calendar.as_ref(),
            self.cfg.env,
            &meta,
            |partial| {
                if persist_partial && !partial.is_complete() {
                    if let Err(e) = write_atomic(&path, partial.to_jsonl().as_bytes()) {
                        write_err.get_or_insert(e);
                    }
                }
            },
        )?;
        if let Some(e) = write_err {
            return Err(e);
        }
        debug_assert_eq!(trace.header, self.expected_header(job));
        write_atomic(&path, trace.to_jsonl().as_bytes())?;
        Ok(JobOutcome::Completed)
    }
}

pub fn run(cfg: &RunConfig) -> CliResult<RunSummary> {
    let data_root = required(&cfg.data, "data").usage_err()?;
    let out = required(&cfg.out, "out").usage_err()?;
    let spec = AgentSpec::parse(&cfg.agent).usage_err()?;
    if cfg.rollouts == 0 {
        return Err(CliError::usage(anyhow!("--rollouts must be >= 1")));
    }
    if cfg.env.max_turns == 0 || cfg.env.hub_capacity == 0 {
        return Err(CliError::usage(anyhow!("max_turns and hub_capacity must be >= 1")));
    }
    if spec == AgentSpec::Remote {
        cfg.remote.validate().usage_err()?;
        if let Some(var) = &cfg.remote.token_env {
            std::env::var(var).map_err(|_| CliError::usage(anyhow!("token variable {var} is not set")))?;
        }
        RequestLimiter::global().set_cap(cfg.request_cap);
    }
    let data = DataDir::open(&data_root).data_err()?;
    let available = data.users();
    let users = if cfg.users.is_empty() { available.clone() } else { cfg.users.clone() };
    if let Some(u) = users.iter().find(|u| !available.contains(u)) {
        return Err(CliError::usage(anyhow!("user {u} has no dataset in {}", data_root.display())));
    }
    let org = data.org().data_err()?;
    // Only the oracle ever sees the hidden principles.
    let profiles: BTreeMap<String, UserProfile> = if spec == AgentSpec::Oracle {
        data.profiles().data_err()?.into_iter().map(|p| (p.user_id.clone(), p)).collect()
    } else {
        BTreeMap::new()
    };
    let mut datasets = Vec::new();
    for u in &users {
        let public = data.public(u).data_err()?;
        let digest = public_digest(&public);
        let mut ds = data.dataset(u).data_err()?;
        if let Some(n) = cfg.rounds {
            if n == 0 || n > ds.n() {
                return Err(CliError::usage(anyhow!("--rounds {n} must lie in 1..={} for {u}", ds.n())));
            }
            ds = ds.truncated(n);
        }
        datasets.push((u.clone(), ds, digest));
    }

    let runner = Runner {
        cfg,
        spec,
        data: &data,
        out: &out,
        org: &org,
        profiles: &profiles,
    };
    let jobs: Vec<Job<'_>> = datasets
        .iter()
        .flat_map(|(u, ds, digest)| {
            (0..cfg.rollouts).map(move |i| Job {
                user: u,
                rollout: layout::rollout_id(i),
                dataset: ds,
                digest,
            })
        })
        .collect();

    // Paths and worker count do not affect outputs and stay out of the manifest.
    let mut recorded = cfg.clone();
    recorded.data = None;
    recorded.out = None;
    recorded.jobs = 0;
    let mut manifest = Manifest::new("run", Some(cfg.seed), serde_json::to_value(&recorded).data_err()?);
    manifest.inputs.insert("data".into(), data.manifest_digest.clone());
    let manifest = Mutex::new(manifest);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build().data_err()?;
    let outcomes: Vec<(String, anyhow::Result<JobOutcome>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let key = format!("{}/{}", job.user, job.rollout);
                let outcome = runner.run_job(job);
                let mut m = manifest.lock().unwrap_or_else(|e| e.into_inner());
                let status = match &outcome {
                    Ok(_) => {
                        let path = out.join(layout::trace(job.user, &job.rollout));
                        match m.record(&out, &path) {
                            Ok(()) => EpisodeStatus {
                                status: "complete".into(),
                                error: None,
                            },
                            Err(e) => EpisodeStatus {
                                status: "failed".into(),
                                error: Some(format!("{e:#}")),
                            },
                        }
                    }
                    Err(e) => EpisodeStatus {
                        status: "failed".into(),
                        error: Some(format!("{e:#}")),
                    },
                };
                m.episodes.insert(key.clone(), status);
                // Keep the on-disk manifest current so a crash loses nothing.
                let _ = m.write(&out);
                (key, outcome)
            })
            .collect()
    });
    let manifest = manifest.into_inner().unwrap_or_else(|e| e.into_inner());
    manifest.write(&out).data_err()?;

    let mut summary = RunSummary {
        out: out.clone(),
        ..RunSummary::default()
    };
    for (key, outcome) in outcomes {
        match outcome {
            Ok(JobOutcome::Completed) => summary.completed += 1,
            Ok(JobOutcome::Resumed) => summary.resumed += 1,
            Err(e) => summary.failed.push((key, format!("{e:#}"))),
        }
    }
    for (key, st) in &manifest.episodes {
        if st.status == "failed" && !summary.failed.iter().any(|(k, _)| k == key) {
            summary.failed.push((key.clone(), st.error.clone().unwrap_or_default()));
        }
    }
    Ok(summary)
}
