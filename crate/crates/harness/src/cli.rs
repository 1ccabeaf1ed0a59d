//! Command-line front end. Flags override values from `--config`.

use std::ffi::OsString;
use std::path::PathBuf;

use calconf_core::agents::PromptTemplate;
use clap::{Args, Parser, Subcommand};

use crate::config::{load_config, GenerateConfig, RewardsConfig, RunConfig, ScoreConfig};
use crate::error::{Classify, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "calconf", version, about = "Calendar-conflict benchmark pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build org, calendars and conflict datasets from a schema.
    Generate(GenerateArgs),
    /// Run an agent over generated datasets and write one trace per episode.
    Run(RunArgs),
    /// Score traces against the truth files.
    Score(ScoreArgs),
    /// Export shaped rewards, returns-to-go and round-wise advantages.
    Rewards(RewardsArgs),
    /// Re-feed recorded traces through the environment and compare.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML or JSON file with any of the fields below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin schema (research-lab, tech-company) or a schema JSON path.
    #[arg(long)]
    schema: Option<String>,
    /// Headcounts, e.g. "PI=1,Postdoc=2,PhD=5".
    #[arg(long)]
    plan: Option<String>,
    /// Keep the first N members in org order.
    #[arg(long)]
    users: Option<usize>,
    /// Explicit member id; repeatable.
    #[arg(long = "user")]
    user_ids: Vec<String>,
    #[arg(long)]
    year: Option<i32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rounds N per user.
    #[arg(long, short = 'n')]
    rounds: Option<usize>,
    /// Events M per round.
    #[arg(long, short = 'm')]
    m: Option<usize>,
    #[arg(long)]
    accept_ratio: Option<f64>,
    #[arg(long)]
    rounds_per_week: Option<usize>,
    /// Conflict-reason pairs stacked per competitor.
    #[arg(long)]
    factors: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory of `generate`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// oracle, random, remote, or heuristic:<most-attendees|earliest-start|senior-attendee-first>.
    #[arg(long)]
    agent: Option<String>,
    /// Use only the first N rounds of each dataset.
    #[arg(long, short = 'n')]
    rounds: Option<usize>,
    #[arg(long)]
    rollouts: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, short = 'j')]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to a user id; repeatable.
    #[arg(long = "user")]
    users: Vec<String>,
    /// History window W.
    #[arg(long)]
    window: Option<usize>,
    /// Turn budget K per round.
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    hub_capacity: Option<usize>,
    #[arg(long)]
    hub_reset_per_round: bool,
    #[arg(long)]
    include_calendar: bool,
    /// Chat-completion base URL for the remote agent.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Per-request timeout in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long)]
    retries: Option<u32>,
    #[arg(long)]
    backoff_ms: Option<u64>,
    /// default, react, mem-react or hub.
    #[arg(long)]
    prompt_template: Option<String>,
    /// Global cap on concurrent remote requests.
    #[arg(long)]
    request_cap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run output directory, trace directory or single trace file.
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RewardsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lambda_f: Option<f64>,
    #[arg(long)]
    lambda_a: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Fixed 0.25/0.25 weights instead of the round-indexed curriculum.
    #[arg(long)]
    no_curriculum: bool,
    /// Compute round-wise advantages (needs >= 2 rollouts per dataset).
    #[arg(long)]
    advantages: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    data: PathBuf,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn generate_config(a: GenerateArgs) -> CliResult<GenerateConfig> {
    let mut c: GenerateConfig = load_config(a.config.as_deref()).usage_err()?;
    set(&mut c.schema, a.schema);
    if a.plan.is_some() {
        c.plan = a.plan;
    }
    if a.users.is_some() {
        c.users = a.users;
    }
    if !a.user_ids.is_empty() {
        c.user_ids = a.user_ids;
    }
    set(&mut c.year, a.year);
    set(&mut c.seed, a.seed);
    set(&mut c.rounds, a.rounds);
    set(&mut c.m, a.m);
    set(&mut c.accept_ratio, a.accept_ratio);
    set(&mut c.rounds_per_week, a.rounds_per_week);
    set(&mut c.factors, a.factors);
    if a.out.is_some() {
        c.out = a.out;
    }
    Ok(c)
}

pub fn run_config(a: RunArgs) -> CliResult<RunConfig> {
    let mut c: RunConfig = load_config(a.config.as_deref()).usage_err()?;
    if a.data.is_some() {
        c.data = a.data;
    }
    if a.out.is_some() {
        c.out = a.out;
    }
    set(&mut c.agent, a.agent);
    if a.rounds.is_some() {
        c.rounds = a.rounds;
    }
    set(&mut c.rollouts, a.rollouts);
    set(&mut c.jobs, a.jobs);
    set(&mut c.seed, a.seed);
    if !a.users.is_empty() {
        c.users = a.users;
    }
    set(&mut c.env.window, a.window);
    set(&mut c.env.max_turns, a.max_turns);
    set(&mut c.env.hub_capacity, a.hub_capacity);
    c.env.hub_reset_per_round |= a.hub_reset_per_round;
    c.env.include_calendar |= a.include_calendar;
    set(&mut c.remote.base_url, a.endpoint);
    set(&mut c.remote.model, a.model);
    if a.token_env.is_some() {
        c.remote.token_env = a.token_env;
    }
    set(&mut c.remote.temperature, a.temperature);
    set(&mut c.remote.max_tokens, a.max_tokens);
    set(&mut c.remote.timeout_secs, a.timeout);
    set(&mut c.remote.retries, a.retries);
    set(&mut c.remote.backoff_ms, a.backoff_ms);
    if let Some(t) = a.prompt_template {
        c.remote.prompt_template = PromptTemplate::parse(&t)
            .ok_or_else(|| CliError::usage(anyhow::anyhow!("unknown prompt template {t:?}")))?;
    }
    set(&mut c.request_cap, a.request_cap);
    Ok(c)
}

pub fn score_config(a: ScoreArgs) -> CliResult<ScoreConfig> {
    let mut c: ScoreConfig = load_config(a.config.as_deref()).usage_err()?;
    for (slot, v) in [(&mut c.traces, a.traces), (&mut c.data, a.data), (&mut c.out, a.out)] {
        if v.is_some() {
            *slot = v;
        }
    }
    Ok(c)
}

pub fn rewards_config(a: RewardsArgs) -> CliResult<RewardsConfig> {
    let mut c: RewardsConfig = load_config(a.config.as_deref()).usage_err()?;
    for (slot, v) in [(&mut c.traces, a.traces), (&mut c.data, a.data), (&mut c.out, a.out)] {
        if v.is_some() {
            *slot = v;
        }
    }
    set(&mut c.reward.lambda_f, a.lambda_f);
    set(&mut c.reward.lambda_a, a.lambda_a);
    set(&mut c.reward.gamma, a.gamma);
    set(&mut c.reward.epsilon, a.epsilon);
    if a.no_curriculum {
        c.reward.curriculum = false;
    }
    c.advantages |= a.advantages;
    Ok(c)
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Generate(a) => {
            let s = crate::generate::generate(&generate_config(a)?)?;
            println!(
                "generated {} datasets ({} rounds) in {}",
                s.users.len(),
                s.total_rounds,
                s.out.display()
            );
        }
        Command::Run(a) => {
            let s = crate::run::run(&run_config(a)?)?;
            println!(
                "{} episodes completed, {} already complete, {} failed; traces in {}",
                s.completed,
                s.resumed,
                s.failed.len(),
                s.out.display()
            );
            if !s.failed.is_empty() {
                for (k, e) in &s.failed {
                    eprintln!("failed {k}: {e}");
                }
                return Err(CliError::partial(format!("{} episodes failed", s.failed.len())));
            }
        }
        Command::Score(a) => {
            let s = crate::score::score(&score_config(a)?)?;
            for (agent, agg) in &s.aggregates {
                let ord = agg.mean_avg_ord.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
                println!(
                    "{agent}: {} instances, AER {:.3}, avg ORD {ord}, ERR {:.3}",
                    agg.n_instances, agg.mean_aer, agg.mean_err
                );
            }
            println!("reports in {}", s.out.display());
            if !s.skipped.is_empty() {
                for (k, e) in &s.skipped {
                    eprintln!("skipped {k}: {e}");
                }
                return Err(CliError::partial(format!("{} traces skipped", s.skipped.len())));
            }
        }
        Command::Rewards(a) => {
            let s = crate::rewards::rewards(&rewards_config(a)?)?;
            println!("{} rows over {} groups in {}", s.rows, s.groups, s.out.display());
            if !s.skipped.is_empty() {
                for (k, e) in &s.skipped {
                    eprintln!("skipped {k}: {e}");
                }
                return Err(CliError::partial(format!("{} traces skipped", s.skipped.len())));
            }
        }
        Command::Replay(a) => {
            let s = crate::replay::replay(&a.traces, &a.data)?;
            if !s.mismatches.is_empty() {
                for (k, e) in &s.mismatches {
                    eprintln!("mismatch {k}: {e}");
                }
                return Err(CliError::data(anyhow::anyhow!(
                    "{} of {} traces did not replay identically",
                    s.mismatches.len(),
                    s.checked
                )));
            }
            println!("{} traces replayed identically", s.checked);
        }
    }
    Ok(())
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
