//! Decision agents behind one interface.
//!
//! Scripted agents (oracle, random, heuristic) always emit one well-formed
//! decision block. [`OracleAgent`] is the only agent that is handed the hidden
//! priority principles; every other agent sees nothing but the observation.

mod prompts;
mod remote;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use prompts::{placeholders, render_messages, ChatMessage, PromptTemplate};
pub use remote::{RemoteAgent, RemoteEndpointConfig, RemoteError, RequestLimiter, DEFAULT_REQUEST_CAP};

use crate::calendar_gen::{Calendar, Event};
use crate::conflict_gen::{rank_by_score, ConflictDataset};
use crate::environment::{
    render_decision, AgentReply, Decision, EnvConfig, EnvError, Episode, EpisodeTrace, Observation, StepResult,
    TerminalStatus, TraceHeader,
};
use crate::org_schema::{principle_score, DecisionContext, OrgChart, UserProfile};
use crate::seed::stream;

pub const TRACE_FORMAT_VERSION: u32 = 1;

/// A policy producing one raw reply per turn.
pub trait Agent: Send {
    /// Identifier recorded in trace headers.
    fn name(&self) -> String;
    fn act(&mut self, obs: &Observation) -> AgentReply;
}

/// Decision that accepts `ranking[0]` and declines the rest.
pub fn decision_from_ranking(ranking: Vec<String>, rationale: &str) -> Decision {
    Decision {
        accept: ranking[0].clone(),
        decline: ranking[1..].to_vec(),
        ranking,
        rationale: rationale.into(),
    }
}

/// Privileged baseline: ranks the observed events by the hidden principle score.
pub struct OracleAgent {
    profile: UserProfile,
    org: OrgChart,
}

impl OracleAgent {
    pub fn new(profile: UserProfile, org: OrgChart) -> Self {
        OracleAgent { profile, org }
    }

    pub fn decide(&self, obs: &Observation) -> Decision {
        let ctx = DecisionContext {
            org: &self.org,
            owner: &self.profile.user_id,
        };
        let scores: BTreeMap<String, f64> = obs
            .conflicts
            .iter()
            .map(|e| (e.event_id.clone(), principle_score(&self.profile, e, &ctx)))
            .collect();
        decision_from_ranking(rank_by_score(&scores), "highest principle score")
    }
}

impl Agent for OracleAgent {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn act(&mut self, obs: &Observation) -> AgentReply {
        AgentReply::text(render_decision(&self.decide(obs)))
    }
}

/// Uniform random permutation per round; the first element is accepted.
pub struct RandomAgent {
    seed: u64,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { seed }
    }

    /// Depends only on (seed, round id).
    pub fn decide(&self, obs: &Observation) -> Decision {
        let mut rng = stream(self.seed, &["random-agent", &obs.round_id]);
        let mut ids: Vec<String> = obs.conflicts.iter().map(|e| e.event_id.clone()).collect();
        ids.shuffle(&mut rng);
        decision_from_ranking(ids, "random")
    }
}

impl Agent for RandomAgent {
    /// The per-episode seed is derived from the run seed, so it is not part
    /// of the name; aggregates group by name.
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&mut self, obs: &Observation) -> AgentReply {
        AgentReply::text(render_decision(&self.decide(obs)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicRule {
    MostAttendees,
    EarliestStart,
    /// Prefer the event whose most senior non-owner attendee sits highest in
    /// the org chart (smallest supervisor depth).
    SeniorAttendeeFirst,
}

impl HeuristicRule {
    pub const ALL: [HeuristicRule; 3] = [
        HeuristicRule::MostAttendees,
        HeuristicRule::EarliestStart,
        HeuristicRule::SeniorAttendeeFirst,
    ];

    pub fn id(self) -> &'static str {
        match self {
            HeuristicRule::MostAttendees => "most-attendees",
            HeuristicRule::EarliestStart => "earliest-start",
            HeuristicRule::SeniorAttendeeFirst => "senior-attendee-first",
        }
    }

    pub fn parse(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.id() == id)
    }
}

/// Greedy single-feature baseline. Ties break by event id ascending.
pub struct HeuristicAgent {
    rule: HeuristicRule,
}

fn depths(obs: &Observation) -> BTreeMap<&str, usize> {
    let sup: BTreeMap<&str, Option<&str>> = obs
        .context
        .members
        .iter()
        .map(|m| (m.member_id.as_str(), m.supervisor.as_deref()))
        .collect();
    sup.keys()
        .map(|&id| {
            let mut d = 0;
            let mut cur = id;
            // Bounded walk so a malformed chart cannot loop.
            while let Some(Some(next)) = sup.get(cur) {
                d += 1;
                cur = next;
                if d > sup.len() {
                    break;
                }
            }
            (id, d)
        })
        .collect()
}

impl HeuristicAgent {
    pub fn new(rule: HeuristicRule) -> Self {
        HeuristicAgent { rule }
    }

    pub fn decide(&self, obs: &Observation) -> Decision {
        let owner = obs.context.user.member_id.as_str();
        let depth = depths(obs);
        let seniority = |e: &Event| {
            e.attendees
                .iter()
                .filter(|a| a.as_str() != owner)
                .filter_map(|a| depth.get(a.as_str()).copied())
                .min()
                .unwrap_or(usize::MAX)
        };
        let mut events: Vec<&Event> = obs.conflicts.iter().collect();
        match self.rule {
            HeuristicRule::MostAttendees => events.sort_by(|a, b| {
                b.attendees.len().cmp(&a.attendees.len()).then_with(|| a.event_id.cmp(&b.event_id))
            }),
            HeuristicRule::EarliestStart => {
                events.sort_by(|a, b| a.start.cmp(&b.start).then_with(|| a.event_id.cmp(&b.event_id)))
            }
            HeuristicRule::SeniorAttendeeFirst => {
                events.sort_by(|a, b| seniority(a).cmp(&seniority(b)).then_with(|| a.event_id.cmp(&b.event_id)))
            }
        }
        let ranking = events.into_iter().map(|e| e.event_id.clone()).collect();
        decision_from_ranking(ranking, self.rule.id())
    }
}

impl Agent for HeuristicAgent {
    fn name(&self) -> String {
        format!("heuristic:{}", self.rule.id())
    }

    fn act(&mut self, obs: &Observation) -> AgentReply {
        AgentReply::text(render_decision(&self.decide(obs)))
    }
}

/// Trace header fields not derivable from the dataset.
#[derive(Debug, Clone, Default)]
pub struct RunMeta {
    pub prompt_id: String,
    pub rollout_id: String,
    /// Digest to record when the episode runs on a truncated dataset; the
    /// dataset's own public digest otherwise.
    pub dataset_digest: Option<String>,
}

/// Drive one episode to completion and return its trace.
///
/// `on_round` sees each closed round as it is produced, so callers can
/// persist partial progress.
pub fn run_episode(
    agent: &mut dyn Agent,
    dataset: &ConflictDataset,
    org: &OrgChart,
    calendar: Option<&Calendar>,
    config: EnvConfig,
    meta: &RunMeta,
    mut on_round: impl FnMut(&EpisodeTrace),
) -> Result<EpisodeTrace, EnvError> {
    let (mut episode, mut obs) = Episode::reset(dataset, org, calendar, config)?;
    let mut trace = EpisodeTrace::new(TraceHeader {
        format_version: TRACE_FORMAT_VERSION,
        org_id: dataset.org_id.clone(),
        user_id: dataset.user_id.clone(),
        dataset_digest: meta.dataset_digest.clone().unwrap_or_else(|| dataset.public_digest()),
        prompt_id: meta.prompt_id.clone(),
        rollout_id: meta.rollout_id.clone(),
        agent: agent.name(),
        config,
        n_rounds: dataset.rounds.len(),
    });
    loop {
        match episode.step(agent.act(&obs))? {
            StepResult::Continue(next) => obs = *next,
            StepResult::RoundComplete { record, next } => {
                trace.rounds.push(*record);
                on_round(&trace);
                obs = *next;
            }
            StepResult::EpisodeComplete { record } => {
                trace.rounds.push(*record);
                trace.status = TerminalStatus::Complete;
                on_round(&trace);
                return Ok(trace);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar_gen::generate_regular_calendar;
    use crate::conflict_gen::{ConflictGenerator, ConflictParams};
    use crate::environment::{parse_agent_text, scan_for_truth, AgentAction};
    use crate::metrics::instance_metrics;
    use crate::org_schema::{builtin_schema, default_plan, instantiate_org};

    fn fixture(schema_name: &str, user: usize, m: usize, seed: u64) -> (ConflictDataset, OrgChart, UserProfile) {
        let schema = builtin_schema(schema_name).unwrap();
        let (org, profiles) = instantiate_org(&schema, &default_plan(schema_name).unwrap(), seed).unwrap();
        let p = profiles[user % profiles.len()].clone();
        let cal = generate_regular_calendar(&p, &org, 2025, seed).unwrap();
        let params = ConflictParams {
            m,
            ..ConflictParams::default()
        };
        let ds = ConflictGenerator::new(&org, &schema.adhoc_templates, params)
            .build_user_dataset(&p, &cal, seed)
            .unwrap();
        (ds, org, p)
    }

    fn run(agent: &mut dyn Agent, ds: &ConflictDataset, org: &OrgChart) -> EpisodeTrace {
        run_episode(agent, ds, org, None, EnvConfig::default(), &RunMeta::default(), |_| {}).unwrap()
    }

    #[test]
    fn oracle_is_perfect() {
        for (schema, user) in [("research-lab", 0), ("research-lab", 5), ("tech-company", 3)] {
            let (ds, org, p) = fixture(schema, user, 5, 21);
            let trace = run(&mut OracleAgent::new(p, org.clone()), &ds, &org);
            assert!(trace.is_complete());
            let report = instance_metrics(&trace, &ds).unwrap();
            assert_eq!(report.aer, 0.0);
            assert_eq!(report.avg_ord, Some(1.0));
            assert_eq!(report.err, 0.0);
            for (rec, round) in trace.rounds.iter().zip(&ds.rounds) {
                assert_eq!(rec.decision.as_ref().unwrap().ranking, round.truth_ranking);
            }
        }
    }

    #[test]
    fn scripted_agents_always_parse() {
        let (ds, org, _) = fixture("research-lab", 2, 5, 4);
        let mut agents: Vec<Box<dyn Agent>> = vec![Box::new(RandomAgent::new(1))];
        agents.extend(HeuristicRule::ALL.map(|r| Box::new(HeuristicAgent::new(r)) as Box<dyn Agent>));
        for mut agent in agents {
            let trace = run(agent.as_mut(), &ds, &org);
            assert!(trace.rounds.iter().all(|r| r.valid && r.k_t == 1), "{}", agent.name());
        }
    }

    #[test]
    fn random_is_deterministic_per_round() {
        let (ds, org, _) = fixture("research-lab", 1, 5, 8);
        let a = run(&mut RandomAgent::new(3), &ds, &org);
        let b = run(&mut RandomAgent::new(3), &ds, &org);
        let c = run(&mut RandomAgent::new(4), &ds, &org);
        assert_eq!(a.rounds, b.rounds);
        assert_ne!(a.rounds, c.rounds);
    }

    #[test]
    fn observations_never_carry_truth() {
        let (ds, org, _) = fixture("tech-company", 1, 5, 2);
        let (mut ep, mut obs) = Episode::reset(&ds, &org, None, EnvConfig::default()).unwrap();
        let mut agent = RandomAgent::new(0);
        loop {
            assert!(scan_for_truth(&serde_json::to_value(&obs).unwrap()).is_empty());
            match ep.step(agent.act(&obs)).unwrap() {
                StepResult::Continue(o) | StepResult::RoundComplete { next: o, .. } => obs = *o,
                StepResult::EpisodeComplete { .. } => break,
            }
        }
    }

    fn with_conflicts(mut obs: Observation, events: Vec<Event>) -> Observation {
        obs.conflicts = events;
        obs
    }

    fn sample_obs() -> Observation {
        let (ds, org, _) = fixture("research-lab", 3, 5, 5);
        Episode::reset(&ds, &org, None, EnvConfig::default()).unwrap().1
    }

    fn accepted(agent: &mut dyn Agent, obs: &Observation) -> String {
        let ids = obs.event_ids();
        let AgentReply::Text { text } = agent.act(obs) else {
            panic!("scripted agents reply with text")
        };
        match parse_agent_text(&text, &ids).unwrap() {
            AgentAction::Decision(d) => d.accept,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn most_attendees_picks_the_largest_meeting() {
        let obs = sample_obs();
        let owner = obs.context.user.member_id.clone();
        let others: Vec<String> = obs
            .context
            .members
            .iter()
            .map(|m| m.member_id.clone())
            .filter(|m| *m != owner)
            .take(4)
            .collect();
        let base = obs.conflicts[0].clone();
        let sizes = [3usize, 1, 2, 1, 1];
        let events = sizes
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let mut e = base.clone();
                e.event_id = format!("e{}", i + 1);
                e.attendees = std::iter::once(owner.clone()).chain(others[..k].iter().cloned()).collect();
                e
            })
            .collect();
        let obs = with_conflicts(obs, events);
        assert_eq!(accepted(&mut HeuristicAgent::new(HeuristicRule::MostAttendees), &obs), "e1");
    }

    #[test]
    fn heuristic_ties_break_by_event_id() {
        let obs = sample_obs();
        let base = obs.conflicts[0].clone();
        let events = ["e3", "e1", "e2"]
            .iter()
            .map(|id| {
                let mut e = base.clone();
                e.event_id = id.to_string();
                e
            })
            .collect();
        let obs = with_conflicts(obs, events);
        for rule in HeuristicRule::ALL {
            let d = HeuristicAgent::new(rule).decide(&obs);
            assert_eq!(d.ranking, ["e1", "e2", "e3"], "{}", rule.id());
        }
    }

    #[test]
    fn earliest_start_and_seniority() {
        let obs = sample_obs();
        let owner = obs.context.user.member_id.clone();
        let mut by_depth: Vec<(usize, String)> = depths(&obs)
            .into_iter()
            .filter(|(id, _)| *id != owner)
            .map(|(id, d)| (d, id.to_string()))
            .collect();
        by_depth.sort();
        let root = by_depth[0].1.clone();
        let leaf = by_depth.last().unwrap().1.clone();
        assert!(by_depth[0].0 < by_depth.last().unwrap().0);
        let base = obs.conflicts[0].clone();
        let mut a = base.clone();
        a.event_id = "e1".into();
        a.attendees = vec![owner.clone(), leaf];
        let mut b = base.clone();
        b.event_id = "e2".into();
        b.attendees = vec![owner.clone(), root];
        b.start = a.start - chrono::Duration::minutes(5);
        let obs = with_conflicts(obs, vec![a, b]);
        assert_eq!(HeuristicAgent::new(HeuristicRule::EarliestStart).decide(&obs).accept, "e2");
        assert_eq!(HeuristicAgent::new(HeuristicRule::SeniorAttendeeFirst).decide(&obs).accept, "e2");
    }
}
