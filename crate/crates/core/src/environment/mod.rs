//! Sequential conflict-resolution episodes with the strategy hub.
//!
//! An episode walks the rounds of one user's dataset in order. Each round
//! allows at most `K` turns; a turn is either a hub action (list or update),
//! which keeps the round open, or a decision, which closes it. Parse
//! failures other than malformed hub commands, transport failures and
//! running out of turns all close the round as invalid.

mod grammar;
mod hub;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use grammar::{parse_agent_text, render_action, render_decision, AgentAction, Decision, FailureCode, ParseFailure};
pub use hub::{HubError, HubOp, StrategyEntry, StrategyHub, DEFAULT_HUB_CAPACITY, MAX_ENTRY_CHARS};

use crate::calendar_gen::{Calendar, Event};
use crate::conflict_gen::{ConflictDataset, Timeslot};
use crate::digest::json_digest;
use crate::org_schema::OrgChart;

pub const TRACE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_MAX_TURNS: usize = 6;
pub const DEFAULT_WINDOW: usize = 20;

/// Keys that must never appear in anything shown to an agent.
pub const RESERVED_KEYS: [&str; 9] = [
    "truth_accept",
    "truth_ranking",
    "provenance",
    "principle_id",
    "principles",
    "weight",
    "scores",
    "score",
    "anchor_label",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// History window W.
    pub window: usize,
    /// Turn budget K per round.
    pub max_turns: usize,
    pub hub_capacity: usize,
    /// Empty the hub at the start of every round instead of carrying it.
    #[serde(default)]
    pub hub_reset_per_round: bool,
    /// Show the user's regular events for the round's week.
    #[serde(default)]
    pub include_calendar: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            window: DEFAULT_WINDOW,
            max_turns: DEFAULT_MAX_TURNS,
            hub_capacity: DEFAULT_HUB_CAPACITY,
            hub_reset_per_round: false,
            include_calendar: false,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("dataset has no rounds")]
    EmptyDataset,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("episode is complete")]
    EpisodeComplete,
    #[error("user {0} is not a member of the org chart")]
    UnknownUser(String),
    #[error("replay diverged at round {round}: {detail}")]
    ReplayMismatch { round: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberCard {
    pub member_id: String,
    pub person_name: String,
    pub role_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervisor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationContext {
    pub org_name: String,
    pub mission: String,
    pub utc_offset: String,
    pub user: MemberCard,
    pub responsibilities: Vec<String>,
    pub members: Vec<MemberCard>,
}

/// A resolved past round as the user actually decided it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round_id: String,
    pub events: Vec<Event>,
    pub accepted: String,
    pub declined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub context: ObservationContext,
    pub history: Vec<HistoryEntry>,
    pub round_id: String,
    pub timeslot: Timeslot,
    pub conflicts: Vec<Event>,
    pub hub_snapshot: Vec<StrategyEntry>,
    pub hub_capacity: usize,
    /// 1-based.
    pub round_index: usize,
    pub n_rounds: usize,
    /// 1-based.
    pub turn_index: usize,
    pub max_turns: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_feedback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calendar: Option<Vec<Event>>,
}

impl Observation {
    pub fn event_ids(&self) -> Vec<&str> {
        self.conflicts.iter().map(|e| e.event_id.as_str()).collect()
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

/// Reserved keys found anywhere in `value`, with their JSON paths.
pub fn scan_for_truth(value: &Value) -> Vec<String> {
    fn walk(v: &Value, path: &str, out: &mut Vec<String>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let p = format!("{path}.{k}");
                    if RESERVED_KEYS.contains(&k.as_str()) {
                        out.push(p.clone());
                    }
                    walk(child, &p, out);
                }
            }
            Value::Array(items) => {
                for (i, child) in items.iter().enumerate() {
                    walk(child, &format!("{path}[{i}]"), out);
                }
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(value, "$", &mut out);
    out
}

/// What the agent produced for one turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentReply {
    Text { text: String },
    TransportFailure { detail: String },
}

impl AgentReply {
    pub fn text(s: impl Into<String>) -> Self {
        AgentReply::Text { text: s.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TurnParse {
    Action { action: AgentAction },
    Failure { failure: ParseFailure },
    NotParsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub turn: usize,
    pub obs_digest: String,
    pub reply: AgentReply,
    pub parsed: TurnParse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round_index: usize,
    pub round_id: String,
    pub turns: Vec<TurnRecord>,
    pub hub_after: Vec<StrategyEntry>,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<String>,
    pub u_t: bool,
    pub k_t: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_consistent: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub format_version: u32,
    pub org_id: String,
    pub user_id: String,
    pub dataset_digest: String,
    pub prompt_id: String,
    pub rollout_id: String,
    pub agent: String,
    pub config: EnvConfig,
    pub n_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalStatus {
    Complete,
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub rounds: Vec<RoundRecord>,
    pub status: TerminalStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum TraceLine {
    Header(TraceHeader),
    Round(RoundRecord),
    End { n_rounds: usize },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("trace has no header line")]
    MissingHeader,
    #[error("trace line {0}: unexpected record")]
    Unexpected(usize),
}

impl EpisodeTrace {
    pub fn new(header: TraceHeader) -> Self {
        EpisodeTrace {
            header,
            rounds: Vec::new(),
            status: TerminalStatus::Incomplete,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == TerminalStatus::Complete
    }

    /// JSON Lines: a header, one line per round, and an end marker once
    /// complete.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), TraceError> {
        write_line(&mut w, &TraceLine::Header(self.header.clone()))?;
        for r in &self.rounds {
            write_line(&mut w, &TraceLine::Round(r.clone()))?;
        }
        if self.is_complete() {
            write_line(&mut w, &TraceLine::End {
                n_rounds: self.rounds.len(),
            })?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("json is utf-8")
    }

    /// Read a trace; a file without its end marker loads as incomplete.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut trace: Option<EpisodeTrace> = None;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine = serde_json::from_str(&line).map_err(|source| TraceError::Parse { line: i + 1, source })?;
            match (parsed, trace.as_mut()) {
                (TraceLine::Header(h), None) => trace = Some(EpisodeTrace::new(h)),
                (TraceLine::Round(r), Some(t)) if !t.is_complete() => t.rounds.push(r),
                (TraceLine::End { n_rounds }, Some(t)) if n_rounds == t.rounds.len() => t.status = TerminalStatus::Complete,
                _ => return Err(TraceError::Unexpected(i + 1)),
            }
        }
        trace.ok_or(TraceError::MissingHeader)
    }
}

fn write_line<W: Write>(w: &mut W, line: &TraceLine) -> Result<(), TraceError> {
    serde_json::to_writer(&mut *w, line).map_err(|e| TraceError::Io(e.into()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Outcome of one `step` call.
#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    /// Same round, next turn.
    Continue(Box<Observation>),
    RoundComplete {
        record: Box<RoundRecord>,
        next: Box<Observation>,
    },
    EpisodeComplete {
        record: Box<RoundRecord>,
    },
}

/// One user's episode. Single-threaded; steps are strictly sequential.
pub struct Episode {
    dataset: ConflictDataset,
    context: ObservationContext,
    calendar: Option<Calendar>,
    config: EnvConfig,
    hub: StrategyHub,
    /// 0-based index of the open round.
    t: usize,
    turns: Vec<TurnRecord>,
    u_t: bool,
    feedback: Option<String>,
    done: bool,
}

impl Episode {
    /// Start an episode: empty hub, empty history, round 1, turn 1.
    pub fn reset(
        dataset: &ConflictDataset,
        org: &OrgChart,
        calendar: Option<&Calendar>,
        config: EnvConfig,
    ) -> Result<(Episode, Observation), EnvError> {
        if dataset.rounds.is_empty() {
            return Err(EnvError::EmptyDataset);
        }
        if config.max_turns == 0 || config.hub_capacity == 0 {
            return Err(EnvError::InvalidConfig("max_turns and hub_capacity must be >= 1".into()));
        }
        let card = |m: &crate::org_schema::Member| MemberCard {
            member_id: m.member_id.clone(),
            person_name: m.person_name.clone(),
            role_id: m.role_id.clone(),
            title: m.title.clone(),
            supervisor: m.supervisor.clone(),
        };
        let user = org
            .member(&dataset.user_id)
            .ok_or_else(|| EnvError::UnknownUser(dataset.user_id.clone()))?;
        let context = ObservationContext {
            org_name: org.name.clone(),
            mission: org.mission.clone(),
            utc_offset: org.utc_offset.clone(),
            user: card(user),
            responsibilities: user.responsibilities.clone(),
            members: org.members.iter().map(card).collect(),
        };
        let episode = Episode {
            dataset: dataset.clone(),
            context,
            calendar: calendar.cloned(),
            config,
            hub: StrategyHub::new(config.hub_capacity),
            t: 0,
            turns: Vec::new(),
            u_t: false,
            feedback: None,
            done: false,
        };
        let obs = episode.observation();
        Ok((episode, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn hub(&self) -> &StrategyHub {
        &self.hub
    }

    /// Observation for the open round and turn.
    pub fn observation(&self) -> Observation {
        let round = &self.dataset.rounds[self.t.min(self.dataset.rounds.len() - 1)];
        let from = self.t.saturating_sub(self.config.window);
        let history = self.dataset.rounds[from..self.t]
            .iter()
            .map(|r| HistoryEntry {
                round_id: r.round_id.clone(),
                events: r.events.clone(),
                accepted: r.truth_accept.clone(),
                declined: r
                    .events
                    .iter()
                    .map(|e| e.event_id.clone())
                    .filter(|id| id != &r.truth_accept)
                    .collect(),
            })
            .collect();
        let calendar = match (&self.calendar, self.config.include_calendar) {
            (Some(cal), true) => Some(cal.events_in_week(round.week).into_iter().cloned().collect()),
            _ => None,
        };
        Observation {
            context: self.context.clone(),
            history,
            round_id: round.round_id.clone(),
            timeslot: round.timeslot,
            conflicts: round.events.clone(),
            hub_snapshot: self.hub.entries().to_vec(),
            hub_capacity: self.hub.capacity(),
            round_index: self.t + 1,
            n_rounds: self.dataset.rounds.len(),
            turn_index: self.turns.len() + 1,
            max_turns: self.config.max_turns,
            tool_feedback: self.feedback.clone(),
            calendar,
        }
    }

    /// Render an action in the grammar and step with it.
    pub fn step_action(&mut self, action: &AgentAction) -> Result<StepResult, EnvError> {
        self.step(AgentReply::text(render_action(action)))
    }

    pub fn step(&mut self, reply: AgentReply) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeComplete);
        }
        let obs_digest = self.observation().digest();
        let turn = self.turns.len() + 1;
        let round_number = self.t + 1;
        let ids: Vec<String> = self.dataset.rounds[self.t].events.iter().map(|e| e.event_id.clone()).collect();
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();

        let mut close: Option<Result<Decision, String>> = None;
        let mut feedback = None;
        let parsed = match &reply {
            AgentReply::TransportFailure { detail } => {
                close = Some(Err("transport-failure".to_string()));
                feedback = Some(format!("transport failure: {detail}"));
                TurnParse::NotParsed
            }
            AgentReply::Text { text } => match parse_agent_text(text, &id_refs) {
                Ok(action) => {
                    match &action {
                        AgentAction::HubList => {
                            self.u_t = true;
                            feedback = Some(format!(
                                "hub list: {} of {} entries shown in hub_snapshot",
                                self.hub.len(),
                                self.hub.capacity()
                            ));
                        }
                        AgentAction::HubUpdate { ops } => match self.hub.apply(ops, round_number) {
                            Ok(()) => {
                                self.u_t = true;
                                feedback = Some(format!("hub update applied: {} of {} entries", self.hub.len(), self.hub.capacity()));
                            }
                            Err(e) => feedback = Some(format!("hub error: {e}; hub unchanged")),
                        },
                        AgentAction::Decision(d) => close = Some(Ok(d.clone())),
                    }
                    TurnParse::Action { action }
                }
                Err(failure) => {
                    if failure.code == FailureCode::BadHubCommand {
                        feedback = Some(format!("hub error: {failure}"));
                    } else {
                        close = Some(Err(failure.code.to_string()));
                    }
                    TurnParse::Failure { failure }
                }
            },
        };
        self.turns.push(TurnRecord {
            turn,
            obs_digest,
            reply,
            parsed,
            feedback: feedback.clone(),
        });
        if close.is_none() && self.turns.len() >= self.config.max_turns {
            close = Some(Err("turn-limit".to_string()));
        }
        match close {
            None => {
                self.feedback = feedback;
                Ok(StepResult::Continue(Box::new(self.observation())))
            }
            Some(outcome) => {
                let record = self.close_round(outcome);
                if self.done {
                    Ok(StepResult::EpisodeComplete { record: Box::new(record) })
                } else {
                    Ok(StepResult::RoundComplete {
                        record: Box::new(record),
                        next: Box::new(self.observation()),
                    })
                }
            }
        }
    }

    fn close_round(&mut self, outcome: Result<Decision, String>) -> RoundRecord {
        let round = &self.dataset.rounds[self.t];
        let (valid, decision, invalid_reason) = match outcome {
            Ok(d) => (true, Some(d), None),
            Err(reason) => (false, None, Some(reason)),
        };
        let record = RoundRecord {
            round_index: self.t + 1,
            round_id: round.round_id.clone(),
            turns: std::mem::take(&mut self.turns),
            hub_after: self.hub.entries().to_vec(),
            valid,
            self_consistent: decision.as_ref().map(Decision::self_consistent),
            decision,
            invalid_reason,
            u_t: self.u_t,
            k_t: 0,
        };
        let record = RoundRecord {
            k_t: record.turns.len(),
            ..record
        };
        self.u_t = false;
        self.feedback = None;
        self.t += 1;
        if self.t >= self.dataset.rounds.len() {
            self.done = true;
        } else if self.config.hub_reset_per_round {
            self.hub.clear();
        }
        record
    }
}

/// Re-feed every recorded reply through a fresh episode and check that the
/// resulting round records match the recorded ones exactly.
pub fn replay(
    trace: &EpisodeTrace,
    dataset: &ConflictDataset,
    org: &OrgChart,
    calendar: Option<&Calendar>,
) -> Result<EpisodeTrace, EnvError> {
    let (mut episode, _) = Episode::reset(dataset, org, calendar, trace.header.config)?;
    let mut out = EpisodeTrace::new(trace.header.clone());
    for recorded in &trace.rounds {
        let mut produced = None;
        for turn in &recorded.turns {
            match episode.step(turn.reply.clone())? {
                StepResult::Continue(_) => {}
                StepResult::RoundComplete { record, .. } => produced = Some(*record),
                StepResult::EpisodeComplete { record } => {
                    produced = Some(*record);
                    out.status = TerminalStatus::Complete;
                }
            }
        }
        let produced = produced.ok_or_else(|| EnvError::ReplayMismatch {
            round: recorded.round_index,
            detail: "recorded turns did not close the round".into(),
        })?;
        if &produced != recorded {
            return Err(EnvError::ReplayMismatch {
                round: recorded.round_index,
                detail: "round record differs from the recording".into(),
            });
        }
        out.rounds.push(produced);
    }
    if out.status != trace.status {
        return Err(EnvError::ReplayMismatch {
            round: out.rounds.len(),
            detail: "terminal status differs".into(),
        });
    }
    Ok(out)
}
