//! Versioned prompt templates with `{{placeholder}}` substitution.
//!
//! Each template file holds a system part and a user part separated by a
//! line containing only `---`.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::calendar_gen::Event;
use crate::environment::Observation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PromptTemplate {
    #[default]
    Default,
    React,
    MemReact,
    Hub,
}

impl PromptTemplate {
    pub const ALL: [PromptTemplate; 4] = [
        PromptTemplate::Default,
        PromptTemplate::React,
        PromptTemplate::MemReact,
        PromptTemplate::Hub,
    ];

    pub fn id(self) -> &'static str {
        match self {
            PromptTemplate::Default => "default",
            PromptTemplate::React => "react",
            PromptTemplate::MemReact => "mem-react",
            PromptTemplate::Hub => "hub",
        }
    }

    pub fn parse(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.id() == id)
    }

    fn source(self) -> &'static str {
        match self {
            PromptTemplate::Default => include_str!("../../prompts/default.txt"),
            PromptTemplate::React => include_str!("../../prompts/react.txt"),
            PromptTemplate::MemReact => include_str!("../../prompts/mem_react.txt"),
            PromptTemplate::Hub => include_str!("../../prompts/hub.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn describe_event(e: &Event, names: &BTreeMap<&str, String>) -> String {
    let who: Vec<String> = e
        .attendees
        .iter()
        .map(|a| names.get(a.as_str()).cloned().unwrap_or_else(|| a.clone()))
        .collect();
    let mut s = format!(
        "- {}: \"{}\" {}-{} ({}) | attendees: {} | type: {} | modality: {} | location: {}",
        e.event_id,
        e.title,
        e.start.format("%Y-%m-%d %H:%M"),
        e.end.format("%H:%M"),
        e.start.format("%a"),
        who.join(", "),
        kebab(&e.event_type),
        kebab(&e.modality),
        e.location
    );
    if e.urgency {
        s.push_str(" | urgent");
    }
    if let Some(d) = e.deadline_marker {
        let _ = write!(s, " | deadline: {}", d.format("%Y-%m-%d %H:%M"));
    }
    for c in &e.constraints {
        let _ = write!(s, " | {} constraint: {}", kebab(&c.kind), c.tag);
    }
    if !e.description.is_empty() {
        let _ = write!(s, "\n  {}", e.description);
    }
    s
}

/// Substitution values for an observation.
pub fn placeholders(obs: &Observation) -> BTreeMap<&'static str, String> {
    let ctx = &obs.context;
    let names: BTreeMap<&str, String> = ctx
        .members
        .iter()
        .map(|m| (m.member_id.as_str(), format!("{} ({})", m.person_name, m.title)))
        .collect();
    let person: BTreeMap<&str, &str> = ctx.members.iter().map(|m| (m.member_id.as_str(), m.person_name.as_str())).collect();
    let members = ctx
        .members
        .iter()
        .map(|m| {
            let sup = m
                .supervisor
                .as_deref()
                .and_then(|s| person.get(s))
                .map(|s| format!(", reports to {s}"))
                .unwrap_or_default();
            format!("- {} ({}): {}{}", m.person_name, m.member_id, m.title, sup)
        })
        .collect::<Vec<_>>()
        .join("\n");
    let history = if obs.history.is_empty() {
        "(none yet)".to_string()
    } else {
        obs.history
            .iter()
            .map(|h| {
                let events = h.events.iter().map(|e| describe_event(e, &names)).collect::<Vec<_>>().join("\n");
                format!("{}:\n{}\n  accepted: {}; declined: {}", h.round_id, events, h.accepted, h.declined.join(", "))
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    };
    let calendar = match &obs.calendar {
        Some(events) if !events.is_empty() => format!(
            "\nRegular events this week:\n{}\n",
            events.iter().map(|e| describe_event(e, &names)).collect::<Vec<_>>().join("\n")
        ),
        _ => String::new(),
    };
    let hub = if obs.hub_snapshot.is_empty() {
        "(empty)".to_string()
    } else {
        obs.hub_snapshot
            .iter()
            .map(|e| match &e.weight_tag {
                Some(w) => format!("- {}: {} [weight: {w}]", e.id, e.text),
                None => format!("- {}: {}", e.id, e.text),
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut map = BTreeMap::new();
    map.insert("org_name", ctx.org_name.clone());
    map.insert("mission", ctx.mission.clone());
    map.insert("utc_offset", ctx.utc_offset.clone());
    map.insert("user_name", ctx.user.person_name.clone());
    map.insert("user_id", ctx.user.member_id.clone());
    map.insert("user_title", ctx.user.title.clone());
    map.insert("responsibilities", ctx.responsibilities.iter().map(|r| format!("- {r}")).collect::<Vec<_>>().join("\n"));
    map.insert("members", members);
    map.insert("history", history);
    map.insert("calendar", calendar);
    map.insert(
        "timeslot",
        format!("{} to {}", obs.timeslot.start.format("%Y-%m-%d %H:%M"), obs.timeslot.end.format("%H:%M")),
    );
    map.insert("conflicts", obs.conflicts.iter().map(|e| describe_event(e, &names)).collect::<Vec<_>>().join("\n"));
    map.insert("hub", hub);
    map.insert("hub_size", obs.hub_snapshot.len().to_string());
    map.insert("hub_capacity", obs.hub_capacity.to_string());
    map.insert("round_index", obs.round_index.to_string());
    map.insert("n_rounds", obs.n_rounds.to_string());
    map.insert("turn_index", obs.turn_index.to_string());
    map.insert("max_turns", obs.max_turns.to_string());
    map.insert(
        "feedback",
        obs.tool_feedback.as_ref().map(|f| format!("\nTool feedback: {f}")).unwrap_or_default(),
    );
    map
}

fn substitute(template: &str, values: &BTreeMap<&'static str, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(i) = rest.find("{{") {
        out.push_str(&rest[..i]);
        let after = &rest[i + 2..];
        match after.find("}}") {
            Some(j) if values.contains_key(&after[..j]) => {
                out.push_str(&values[&after[..j]]);
                rest = &after[j + 2..];
            }
            _ => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// System and user messages for one turn.
pub fn render_messages(template: PromptTemplate, obs: &Observation) -> Vec<ChatMessage> {
    let values = placeholders(obs);
    let (system, user) = template
        .source()
        .split_once("\n---\n")
        .expect("template has a system/user separator");
    vec![
        ChatMessage {
            role: "system".into(),
            content: substitute(system, &values).trim().to_string(),
        },
        ChatMessage {
            role: "user".into(),
            content: substitute(user, &values).trim().to_string(),
        },
    ]
}
