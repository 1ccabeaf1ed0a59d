use std::collections::BTreeSet;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{ConflictReason, DecisionContext};
use crate::calendar_gen::{Event, EventType, Modality};

/// Declarative patch over event metadata. Timeslots are never touched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum PatchOp {
    SetUrgency { urgency: bool },
    /// Adds the owner's supervisor if they hold `role_id`, else the first
    /// member with that role who is not already attending. No-op when the org
    /// has no such member.
    AddAttendeeOfRole { role_id: String },
    /// Deadline marker placed `hours_after_start` hours after the event start
    /// (may be negative, down to one week before).
    SetDeadlineMarker { hours_after_start: i64 },
    SetModality { modality: Modality },
    /// `{title}` expands to the current title.
    RetitleFromTemplate { template: String },
    SetEventType { event_type: EventType },
}

impl PatchOp {
    pub(super) fn validate(&self, role_ids: &BTreeSet<&str>) -> Result<(), String> {
        match self {
            PatchOp::AddAttendeeOfRole { role_id } if !role_ids.contains(role_id.as_str()) => {
                Err(format!("add-attendee-of-role references unknown role {role_id:?}"))
            }
            PatchOp::SetDeadlineMarker { hours_after_start } if *hours_after_start < -7 * 24 => {
                Err("deadline marker must be at most 7 days before the event start".into())
            }
            PatchOp::RetitleFromTemplate { template } if template.trim().is_empty() => {
                Err("empty retitle template".into())
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, event: &mut Event, ctx: &DecisionContext<'_>) {
        match self {
            PatchOp::SetUrgency { urgency } => event.urgency = *urgency,
            PatchOp::AddAttendeeOfRole { role_id } => {
                let supervisor = ctx
                    .org
                    .member(ctx.owner)
                    .and_then(|m| m.supervisor.as_deref())
                    .filter(|s| ctx.org.role_of(s) == Some(role_id.as_str()));
                let pick = supervisor
                    .filter(|s| !event.attendees.iter().any(|a| a == s))
                    .map(str::to_string)
                    .or_else(|| {
                        ctx.org
                            .members_with_role(role_id)
                            .find(|m| m.member_id != ctx.owner && !event.attendees.contains(&m.member_id))
                            .map(|m| m.member_id.clone())
                    });
                if let Some(id) = pick {
                    event.attendees.push(id);
                }
            }
            PatchOp::SetDeadlineMarker { hours_after_start } => {
                event.deadline_marker = Some(event.start + Duration::hours(*hours_after_start));
            }
            PatchOp::SetModality { modality } => event.modality = *modality,
            PatchOp::RetitleFromTemplate { template } => {
                event.title = template.replace("{title}", &event.title);
            }
            PatchOp::SetEventType { event_type } => event.event_type = *event_type,
        }
    }
}

/// Apply a conflict reason's patch list to a copy of `event`.
pub fn apply_transform(reason: &ConflictReason, event: &Event, ctx: &DecisionContext<'_>) -> Event {
    let mut out = event.clone();
    for op in &reason.transform {
        op.apply(&mut out, ctx);
    }
    out
}
