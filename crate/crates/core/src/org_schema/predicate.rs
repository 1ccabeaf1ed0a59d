use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{DecisionContext, PriorityPrinciple};
use crate::calendar_gen::{Event, EventType, Modality};

pub const MAX_PREDICATE_DEPTH: usize = 8;

/// Attribute-test tree used as a principle trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "kebab-case")]
pub enum Predicate {
    All { of: Vec<Predicate> },
    Any { of: Vec<Predicate> },
    Not { inner: Box<Predicate> },
    /// Some attendee other than the owner holds `role_id`.
    AttendeeRoleContains { role_id: String },
    EventTypeEquals { event_type: EventType },
    UrgencyFlagSet,
    /// A deadline marker falls between the event start and `hours` after it.
    DeadlineWithinHours { hours: u32 },
    ModalityEquals { modality: Modality },
    /// Case-insensitive substring match on the title.
    TitleContainsTag { tag: String },
}

impl Predicate {
    pub fn depth(&self) -> usize {
        match self {
            Predicate::All { of } | Predicate::Any { of } => {
                1 + of.iter().map(Predicate::depth).max().unwrap_or(0)
            }
            Predicate::Not { inner } => 1 + inner.depth(),
            _ => 1,
        }
    }

    pub(super) fn validate(&self, role_ids: &BTreeSet<&str>) -> Result<(), String> {
        if self.depth() > MAX_PREDICATE_DEPTH {
            return Err(format!("predicate depth {} exceeds {MAX_PREDICATE_DEPTH}", self.depth()));
        }
        self.validate_leaves(role_ids)
    }

    fn validate_leaves(&self, role_ids: &BTreeSet<&str>) -> Result<(), String> {
        match self {
            Predicate::All { of } | Predicate::Any { of } => {
                if of.is_empty() {
                    return Err("combinator with no children".into());
                }
                of.iter().try_for_each(|p| p.validate_leaves(role_ids))
            }
            Predicate::Not { inner } => inner.validate_leaves(role_ids),
            Predicate::AttendeeRoleContains { role_id } if !role_ids.contains(role_id.as_str()) => {
                Err(format!("attendee-role-contains references unknown role {role_id:?}"))
            }
            Predicate::DeadlineWithinHours { hours: 0 } => Err("deadline-within-hours needs hours > 0".into()),
            Predicate::TitleContainsTag { tag } if tag.trim().is_empty() => Err("empty title tag".into()),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, event: &Event, ctx: &DecisionContext<'_>) -> bool {
        match self {
            Predicate::All { of } => of.iter().all(|p| p.eval(event, ctx)),
            Predicate::Any { of } => of.iter().any(|p| p.eval(event, ctx)),
            Predicate::Not { inner } => !inner.eval(event, ctx),
            Predicate::AttendeeRoleContains { role_id } => event
                .attendees
                .iter()
                .filter(|a| a.as_str() != ctx.owner)
                .any(|a| ctx.org.role_of(a) == Some(role_id.as_str())),
            Predicate::EventTypeEquals { event_type } => event.event_type == *event_type,
            Predicate::UrgencyFlagSet => event.urgency,
            Predicate::DeadlineWithinHours { hours } => event.deadline_marker.is_some_and(|d| {
                let lead = d.signed_duration_since(event.start).num_minutes();
                (0..=i64::from(*hours) * 60).contains(&lead)
            }),
            Predicate::ModalityEquals { modality } => event.modality == *modality,
            Predicate::TitleContainsTag { tag } => event.title.to_lowercase().contains(&tag.to_lowercase()),
        }
    }
}

/// Trigger value g_k(e, ctx) as 0/1 truth.
pub fn evaluate_trigger(principle: &PriorityPrinciple, event: &Event, ctx: &DecisionContext<'_>) -> bool {
    principle.trigger.eval(event, ctx)
}
