//! Year-long calendars of regular, non-overlapping events.
//!
//! Week 1 starts on the Monday on or before January 1st; weeks 1..=52 are
//! generated. Weekly templates occur every week, biweekly templates on odd
//! weeks and monthly templates on the first preferred weekday of each month.
//! Events are placed greedily, earliest fit, inside business hours
//! (Mon-Fri, 09:00-18:00 by default) on a 15-minute grid.

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, TimeZone, Weekday};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::org_schema::{Cadence, Constraint, MeetingTemplate, OrgChart, RoleSelector, UserProfile};

pub const WEEKS_PER_YEAR: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventType {
    Coordination,
    Operations,
    Technical,
    Reading,
    ProfessionalDevelopment,
    External,
    Leadership,
    Mentoring,
    Personal,
    Administrative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    InPerson,
    Remote,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub event_id: String,
    pub title: String,
    pub start: DateTime<FixedOffset>,
    pub end: DateTime<FixedOffset>,
    /// Member ids; always includes the calendar owner.
    pub attendees: Vec<String>,
    pub event_type: EventType,
    pub location: String,
    pub modality: Modality,
    #[serde(default)]
    pub urgency: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_marker: Option<DateTime<FixedOffset>>,
    pub description: String,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

impl Event {
    pub fn duration_minutes(&self) -> i64 {
        (self.end - self.start).num_minutes()
    }

    /// Half-open interval intersection.
    pub fn overlaps(&self, other: &Event) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn validate(&self, owner: &str) -> Result<(), String> {
        if self.start >= self.end {
            return Err(format!("event {}: start must precede end", self.event_id));
        }
        if !self.attendees.iter().any(|a| a == owner) {
            return Err(format!("event {}: attendees must include owner {owner}", self.event_id));
        }
        if let Some(d) = self.deadline_marker {
            if d < self.start - Duration::days(7) {
                return Err(format!("event {}: deadline marker more than 7 days before start", self.event_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calendar {
    pub user_id: String,
    pub year: i32,
    pub events: Vec<Event>,
    /// Week number (1..=52) to the ids of events in that week.
    pub week_index: BTreeMap<u32, Vec<String>>,
}

impl Calendar {
    pub fn events_in_week(&self, week: u32) -> Vec<&Event> {
        let Some(ids) = self.week_index.get(&week) else { return Vec::new() };
        self.events.iter().filter(|e| ids.contains(&e.event_id)).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CalendarError {
    #[error("user {user_id}: week {week} overflows business hours while placing template {template_id}")]
    Placement {
        user_id: String,
        week: u32,
        template_id: String,
    },
    #[error("user {0} has no meeting templates")]
    NoTemplates(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusinessHours {
    /// Minutes after midnight.
    pub day_start: u32,
    pub day_end: u32,
    pub granularity: u32,
}

impl Default for BusinessHours {
    fn default() -> Self {
        BusinessHours {
            day_start: 9 * 60,
            day_end: 18 * 60,
            granularity: 15,
        }
    }
}

/// Monday on or before January 1st of `year`.
pub fn week_one_start(year: i32) -> NaiveDate {
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1).expect("valid year");
    jan1 - Duration::days(i64::from(jan1.weekday().num_days_from_monday()))
}

/// Week number (1-based) containing `date`, relative to [`week_one_start`].
pub fn week_of(year: i32, date: NaiveDate) -> i64 {
    (date - week_one_start(year)).num_days().div_euclid(7) + 1
}

fn first_weekday_of_month(year: i32, month: u32, day: Weekday) -> NaiveDate {
    let first = NaiveDate::from_ymd_opt(year, month, 1).expect("valid month");
    let delta = (7 + day.num_days_from_monday() - first.weekday().num_days_from_monday()) % 7;
    first + Duration::days(i64::from(delta))
}

pub(crate) fn at(offset: FixedOffset, date: NaiveDate, minutes: u32) -> DateTime<FixedOffset> {
    let naive = date.and_hms_opt(minutes / 60, minutes % 60, 0).expect("valid time of day");
    offset.from_local_datetime(&naive).single().expect("fixed offsets are unambiguous")
}

/// Fill in an event from a template: title variant, attendees, metadata.
pub(crate) fn instantiate_event<R: Rng>(
    template: &MeetingTemplate,
    owner: &str,
    org: &OrgChart,
    event_id: String,
    start: DateTime<FixedOffset>,
    end: DateTime<FixedOffset>,
    rng: &mut R,
) -> Event {
    let title_tpl = template
        .metadata_variants
        .title_templates
        .choose(rng)
        .expect("validated templates have titles");
    let mut attendees = vec![owner.to_string()];
    let owner_member = org.member(owner);
    let push = |id: &str, attendees: &mut Vec<String>| {
        if !attendees.iter().any(|a| a == id) {
            attendees.push(id.to_string());
        }
    };
    for sel in &template.attendee_pattern {
        match sel {
            RoleSelector::Supervisor => {
                if let Some(sup) = owner_member.and_then(|m| m.supervisor.as_deref()) {
                    push(sup, &mut attendees);
                }
            }
            RoleSelector::DirectReports => {
                for m in org.direct_reports(owner) {
                    push(&m.member_id, &mut attendees);
                }
            }
            RoleSelector::Peers => {
                if let Some(me) = owner_member {
                    for m in org.members_with_role(&me.role_id) {
                        push(&m.member_id, &mut attendees);
                    }
                }
            }
            RoleSelector::Role { role_id } => {
                for m in org.members_with_role(role_id) {
                    push(&m.member_id, &mut attendees);
                }
            }
            RoleSelector::SampleOfRole { role_id, count } => {
                let pool: Vec<&str> = org
                    .members_with_role(role_id)
                    .map(|m| m.member_id.as_str())
                    .filter(|id| !attendees.iter().any(|a| a == id))
                    .collect();
                for id in pool.choose_multiple(rng, *count) {
                    push(id, &mut attendees);
                }
            }
        }
    }
    let location = match template.metadata_variants.modality {
        Modality::Remote => "Video call".to_string(),
        _ => format!("{} {}", org.name, template.metadata_variants.location_type),
    };
    Event {
        event_id,
        title: title_tpl.replace("{topic}", &template.topic),
        start,
        end,
        attendees,
        event_type: template.event_type,
        location,
        modality: template.metadata_variants.modality,
        urgency: template.urgency,
        deadline_marker: None,
        description: template.topic.clone(),
        constraints: template.constraints.clone(),
    }
}

struct Placement<'a> {
    template: &'a MeetingTemplate,
    /// Day (0 = Monday) tried first.
    first_day: u32,
}

/// Generate the regular calendar with default business hours.
pub fn generate_regular_calendar(
    profile: &UserProfile,
    org: &OrgChart,
    year: i32,
    seed: u64,
) -> Result<Calendar, CalendarError> {
    generate_regular_calendar_with(profile, org, year, seed, BusinessHours::default())
}

pub fn generate_regular_calendar_with(
    profile: &UserProfile,
    org: &OrgChart,
    year: i32,
    seed: u64,
    hours: BusinessHours,
) -> Result<Calendar, CalendarError> {
    if profile.templates.is_empty() {
        return Err(CalendarError::NoTemplates(profile.user_id.clone()));
    }
    let mut rng = crate::seed::stream(seed, &["calendar", &profile.user_id]);
    let offset = org.offset();
    let week1 = week_one_start(year);

    let mut monthly: BTreeMap<u32, Vec<Placement<'_>>> = BTreeMap::new();
    for t in profile.templates.iter().filter(|t| t.cadence == Cadence::Monthly) {
        let day = t.preferred_day.unwrap_or(Weekday::Mon);
        for month in 1..=12 {
            let date = first_weekday_of_month(year, month, day);
            let week = week_of(year, date) as u32;
            monthly.entry(week).or_default().push(Placement {
                template: t,
                first_day: day.num_days_from_monday(),
            });
        }
    }

    let mut events = Vec::new();
    let mut week_index = BTreeMap::new();
    for week in 1..=WEEKS_PER_YEAR {
        let week_start = week1 + Duration::weeks(i64::from(week) - 1);
        let mut plan: Vec<Placement<'_>> = monthly.remove(&week).unwrap_or_default();
        for t in &profile.templates {
            let due = match t.cadence {
                Cadence::Weekly => true,
                Cadence::Biweekly => week % 2 == 1,
                Cadence::Monthly => false,
            };
            if due {
                plan.push(Placement {
                    template: t,
                    first_day: t.preferred_day.map_or(0, |d| d.num_days_from_monday()),
                });
            }
        }

        // busy[d] holds occupied [start, end) minute ranges for weekday d.
        let mut busy: [Vec<(u32, u32)>; 5] = Default::default();
        let mut ids = Vec::with_capacity(plan.len());
        for p in plan {
            let dur = p.template.duration_minutes;
            let preferred = p.template.preferred_start_minutes().unwrap_or(hours.day_start);
            let slot = (0..5).map(|i| (p.first_day + i) % 5).find_map(|day| {
                fit(&busy[day as usize], dur, preferred, hours).map(|start| (day, start))
            });
            let Some((day, start_min)) = slot else {
                return Err(CalendarError::Placement {
                    user_id: profile.user_id.clone(),
                    week,
                    template_id: p.template.template_id.clone(),
                });
            };
            busy[day as usize].push((start_min, start_min + dur));
            let date = week_start + Duration::days(i64::from(day));
            let event_id = format!("{}-w{:02}-{}", profile.user_id, week, p.template.template_id);
            let event = instantiate_event(
                p.template,
                &profile.user_id,
                org,
                event_id.clone(),
                at(offset, date, start_min),
                at(offset, date, start_min + dur),
                &mut rng,
            );
            ids.push(event_id);
            events.push(event);
        }
        week_index.insert(week, ids);
    }
    events.sort_by(|a, b| (a.start, &a.event_id).cmp(&(b.start, &b.event_id)));
    Ok(Calendar {
        user_id: profile.user_id.clone(),
        year,
        events,
        week_index,
    })
}

/// Earliest start at or after `preferred` (wrapping to the day start) where
/// `dur` minutes fit without touching any busy range.
fn fit(busy: &[(u32, u32)], dur: u32, preferred: u32, hours: BusinessHours) -> Option<u32> {
    let g = hours.granularity.max(1);
    let aligned = hours.day_start + (preferred.saturating_sub(hours.day_start)).div_ceil(g) * g;
    let latest = hours.day_end.checked_sub(dur)?;
    let candidates = (aligned..=latest)
        .step_by(g as usize)
        .chain((hours.day_start..aligned.min(latest + 1)).step_by(g as usize));
    for start in candidates {
        let end = start + dur;
        if busy.iter().all(|&(s, e)| end <= s || start >= e) {
            return Some(start);
        }
    }
    None
}

/// All pairs of events whose half-open intervals intersect.
pub fn validate_no_overlap(calendar: &Calendar) -> Result<(), Vec<(String, String)>> {
    let mut sorted: Vec<&Event> = calendar.events.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut pairs = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if b.start >= a.end {
                break;
            }
            pairs.push((a.event_id.clone(), b.event_id.clone()));
        }
    }
    if pairs.is_empty() {
        Ok(())
    } else {
        Err(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::org_schema::{builtin_schema, default_plan, instantiate_org, MetadataVariants};

    fn lab() -> (OrgChart, Vec<UserProfile>) {
        let schema = builtin_schema("research-lab").unwrap();
        instantiate_org(&schema, &default_plan("research-lab").unwrap(), 1).unwrap()
    }

    fn template(id: &str, cadence: Cadence, dur: u32) -> MeetingTemplate {
        MeetingTemplate {
            template_id: id.into(),
            topic: id.into(),
            cadence,
            duration_minutes: dur,
            attendee_pattern: vec![RoleSelector::Supervisor],
            constraints: vec![],
            metadata_variants: MetadataVariants {
                title_templates: vec!["{topic}".into()],
                location_type: "room".into(),
                modality: Modality::InPerson,
            },
            event_type: EventType::Coordination,
            urgency: false,
            preferred_day: None,
            preferred_start: None,
        }
    }

    fn with_templates(profile: &UserProfile, templates: Vec<MeetingTemplate>) -> UserProfile {
        UserProfile {
            templates,
            ..profile.clone()
        }
    }

    fn ev(id: &str, start: &str, end: &str) -> Event {
        Event {
            event_id: id.into(),
            title: id.into(),
            start: start.parse().unwrap(),
            end: end.parse().unwrap(),
            attendees: vec!["u".into()],
            event_type: EventType::Coordination,
            location: String::new(),
            modality: Modality::Remote,
            urgency: false,
            deadline_marker: None,
            description: String::new(),
            constraints: vec![],
        }
    }

    fn cal(events: Vec<Event>) -> Calendar {
        Calendar {
            user_id: "u".into(),
            year: 2025,
            events,
            week_index: BTreeMap::new(),
        }
    }

    #[test]
    fn week_one_starts_on_monday() {
        assert_eq!(week_one_start(2025), NaiveDate::from_ymd_opt(2024, 12, 30).unwrap());
        assert_eq!(week_one_start(2024), NaiveDate::from_ymd_opt(2024, 1, 1).unwrap());
    }

    #[test]
    fn weekly_templates_give_156_events() {
        let (org, profiles) = lab();
        let p = with_templates(
            &profiles[3],
            vec![
                template("a", Cadence::Weekly, 60),
                template("b", Cadence::Weekly, 30),
                template("c", Cadence::Weekly, 45),
            ],
        );
        let c = generate_regular_calendar(&p, &org, 2025, 0).unwrap();
        assert_eq!(c.events.len(), 156);
        assert!(validate_no_overlap(&c).is_ok());
    }

    #[test]
    fn biweekly_alternates_from_week_one() {
        let (org, profiles) = lab();
        let p = with_templates(&profiles[3], vec![template("bi", Cadence::Biweekly, 60)]);
        let c = generate_regular_calendar(&p, &org, 2025, 0).unwrap();
        assert_eq!(c.events.len(), 26);
        // Hand-enumerated: weeks 1, 3, 5, ..., 51.
        let weeks: Vec<u32> = c.week_index.iter().filter(|(_, ids)| !ids.is_empty()).map(|(w, _)| *w).collect();
        let expected: Vec<u32> = (0..26).map(|i| 1 + 2 * i).collect();
        assert_eq!(weeks, expected);
    }

    #[test]
    fn monthly_lands_once_per_month_on_first_weekday() {
        let (org, profiles) = lab();
        let mut t = template("m", Cadence::Monthly, 60);
        t.preferred_day = Some(Weekday::Thu);
        let p = with_templates(&profiles[3], vec![t]);
        let c = generate_regular_calendar(&p, &org, 2025, 0).unwrap();
        assert_eq!(c.events.len(), 12);
        for (i, e) in c.events.iter().enumerate() {
            let d = e.start.date_naive();
            assert_eq!(d.month() as usize, i + 1);
            assert_eq!(d.weekday(), Weekday::Thu);
            assert!(d.day() <= 7);
        }
    }

    #[test]
    fn builtin_calendars_are_conflict_free_with_exact_cadence_counts() {
        let (org, profiles) = lab();
        for p in &profiles {
            let c = generate_regular_calendar(p, &org, 2025, 9).unwrap();
            assert!(validate_no_overlap(&c).is_ok());
            for t in &p.templates {
                let n = c
                    .events
                    .iter()
                    .filter(|e| e.event_id.ends_with(&format!("-{}", t.template_id)))
                    .count();
                let expected = match t.cadence {
                    Cadence::Weekly => 52,
                    Cadence::Biweekly => 26,
                    Cadence::Monthly => 12,
                };
                assert_eq!(n, expected, "{}", t.template_id);
            }
            for e in &c.events {
                e.validate(&p.user_id).unwrap();
                for a in &e.attendees {
                    assert!(org.member(a).is_some());
                }
                let t = e.start.time();
                assert!(t >= chrono::NaiveTime::from_hms_opt(9, 0, 0).unwrap());
                assert!(e.end.time() <= chrono::NaiveTime::from_hms_opt(18, 0, 0).unwrap());
                assert!(e.start.weekday().num_days_from_monday() < 5);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (org, profiles) = lab();
        let a = generate_regular_calendar(&profiles[4], &org, 2025, 42).unwrap();
        let b = generate_regular_calendar(&profiles[4], &org, 2025, 42).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn overflowing_week_reports_week() {
        let (org, profiles) = lab();
        let templates = (0..6).map(|i| template(&format!("big{i}"), Cadence::Weekly, 480)).collect();
        let p = with_templates(&profiles[3], templates);
        let err = generate_regular_calendar(&p, &org, 2025, 0).unwrap_err();
        assert_eq!(
            err,
            CalendarError::Placement {
                user_id: p.user_id.clone(),
                week: 1,
                template_id: "big5".into()
            }
        );
    }

    #[test]
    fn overlap_detection_uses_half_open_intervals() {
        let c = cal(vec![
            ev("a", "2025-01-06T14:30:00+00:00", "2025-01-06T15:00:00+00:00"),
            ev("b", "2025-01-06T14:45:00+00:00", "2025-01-06T15:15:00+00:00"),
        ]);
        assert_eq!(validate_no_overlap(&c), Err(vec![("a".into(), "b".into())]));
        let c = cal(vec![
            ev("a", "2025-01-06T14:00:00+00:00", "2025-01-06T14:30:00+00:00"),
            ev("b", "2025-01-06T14:30:00+00:00", "2025-01-06T15:00:00+00:00"),
        ]);
        assert_eq!(validate_no_overlap(&c), Ok(()));
    }
}
