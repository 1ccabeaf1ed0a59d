//! Organizational schemas, user profiles and the hidden preference structure.
//!
//! A schema declares roles, and for each role the regular meeting templates,
//! the weighted priority principles and the conflict-reason operators that
//! govern that role's calendar decisions. [`instantiate_org`] turns a schema
//! plus per-role headcounts into a concrete org chart and one [`UserProfile`]
//! per member.

mod builtin;
mod names;
mod predicate;
mod transform;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{FixedOffset, Weekday};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar_gen::{Event, EventType, Modality};

pub use builtin::{builtin_schema, default_plan, BUILTIN_SCHEMAS};
pub use predicate::{evaluate_trigger, Predicate, MAX_PREDICATE_DEPTH};
pub use transform::{apply_transform, PatchOp};

/// Current on-disk schema format version.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse schema {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid schema at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("unsatisfiable supervision structure: {0}")]
    Unsatisfiable(String),
    #[error("unknown role in size plan: {0}")]
    UnknownRole(String),
    #[error("name list exhausted: cannot name {0} members")]
    NamesExhausted(usize),
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Role {
    pub role_id: String,
    pub title: String,
    pub department: String,
    pub responsibilities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervisor_role: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cadence {
    Weekly,
    Biweekly,
    Monthly,
}

/// Who, relative to the calendar owner, attends a templated meeting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "select", rename_all = "kebab-case")]
pub enum RoleSelector {
    /// The owner's direct supervisor.
    Supervisor,
    /// Everyone the owner supervises.
    DirectReports,
    /// Members sharing the owner's role (excluding the owner).
    Peers,
    /// Every member holding `role_id`.
    Role { role_id: String },
    /// Up to `count` members of `role_id`, drawn per event.
    SampleOfRole { role_id: String, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    /// Human-readable tag, e.g. "must be attended".
    pub tag: String,
    /// Machine key, e.g. "must-attend".
    pub key: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetadataVariants {
    /// Title templates; `{topic}` is replaced with the template topic.
    pub title_templates: Vec<String>,
    pub location_type: String,
    pub modality: Modality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeetingTemplate {
    pub template_id: String,
    pub topic: String,
    pub cadence: Cadence,
    pub duration_minutes: u32,
    pub attendee_pattern: Vec<RoleSelector>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    pub metadata_variants: MetadataVariants,
    pub event_type: EventType,
    #[serde(default)]
    pub urgency: bool,
    /// First weekday tried during placement (Mon-Fri). Monthly templates are
    /// anchored to the first such weekday of each month.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "weekday_opt")]
    pub preferred_day: Option<Weekday>,
    /// Preferred start time of day, "HH:MM".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_start: Option<String>,
}

impl MeetingTemplate {
    pub fn preferred_start_minutes(&self) -> Option<u32> {
        self.preferred_start.as_deref().and_then(parse_hhmm)
    }
}

pub(crate) fn parse_hhmm(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    (h < 24 && m < 60).then_some(h * 60 + m)
}

mod weekday_opt {
    use chrono::Weekday;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(day: &Option<Weekday>, s: S) -> Result<S::Ok, S::Error> {
        match day {
            Some(d) => s.serialize_str(&d.to_string().to_lowercase()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Weekday>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        raw.map(|s| s.parse::<Weekday>().map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityPrinciple {
    pub principle_id: String,
    pub description: String,
    pub weight: f64,
    pub trigger: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReason {
    pub reason_id: String,
    pub description: String,
    pub transform: Vec<PatchOp>,
}

/// Templates, principles and conflict reasons attached to one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleProfile {
    pub role_id: String,
    pub templates: Vec<MeetingTemplate>,
    pub principles: Vec<PriorityPrinciple>,
    pub conflict_reasons: Vec<ConflictReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrgSchema {
    pub schema_version: u32,
    pub org_id: String,
    pub name: String,
    pub mission: String,
    /// Fixed UTC offset for every timestamp in this org, e.g. "-05:00".
    pub utc_offset: String,
    pub roles: Vec<Role>,
    pub role_profiles: Vec<RoleProfile>,
    /// Low-stakes meeting shapes used only as fresh metadata for generated
    /// competitors; never placed on regular calendars.
    #[serde(default)]
    pub adhoc_templates: Vec<MeetingTemplate>,
}

impl OrgSchema {
    pub fn role(&self, role_id: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.role_id == role_id)
    }

    pub fn role_profile(&self, role_id: &str) -> Option<&RoleProfile> {
        self.role_profiles.iter().find(|p| p.role_id == role_id)
    }

    pub fn offset(&self) -> FixedOffset {
        parse_offset(&self.utc_offset).expect("validated schema has a parseable offset")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema always serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, SchemaError> {
        let schema: OrgSchema = serde_json::from_str(text).map_err(|source| SchemaError::Parse {
            path: origin.to_string(),
            source,
        })?;
        schema.validate()?;
        Ok(schema)
    }

    /// Check every schema invariant; errors name the offending path.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if parse_offset(&self.utc_offset).is_none() {
            return Err(invalid("utc_offset", format!("cannot parse offset {:?}", self.utc_offset)));
        }
        if self.roles.is_empty() {
            return Err(invalid("roles", "schema must declare at least one role"));
        }
        let mut role_ids = BTreeSet::new();
        for (i, role) in self.roles.iter().enumerate() {
            if role.role_id.trim().is_empty() {
                return Err(invalid(format!("roles[{i}].role_id"), "role_id must be non-empty"));
            }
            if !role_ids.insert(role.role_id.as_str()) {
                return Err(invalid(
                    format!("roles[{i}].role_id"),
                    format!("duplicate role_id {:?}", role.role_id),
                ));
            }
        }
        for (i, role) in self.roles.iter().enumerate() {
            if let Some(sup) = &role.supervisor_role {
                if !role_ids.contains(sup.as_str()) {
                    return Err(invalid(
                        format!("roles[{i}].supervisor_role"),
                        format!("supervisor role {sup:?} does not exist"),
                    ));
                }
            }
        }
        // Role-level supervision must be acyclic or no member tree has a root.
        for role in &self.roles {
            let mut seen = BTreeSet::new();
            let mut cur = Some(role.role_id.as_str());
            while let Some(r) = cur {
                if !seen.insert(r) {
                    return Err(invalid(
                        format!("roles[{}].supervisor_role", role.role_id),
                        "supervisor roles form a cycle",
                    ));
                }
                cur = self.role(r).and_then(|x| x.supervisor_role.as_deref());
            }
        }

        let mut profiled = BTreeSet::new();
        for (i, profile) in self.role_profiles.iter().enumerate() {
            let base = format!("role_profiles[{i}]");
            if !role_ids.contains(profile.role_id.as_str()) {
                return Err(invalid(
                    format!("{base}.role_id"),
                    format!("role {:?} does not exist", profile.role_id),
                ));
            }
            if !profiled.insert(profile.role_id.as_str()) {
                return Err(invalid(
                    format!("{base}.role_id"),
                    format!("duplicate profile for role {:?}", profile.role_id),
                ));
            }
            if profile.templates.is_empty() {
                return Err(invalid(format!("{base}.templates"), "templates must be non-empty"));
            }
            if profile.principles.is_empty() {
                return Err(invalid(format!("{base}.principles"), "principles must be non-empty"));
            }
            let mut ids = BTreeSet::new();
            for (j, t) in profile.templates.iter().enumerate() {
                let path = format!("{base}.templates[{j}]");
                if !ids.insert(t.template_id.as_str()) {
                    return Err(invalid(path, format!("duplicate template_id {:?}", t.template_id)));
                }
                validate_template(t, &path, &role_ids)?;
            }
            let mut ids = BTreeSet::new();
            for (j, p) in profile.principles.iter().enumerate() {
                let path = format!("{base}.principles[{j}]");
                if !ids.insert(p.principle_id.as_str()) {
                    return Err(invalid(path, format!("duplicate principle_id {:?}", p.principle_id)));
                }
                if !(p.weight.is_finite() && p.weight > 0.0) {
                    return Err(invalid(
                        format!("{path}.weight"),
                        format!("principle {:?} must have a positive weight, got {}", p.principle_id, p.weight),
                    ));
                }
                p.trigger
                    .validate(&role_ids)
                    .map_err(|m| invalid(format!("{path}.trigger"), format!("principle {:?}: {m}", p.principle_id)))?;
            }
            let mut ids = BTreeSet::new();
            for (j, c) in profile.conflict_reasons.iter().enumerate() {
                let path = format!("{base}.conflict_reasons[{j}]");
                if !ids.insert(c.reason_id.as_str()) {
                    return Err(invalid(path, format!("duplicate reason_id {:?}", c.reason_id)));
                }
                if c.transform.is_empty() {
                    return Err(invalid(format!("{path}.transform"), "transform must be non-empty"));
                }
                for (k, op) in c.transform.iter().enumerate() {
                    op.validate(&role_ids)
                        .map_err(|m| invalid(format!("{path}.transform[{k}]"), m))?;
                }
            }
        }
        for (i, t) in self.adhoc_templates.iter().enumerate() {
            validate_template(t, &format!("adhoc_templates[{i}]"), &role_ids)?;
        }
        Ok(())
    }
}

fn validate_template(t: &MeetingTemplate, path: &str, role_ids: &BTreeSet<&str>) -> Result<(), SchemaError> {
    if t.duration_minutes == 0 {
        return Err(invalid(format!("{path}.duration_minutes"), "duration_minutes must be > 0"));
    }
    if t.metadata_variants.title_templates.is_empty() {
        return Err(invalid(
            format!("{path}.metadata_variants.title_templates"),
            "at least one title template is required",
        ));
    }
    for (k, sel) in t.attendee_pattern.iter().enumerate() {
        if let RoleSelector::Role { role_id } | RoleSelector::SampleOfRole { role_id, .. } = sel {
            if !role_ids.contains(role_id.as_str()) {
                return Err(invalid(
                    format!("{path}.attendee_pattern[{k}]"),
                    format!("selector references unknown role {role_id:?}"),
                ));
            }
        }
    }
    if let Some(day) = t.preferred_day {
        if matches!(day, Weekday::Sat | Weekday::Sun) {
            return Err(invalid(format!("{path}.preferred_day"), "preferred_day must be a weekday"));
        }
    }
    if let Some(s) = &t.preferred_start {
        if parse_hhmm(s).is_none() {
            return Err(invalid(format!("{path}.preferred_start"), format!("bad time {s:?}")));
        }
    }
    Ok(())
}

pub(crate) fn parse_offset(s: &str) -> Option<FixedOffset> {
    let (sign, rest) = match s.as_bytes().first()? {
        b'+' => (1, &s[1..]),
        b'-' => (-1, &s[1..]),
        _ => return None,
    };
    let minutes = parse_hhmm(rest)? as i32;
    FixedOffset::east_opt(sign * minutes * 60)
}

/// Read and validate a schema file.
pub fn load_schema(path: impl AsRef<Path>) -> Result<OrgSchema, SchemaError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
        path: path.display().to_string(),
        source,
    })?;
    OrgSchema::from_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub member_id: String,
    pub person_name: String,
    pub role_id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supervisor: Option<String>,
    pub responsibilities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrgChart {
    pub org_id: String,
    pub name: String,
    pub mission: String,
    pub utc_offset: String,
    pub members: Vec<Member>,
}

impl OrgChart {
    pub fn member(&self, member_id: &str) -> Option<&Member> {
        self.members.iter().find(|m| m.member_id == member_id)
    }

    pub fn members_with_role<'a>(&'a self, role_id: &'a str) -> impl Iterator<Item = &'a Member> + 'a {
        self.members.iter().filter(move |m| m.role_id == role_id)
    }

    pub fn direct_reports<'a>(&'a self, member_id: &'a str) -> impl Iterator<Item = &'a Member> + 'a {
        self.members
            .iter()
            .filter(move |m| m.supervisor.as_deref() == Some(member_id))
    }

    pub fn role_of(&self, member_id: &str) -> Option<&str> {
        self.member(member_id).map(|m| m.role_id.as_str())
    }

    /// Distance from the member to the root of its tree (root = 0).
    pub fn depth(&self, member_id: &str) -> Option<usize> {
        let mut depth = 0;
        let mut cur = self.member(member_id)?;
        while let Some(sup) = &cur.supervisor {
            cur = self.member(sup)?;
            depth += 1;
            if depth > self.members.len() {
                return None;
            }
        }
        Some(depth)
    }

    pub fn offset(&self) -> FixedOffset {
        parse_offset(&self.utc_offset).unwrap_or_else(|| FixedOffset::east_opt(0).unwrap())
    }

    /// Supervisor references must exist and form a forest.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut ids = BTreeSet::new();
        for m in &self.members {
            if !ids.insert(m.member_id.as_str()) {
                return Err(invalid("members", format!("duplicate member_id {:?}", m.member_id)));
            }
        }
        for m in &self.members {
            if let Some(sup) = &m.supervisor {
                if !ids.contains(sup.as_str()) {
                    return Err(invalid(
                        format!("members[{}].supervisor", m.member_id),
                        format!("unknown supervisor {sup:?}"),
                    ));
                }
            }
            if self.depth(&m.member_id).is_none() {
                return Err(invalid(
                    format!("members[{}].supervisor", m.member_id),
                    "supervisor chain contains a cycle",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub person_name: String,
    pub role_id: String,
    pub org_id: String,
    pub templates: Vec<MeetingTemplate>,
    pub principles: Vec<PriorityPrinciple>,
    pub conflict_reasons: Vec<ConflictReason>,
}

/// Requested headcount per role id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizePlan(pub BTreeMap<String, usize>);

impl SizePlan {
    pub fn count(&self, role_id: &str) -> usize {
        self.0.get(role_id).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }
}

impl fmt::Display for SizePlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl std::str::FromStr for SizePlan {
    type Err = String;

    /// Parses "PI=1,Postdoc=2,...".
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut plan = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (role, count) = part
                .split_once(['=', ':'])
                .ok_or_else(|| format!("expected ROLE=COUNT, got {part:?}"))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| format!("bad headcount in {part:?}"))?;
            plan.insert(role.trim().to_string(), count);
        }
        Ok(SizePlan(plan))
    }
}

/// Instantiate an org chart and one profile per member.
///
/// Members are created in schema role order; within a role, supervisors are
/// assigned round-robin over the members of the supervisor role.
pub fn instantiate_org(
    schema: &OrgSchema,
    plan: &SizePlan,
    seed: u64,
) -> Result<(OrgChart, Vec<UserProfile>), SchemaError> {
    for role in plan.0.keys() {
        if schema.role(role).is_none() {
            return Err(SchemaError::UnknownRole(role.clone()));
        }
    }
    for role in &schema.roles {
        if plan.count(&role.role_id) == 0 {
            continue;
        }
        if let Some(sup) = &role.supervisor_role {
            if plan.count(sup) == 0 {
                return Err(SchemaError::Unsatisfiable(format!(
                    "{} {} members requested but no {sup} supervisors",
                    plan.count(&role.role_id),
                    role.role_id
                )));
            }
        }
        if schema.role_profile(&role.role_id).is_none() {
            return Err(invalid(
                "role_profiles",
                format!("role {:?} is populated but has no profile", role.role_id),
            ));
        }
    }

    let mut rng = crate::seed::stream(seed, &["org", &schema.org_id]);
    let names = names::draw_names(plan.total(), &mut rng).ok_or(SchemaError::NamesExhausted(plan.total()))?;
    let mut names = names.into_iter();

    let mut members: Vec<Member> = Vec::with_capacity(plan.total());
    let mut by_role: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for role in &schema.roles {
        for _ in 0..plan.count(&role.role_id) {
            let member_id = format!("m{:02}", members.len() + 1);
            by_role.entry(&role.role_id).or_default().push(member_id.clone());
            members.push(Member {
                member_id,
                person_name: names.next().expect("drew exactly plan.total() names"),
                role_id: role.role_id.clone(),
                title: role.title.clone(),
                supervisor: None,
                responsibilities: role.responsibilities.clone(),
            });
        }
    }
    // Round-robin supervision, starting from a seeded offset.
    for role in &schema.roles {
        let Some(sup_role) = &role.supervisor_role else { continue };
        let Some(subordinates) = by_role.get(role.role_id.as_str()) else { continue };
        let supervisors = &by_role[sup_role.as_str()];
        let mut order: Vec<&String> = supervisors.iter().collect();
        order.shuffle(&mut rng);
        for (i, sub) in subordinates.iter().enumerate() {
            let sup = order[i % order.len()].clone();
            if let Some(m) = members.iter_mut().find(|m| &m.member_id == sub) {
                m.supervisor = Some(sup);
            }
        }
    }
    let org = OrgChart {
        org_id: schema.org_id.clone(),
        name: schema.name.clone(),
        mission: schema.mission.clone(),
        utc_offset: schema.utc_offset.clone(),
        members,
    };
    org.validate()?;

    let profiles = org
        .members
        .iter()
        .map(|m| {
            let rp = schema.role_profile(&m.role_id).expect("checked above");
            UserProfile {
                user_id: m.member_id.clone(),
                person_name: m.person_name.clone(),
                role_id: m.role_id.clone(),
                org_id: org.org_id.clone(),
                templates: rp.templates.clone(),
                principles: rp.principles.clone(),
                conflict_reasons: rp.conflict_reasons.clone(),
            }
        })
        .collect();
    Ok((org, profiles))
}

/// Everything a trigger may consult besides the event itself.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub org: &'a OrgChart,
    pub owner: &'a str,
}

/// Sum of the weights of every principle whose trigger fires on `event`.
pub fn principle_score(profile: &UserProfile, event: &Event, ctx: &DecisionContext<'_>) -> f64 {
    profile
        .principles
        .iter()
        .filter(|p| evaluate_trigger(p, event, ctx))
        .fold(0.0, |acc, p| acc + p.weight)
}

/// Ids of the principles that fire on `event`, in profile order.
pub fn firing_principles<'a>(
    profile: &'a UserProfile,
    event: &Event,
    ctx: &DecisionContext<'_>,
) -> Vec<&'a PriorityPrinciple> {
    profile
        .principles
        .iter()
        .filter(|p| evaluate_trigger(p, event, ctx))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lab() -> OrgSchema {
        builtin_schema("research-lab").unwrap()
    }

    fn lab_plan() -> SizePlan {
        "PI=1,Postdoc=2,PhD=5,MS=5,Undergrad=5".parse().unwrap()
    }

    #[test]
    fn builtin_research_lab_has_expected_roles() {
        let schema = lab();
        let ids: Vec<&str> = schema.roles.iter().map(|r| r.role_id.as_str()).collect();
        assert_eq!(ids, ["PI", "Postdoc", "PhD", "MS", "Undergrad"]);
        assert!(schema.roles[0].title.contains("Principal Investigator"));
        assert!(schema.roles[1].title.contains("Postdoctoral Researcher"));
        assert!(schema.roles[2].title.contains("PhD Student"));
    }

    #[test]
    fn every_builtin_schema_validates() {
        for name in BUILTIN_SCHEMAS {
            builtin_schema(name).unwrap();
        }
    }

    #[test]
    fn zero_weight_names_the_principle() {
        let mut schema = lab();
        schema.role_profiles[0].principles[1].weight = 0.0;
        let pid = schema.role_profiles[0].principles[1].principle_id.clone();
        let err = OrgSchema::from_json(&schema.to_json_pretty(), "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(&pid), "{msg}");
        assert!(msg.contains("role_profiles[0].principles[1].weight"), "{msg}");
    }

    #[test]
    fn empty_roles_rejected() {
        let mut schema = lab();
        schema.roles.clear();
        let err = schema.validate().unwrap_err();
        assert!(err.to_string().contains("schema must declare at least one role"));
    }

    #[test]
    fn dangling_supervisor_role_rejected() {
        let mut schema = lab();
        schema.roles[2].supervisor_role = Some("Dean".into());
        let err = schema.validate().unwrap_err().to_string();
        assert!(err.contains("roles[2].supervisor_role"), "{err}");
    }

    #[test]
    fn malformed_file_is_parse_error() {
        let err = OrgSchema::from_json("{ \"roles\": [", "broken.json").unwrap_err();
        assert!(matches!(err, SchemaError::Parse { ref path, .. } if path == "broken.json"));
    }

    #[test]
    fn json_round_trip() {
        for name in BUILTIN_SCHEMAS {
            let schema = builtin_schema(name).unwrap();
            let back = OrgSchema::from_json(&schema.to_json_pretty(), name).unwrap();
            assert_eq!(schema, back);
        }
    }

    #[test]
    fn research_lab_org_has_eighteen_members() {
        let (org, profiles) = instantiate_org(&lab(), &lab_plan(), 3).unwrap();
        assert_eq!(org.members.len(), 18);
        assert_eq!(profiles.len(), 18);
        let roots: Vec<_> = org.members.iter().filter(|m| m.supervisor.is_none()).collect();
        assert_eq!(roots.len(), 1);
        assert_eq!(roots[0].role_id, "PI");
        for m in &org.members {
            if let Some(sup) = &m.supervisor {
                let sup_role = org.role_of(sup).unwrap();
                let expected = lab().role(&m.role_id).unwrap().supervisor_role.clone().unwrap();
                assert_eq!(sup_role, expected);
            }
        }
        let names: BTreeSet<_> = org.members.iter().map(|m| &m.person_name).collect();
        assert_eq!(names.len(), 18);
    }

    #[test]
    fn instantiate_is_deterministic() {
        let a = instantiate_org(&lab(), &lab_plan(), 11).unwrap();
        let b = instantiate_org(&lab(), &lab_plan(), 11).unwrap();
        assert_eq!(serde_json::to_vec(&a.0).unwrap(), serde_json::to_vec(&b.0).unwrap());
        assert_eq!(serde_json::to_vec(&a.1).unwrap(), serde_json::to_vec(&b.1).unwrap());
        let c = instantiate_org(&lab(), &lab_plan(), 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn single_member_org() {
        let (org, _) = instantiate_org(&lab(), &"PI=1".parse().unwrap(), 0).unwrap();
        assert_eq!(org.members.len(), 1);
        assert!(org.members.iter().all(|m| m.supervisor.is_none()));
    }

    #[test]
    fn undergrads_without_supervisors_rejected() {
        let err = instantiate_org(&lab(), &"PI=1,Undergrad=3".parse().unwrap(), 0).unwrap_err();
        assert!(matches!(err, SchemaError::Unsatisfiable(_)), "{err}");
    }

    #[test]
    fn size_plan_parses_and_prints() {
        let plan: SizePlan = "PI=1, PhD:4".parse().unwrap();
        assert_eq!(plan.count("PhD"), 4);
        assert_eq!(plan.to_string(), "PI=1,PhD=4");
        assert!("PI".parse::<SizePlan>().is_err());
    }
}
