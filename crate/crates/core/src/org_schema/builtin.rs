//! Bundled schemas. Principle weights and triggers are hand-authored
//! stand-ins documented in the JSON files, not measured preferences.

use super::{OrgSchema, SchemaError, SizePlan};

pub const BUILTIN_SCHEMAS: [&str; 2] = ["research-lab", "tech-company"];

const RESEARCH_LAB: &str = include_str!("../../schemas/research_lab.json");
const TECH_COMPANY: &str = include_str!("../../schemas/tech_company.json");

pub fn builtin_schema(name: &str) -> Result<OrgSchema, SchemaError> {
    let text = match name {
        "research-lab" => RESEARCH_LAB,
        "tech-company" => TECH_COMPANY,
        other => {
            return Err(SchemaError::Validation {
                path: other.to_string(),
                message: format!("unknown builtin schema (known: {})", BUILTIN_SCHEMAS.join(", ")),
            })
        }
    };
    OrgSchema::from_json(text, name)
}

/// Headcounts used when no plan is given.
pub fn default_plan(name: &str) -> Option<SizePlan> {
    let plan = match name {
        "research-lab" => "PI=1,Postdoc=2,PhD=5,MS=5,Undergrad=5",
        "tech-company" => "CEO=1,CTO=1,HR=1,EngManager=2,PM=2,SWE=6",
        _ => return None,
    };
    Some(plan.parse().expect("static plan parses"))
}
