//! On-disk layout of generated data and run outputs.

pub const SCHEMA: &str = "schema.json";
pub const ORG: &str = "org.json";
/// Hidden principles; read only when building the oracle agent.
pub const PROFILES: &str = "truth/profiles.json";

pub fn calendar(user: &str) -> String {
    format!("calendars/{user}.json")
}

pub fn dataset(user: &str) -> String {
    format!("datasets/{user}.json")
}

pub fn truth(user: &str) -> String {
    format!("truth/{user}.json")
}

pub const TRACE_DIR: &str = "traces";

pub fn trace(user: &str, rollout: &str) -> String {
    format!("{TRACE_DIR}/{user}.{rollout}.jsonl")
}

pub fn request_log(user: &str, rollout: &str) -> String {
    format!("logs/{user}.{rollout}.requests.jsonl")
}

pub fn rollout_id(i: usize) -> String {
    format!("r{i:02}")
}
