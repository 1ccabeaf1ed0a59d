//! Deterministic engine for calendar-conflict-resolution episodes.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! - [`org_schema`]: organizational schemas, user profiles, weighted priority
//!   principles and conflict-reason operators (the hidden ground truth).
//! - [`calendar_gen`]: conflict-free year-long calendars of regular events.
//! - [`conflict_gen`]: conflict rounds with a unique ground-truth resolution.
//! - [`environment`]: the sequential decision environment with the strategy hub.
//! - [`metrics`]: per-round and per-instance scoring (accuracy, ORD, AER, ERR).
//! - [`rewards`]: shaped round rewards, curriculum, returns and round-wise advantages.
//! - [`agents`]: oracle, random, heuristic and remote chat-endpoint agents.

pub mod agents;
pub mod calendar_gen;
pub mod conflict_gen;
pub mod digest;
pub mod environment;
pub mod metrics;
pub mod org_schema;
pub mod rewards;
pub mod seed;

pub use calendar_gen::{Calendar, Event, EventType, Modality};
pub use conflict_gen::{ConflictDataset, ConflictRound};
pub use org_schema::{OrgChart, OrgSchema, UserProfile};
