//! Orchestration for the calendar-conflict benchmark: generation, agent runs,
//! scoring, reward export and replay, each writing digest manifests.

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod generate;
pub mod layout;
pub mod manifest;
pub mod replay;
pub mod rewards;
pub mod run;
pub mod score;

pub use error::{CliError, ExitClass};
