//! Discrete-event world driving the node protocol.

pub mod adversary;
pub mod config;
pub mod engine;
pub mod log;
pub mod mobility;
pub mod topology;

pub use adversary::AdversaryProfile;
pub use config::{ConfigInvalid, FieldError, Mobility, ScenarioConfig, UnknownPreset};
pub use engine::{key_str, parse_key, DropReason, FlowCounts, Ledger, RunOutput, World};
pub use log::{EventKind, EventLog, LogParseError, Record};
pub use topology::{NoRoute, Topology};

/// Runs a scenario to completion.
pub fn run(cfg: ScenarioConfig) -> Result<RunOutput, ConfigInvalid> {
    Ok(World::new(cfg)?.finish())
}
