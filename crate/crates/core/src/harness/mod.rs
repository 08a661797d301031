//! Scenario configuration, run orchestration, persistence and self-checks.

pub mod config;
pub mod oracle;
pub mod report;
pub mod run;
pub mod series;
pub mod snapshot;

pub use config::{parse_config, parse_config_str, InitialData, ScenarioConfig};
pub use oracle::{oracle_suite, OracleConfig, OracleReport, Suite};
pub use run::{run_scenario, verify_manifest, RunManifest, RunReport, RunResult};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotHeader, SnapshotMeta};
