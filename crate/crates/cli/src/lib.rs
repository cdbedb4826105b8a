//! Scenario runner for the gpdf laboratory: configuration, runs and manifests.

pub mod config;
pub mod manifest;
pub mod scenarios;

pub use config::{parse_config, ConfigError, Scenario, ScenarioConfig};
pub use manifest::{check_manifest, RunManifest};
pub use scenarios::{run_scenario, RunError};
