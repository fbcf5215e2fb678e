//! Scenario files, solver runs, sweeps and oracle cross-checks behind the
//! `dprc` binary.

pub mod output;
pub mod run;
pub mod scenario_file;

pub use run::{CliError, Mode};
pub use scenario_file::{load_scenario, parse_scenario, scenario_to_json, LoadError, ScenarioFile};

/// Writes `scenario` as a JSON scenario file.
pub fn write_scenario(path: &std::path::Path, scenario: &dprc_core::Scenario) -> std::io::Result<()> {
    std::fs::write(path, scenario_to_json(scenario))
}
