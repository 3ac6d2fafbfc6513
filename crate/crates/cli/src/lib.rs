//! Scenario runner for the AMOR toolkit: configuration loading, the six batch
//! modes, result files, plot data and run manifests.

pub mod error;
pub mod pipeline;
pub mod plotdata;
pub mod run;
pub mod spec;

pub use error::{CliError, CliResult, ErrorKind};
pub use plotdata::emit_plotdata;
pub use run::{run_scenario, RunSummary, MANIFEST};
pub use spec::{env_overrides, Mode, NoiseTables, ScenarioSpec, ENV_PREFIX};
