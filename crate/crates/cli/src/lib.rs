//! Support library for the `panelbreak` binary: CSV panel ingestion,
//! subcommand pipelines, and CSV/plain-text report emission.

pub mod loader;
pub mod report;
pub mod run;

pub use loader::{load_csv, write_panel_csv, ColumnRoles, LoadedPanel};
pub use run::{
    cmd_detect, cmd_estimate, cmd_simulate, cmd_test, InputSpec, SelectionSpec, SimExperiment,
    SimulateSpec,
};
