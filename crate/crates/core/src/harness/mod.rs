//! Config ingestion, presets, scenario runs and sweeps.

pub mod config;
pub mod presets;
pub mod run;
pub mod sweep;

pub use config::{ScenarioConfig, OUT_DIR_ENV};
pub use presets::{preset, PRESET_NAMES};
pub use run::{run_scenario, write_outputs, RunOutput, RunStatus, Summary, TrajectoryLog};
pub use sweep::{sweep, sweep_csv, with_axis, SweepRow};
