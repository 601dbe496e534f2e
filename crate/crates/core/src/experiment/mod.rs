//! Declarative experiment runs: presets, spec files, result tables and the
//! runner behind the command-line tool.

pub mod draws;
pub mod presets;
pub mod runner;
pub mod spec;
pub mod table;

pub use presets::{preset, Preset, PRESET_NAMES};
pub use runner::{valley_shape, execute, run, write_outputs, RunError, RunOutput};
pub use spec::{ExperimentKind, ExperimentSpec, RunOptions, SweepAxis};
pub use table::{report_units, Column, ResultTable};
