//! The timed experiment: schedule, configuration, closed-loop run, CSV
//! logging, plots and parameter sweeps.

pub mod config;
pub mod csv;
pub mod plot;
pub mod run;
pub mod sweep;
pub mod timeline;

pub use config::{ConfigError, NoiseConfig, ScenarioConfig, SimConfig};
pub use csv::{export_csv, read_csv, to_csv_bytes, CsvError};
pub use plot::{emit_plots, PlotError};
pub use run::{run_scenario, LogRecord, RunSummary, ScenarioError, ScenarioRun, SegmentSummary, TransientSummary};
pub use sweep::{run_sweep, SweepAxis, SweepPoint};
pub use timeline::{smooth_load, Mode, ScenarioTimeline, Segment};
