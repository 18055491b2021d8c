//! Configuration, presets, trace ingestion, the simulation loop and CSV
//! output.

pub mod config;
pub mod experiment;
pub mod presets;
pub mod sim;
pub mod trace;

pub use config::{ChannelSpec, ExperimentConfig, Instance, PolicyName};
pub use experiment::{aggregate, run_experiment, write_outputs, Aggregates, SeriesPoint};
pub use presets::preset;
pub use sim::{run_once, RunResult, RunSummary, Simulation};
pub use trace::{load_trace, TraceSchema};
