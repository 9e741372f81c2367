//! Experiment configuration, orchestration and artifact export.

mod bound_io;
mod config;
mod probe;
mod run;
mod svg;
mod sweep;
mod task;

pub use bound_io::{bound_file_text, cmd_bound, BoundFile, BoundReport, VSpec};
pub use config::{budget, parse_seeds, BoundParams, DataSource, ExperimentConfig, KeyValues, PRESETS};
pub use probe::{cmd_assumption_probe, probe, probe_bound_inputs, ProbeReport, PROBE_POINTS, VARIANCE_DRAWS};
pub use run::{
    cmd_run, manifest, mean_std, metrics_csv, metrics_file_name, run_all, summarize, summary_csv, MetricsRow,
    RunArtifacts, RunOutput, SchemeSummary, METRICS_HEADER, SUMMARY_HEADER,
};
pub use svg::{line_chart, Series};
pub use sweep::{bound_template, cmd_sweep_md, sweep_csv, sweep_md, sweep_svg, SweepPoint, SWEEP_HEADER};
pub use task::{build_devices, load_task, protocol_config, samples_per_device, Task};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "AIRFL_OUT_DIR";
