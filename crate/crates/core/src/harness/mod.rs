//! Declarative experiments: TOML configs, built-in presets for the three
//! figures, and CSV/JSON output paired with a JSON run manifest.

mod config;
mod presets;
mod run;

pub use config::{
    parse_config, Diagnostic, Diagnostics, ExperimentConfig, McwfSection, OutputFormat, OutputSection, RunPlan,
    RunSection, Severity, SolverKind, Variant, DEFAULT_N_SAMPLES, DEFAULT_SAMPLES_PER_GATE,
};
pub use presets::{list_presets, preset, presets, Preset};
pub use run::{
    channel_names, execute, resolve_out_dir, run, write_csv, write_json_series, Convergence, ExecuteOptions, FockCheck,
    RunArtifact, RunManifest, RunOverrides, RunResult, FOCK_CHECK_TOL, MANIFEST_SCHEMA_VERSION, OUT_DIR_ENV,
};
