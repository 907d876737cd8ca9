//! Experiment orchestration for the uniflux simulator: configuration,
//! deterministic parallel runs, source calibration, presets and CSV output.

pub mod calibrate;
pub mod config;
pub mod csv;
pub mod experiment;
pub mod presets;

pub use calibrate::{calibrate_sources, CalibrationError, CalibrationResult};
pub use config::{ConfigError, ExperimentConfig, RawConfig, Workload};
pub use experiment::{run_experiment, RunError, RunOutput};
pub use presets::{run_preset, Preset, PresetError, PresetReport};
