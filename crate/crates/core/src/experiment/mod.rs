//! Configuration, preset experiments and result files.

mod config;
mod output;
mod preset;
mod tasks;

pub use config::{
    parse_config, ExperimentConfig, MediumSettings, OpticsPreset, ParsedConfig, SamplerChoice, SourceSettings,
    TaskSettings,
};
pub use output::{sha256_hex, write_atomic, Artifact, Manifest, OutputDir, MANIFEST_NAME};
pub use preset::{
    base_config, preset_configs, run_preset, PresetId, PresetOptions, PresetOutcome, Scale, FIG3C_SEPARATION_UM,
};
pub use tasks::{
    analyze_file, fit_areas, mean_intensity, run_calibration, run_ratio_curve, simulate_to_file, AreaFits,
    StackAnalysis,
};
