//! Command-line surface: subcommands for the ensemble panels (overlap,
//! correlation, spectral, scaling) and the three protocols (wigner, fr,
//! brukner), with deterministic CSV/JSON emission and a run manifest per
//! invocation.

mod commands;
mod config;
mod manifest;
mod output;

pub use commands::{
    cmd_brukner, cmd_correlation, cmd_fr, cmd_overlap, cmd_scaling, cmd_spectral, cmd_wigner,
    BruknerArgs, CorrelationArgs, FrArgs, OverlapArgs, ScalingArgs, SpectralArgs, WignerArgs,
};
pub use config::{parse_angle, parse_f64_list, parse_usize_list, parse_window, FileConfig};
pub use manifest::RunManifest;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "WFSIM_OUT_DIR";
