//! The seven subcommands. Each resolves its parameters (flags over config
//! file over documented defaults), runs the computation, writes CSV/JSON
//! outputs into the output directory, and returns the manifest describing
//! the run.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, WfError};
use crate::observe::{ensemble_stats, long_time_average, EnsembleStats};
use crate::protocols::{
    chsh, overlap_experiment, run_brukner, run_fr, run_standard, BruknerStage, FrTag, Mode,
    MonitoredModel, ObservableSet, ProtocolConfig, StandardRun,
};
use crate::randmat::{
    analytic_pr, ks_distance, pooled_ratios, ratio_histogram, EnsembleSpec, RatioFamily,
};

use super::config::{parse_angle, parse_f64_list, parse_usize_list, parse_window, FileConfig};
use super::manifest::RunManifest;
use super::output::{write_json, CsvField, CsvWriter};
use super::OUT_DIR_ENV;

fn resolve_out_dir(flag: &Option<PathBuf>) -> Result<PathBuf> {
    let dir = match flag {
        Some(d) => d.clone(),
        None => match std::env::var_os(OUT_DIR_ENV) {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from("."),
        },
    };
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn load_config(path: &Option<PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn record_params(manifest: &mut RunManifest, pairs: &[(&str, String)]) {
    for (k, v) in pairs {
        manifest.param(k, v);
    }
}

// ── overlap ──────────────────────────────────────────────────────────

/// Flags for the branch-overlap decay panels.
#[derive(Debug, Clone, Default)]
pub struct OverlapArgs {
    pub n_list: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub realizations: Option<usize>,
    pub t_max: Option<f64>,
    pub samples: Option<usize>,
    pub window: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

/// |⟨ε1(t)|ε2(t)⟩|² curves per environment size plus their long-time
/// scaling.
pub fn cmd_overlap(args: &OverlapArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let n_list = cfg.resolve(args.n_list.clone(), "n-list", vec![1, 3, 5, 7, 9], |s| {
        parse_usize_list(s)
    })?;
    let alpha = cfg.resolve(args.alpha, "alpha", 0.0, |s| s.parse::<f64>())?;
    let realizations = cfg.resolve(args.realizations, "realizations", 50, |s| {
        s.parse::<usize>()
    })?;
    let t_max = cfg.resolve(args.t_max, "t-max", 10.0, |s| s.parse::<f64>())?;
    let samples = cfg.resolve(args.samples, "samples", 512, |s| s.parse::<usize>())?;
    let window = cfg.resolve(args.window, "window", (2.0, 10.0), parse_window)?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("overlap", seed);
    record_params(
        &mut manifest,
        &[
            ("n-list", format!("{n_list:?}")),
            ("alpha", alpha.to_string()),
            ("realizations", realizations.to_string()),
            ("t-max", t_max.to_string()),
            ("samples", samples.to_string()),
            ("window", format!("{},{}", window.0, window.1)),
        ],
    );

    let mut series_csv =
        CsvWriter::create(&out_dir, "overlap_series.csv", &["n", "t", "value", "stderr"])?;
    let mut scaling_csv =
        CsvWriter::create(&out_dir, "overlap_scaling.csv", &["n", "value", "stderr"])?;
    for &n in &n_list {
        let model = MonitoredModel {
            n_qubits: n,
            band_exponent: alpha,
            seed,
        };
        let series = overlap_experiment(&model, realizations, t_max, samples, window)?;
        for ((t, m), s) in series
            .times
            .iter()
            .zip(&series.mean)
            .zip(&series.stderr)
        {
            series_csv.row(&[
                CsvField::Int(n as u64),
                CsvField::Float(*t),
                CsvField::Float(*m),
                CsvField::Float(*s),
            ])?;
        }
        let stats = ensemble_stats(&series.window_means);
        scaling_csv.row(&[
            CsvField::Int(n as u64),
            CsvField::Float(stats.mean),
            CsvField::Float(stats.stderr),
        ])?;
    }
    manifest.record_output(&series_csv.finish()?);
    manifest.record_output(&scaling_csv.finish()?);
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ── correlation ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct CorrelationArgs {
    pub n_list: Option<Vec<usize>>,
    pub alpha: Option<f64>,
    pub realizations: Option<usize>,
    pub dt: Option<f64>,
    pub base_span: Option<f64>,
    pub tau_max: Option<f64>,
    pub window: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

/// Environment autocorrelation C(τ) per environment size plus its long-τ
/// scaling.
pub fn cmd_correlation(args: &CorrelationArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let n_list = cfg.resolve(args.n_list.clone(), "n-list", vec![1, 3, 5, 7, 9], |s| {
        parse_usize_list(s)
    })?;
    let alpha = cfg.resolve(args.alpha, "alpha", 0.0, |s| s.parse::<f64>())?;
    let realizations = cfg.resolve(args.realizations, "realizations", 50, |s| {
        s.parse::<usize>()
    })?;
    let dt = cfg.resolve(args.dt, "dt", 0.02, |s| s.parse::<f64>())?;
    let base_span = cfg.resolve(args.base_span, "base-span", 10.0, |s| s.parse::<f64>())?;
    let tau_max = cfg.resolve(args.tau_max, "tau-max", 20.0, |s| s.parse::<f64>())?;
    let window = cfg.resolve(args.window, "window", (10.0, 20.0), parse_window)?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("correlation", seed);
    record_params(
        &mut manifest,
        &[
            ("n-list", format!("{n_list:?}")),
            ("alpha", alpha.to_string()),
            ("realizations", realizations.to_string()),
            ("dt", dt.to_string()),
            ("base-span", base_span.to_string()),
            ("tau-max", tau_max.to_string()),
            ("window", format!("{},{}", window.0, window.1)),
        ],
    );

    let mut series_csv = CsvWriter::create(
        &out_dir,
        "correlation_series.csv",
        &["n", "tau", "value", "stderr"],
    )?;
    let mut scaling_csv = CsvWriter::create(
        &out_dir,
        "correlation_scaling.csv",
        &["n", "value", "stderr"],
    )?;
    for &n in &n_list {
        let model = MonitoredModel {
            n_qubits: n,
            band_exponent: alpha,
            seed,
        };
        let per_real: Vec<crate::observe::CorrelationSeries> = (0..realizations as u64)
            .into_par_iter()
            .map(|r| correlation_single(&model, r, dt, base_span, tau_max))
            .collect::<Result<_>>()?;
        let tau = &per_real[0].tau;
        let mut window_means = Vec::with_capacity(per_real.len());
        for s in &per_real {
            window_means.push(long_time_average(&s.tau, &s.values, window)?);
        }
        for (j, t) in tau.iter().enumerate() {
            let col: Vec<f64> = per_real.iter().map(|s| s.values[j]).collect();
            let stats = ensemble_stats(&col);
            series_csv.row(&[
                CsvField::Int(n as u64),
                CsvField::Float(*t),
                CsvField::Float(stats.mean),
                CsvField::Float(stats.stderr),
            ])?;
        }
        let stats = ensemble_stats(&window_means);
        scaling_csv.row(&[
            CsvField::Int(n as u64),
            CsvField::Float(stats.mean),
            CsvField::Float(stats.stderr),
        ])?;
    }
    manifest.record_output(&series_csv.finish()?);
    manifest.record_output(&scaling_csv.finish()?);
    manifest.write(&out_dir)?;
    Ok(manifest)
}

fn correlation_single(
    model: &MonitoredModel,
    realization: u64,
    dt: f64,
    base_span: f64,
    tau_max: f64,
) -> Result<crate::observe::CorrelationSeries> {
    use crate::observe::autocorrelation;
    use crate::tensorspace::{StateVector, SubsystemLayout};
    let (p1, _) = model.branch_propagators(realization)?;
    let steps = ((base_span + tau_max) / dt).ceil() as usize;
    let layout = SubsystemLayout::compose(&[("env", model.env_dim())])?;
    let series: Vec<StateVector> = (0..=steps)
        .map(|j| StateVector::from_amplitudes(layout.clone(), p1.state_at(j as f64 * dt)))
        .collect::<Result<_>>()?;
    autocorrelation(&series, dt, base_span, tau_max)
}

// ── spectral ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct SpectralArgs {
    pub alpha_list: Option<Vec<f64>>,
    pub dim: Option<usize>,
    pub matrices: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SpectralAlphaSummary {
    alpha: f64,
    ratio_count: usize,
    overflow_mass: f64,
    ks_goe: f64,
    ks_integrable: f64,
}

#[derive(Debug, Serialize)]
struct SpectralSummary {
    dim: usize,
    matrices: usize,
    seed: u64,
    families: Vec<SpectralAlphaSummary>,
}

/// Spacing-ratio histograms against the analytic families, with
/// Kolmogorov–Smirnov distances.
pub fn cmd_spectral(args: &SpectralArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let alpha_list = cfg.resolve(
        args.alpha_list.clone(),
        "alpha-list",
        vec![0.0, 0.5, 1.0, 2.0, 4.0],
        |s| parse_f64_list(s),
    )?;
    let dim = cfg.resolve(args.dim, "dim", 512, |s| s.parse::<usize>())?;
    let matrices = cfg.resolve(args.matrices, "matrices", 200, |s| s.parse::<usize>())?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("spectral", seed);
    record_params(
        &mut manifest,
        &[
            ("alpha-list", format!("{alpha_list:?}")),
            ("dim", dim.to_string()),
            ("matrices", matrices.to_string()),
        ],
    );

    let mut hist_csv = CsvWriter::create(
        &out_dir,
        "spectral_histogram.csv",
        &[
            "alpha",
            "bin_left",
            "bin_right",
            "density",
            "analytic_goe",
            "analytic_integrable",
        ],
    )?;
    let mut families = Vec::new();
    for &alpha in &alpha_list {
        let spec = EnsembleSpec {
            dim,
            band_exponent: alpha,
            seed,
        };
        let ratios = pooled_ratios(&spec, matrices)?;
        let hist = ratio_histogram(&ratios);
        for (b, d) in hist.density.iter().enumerate() {
            let left = hist.bin_edges[b];
            let right = hist.bin_edges[b + 1];
            let center = 0.5 * (left + right);
            hist_csv.row(&[
                CsvField::Float(alpha),
                CsvField::Float(left),
                CsvField::Float(right),
                CsvField::Float(*d),
                CsvField::Float(analytic_pr(center, RatioFamily::Goe)?),
                CsvField::Float(analytic_pr(center, RatioFamily::Integrable)?),
            ])?;
        }
        families.push(SpectralAlphaSummary {
            alpha,
            ratio_count: ratios.len(),
            overflow_mass: hist.overflow_mass,
            ks_goe: ks_distance(&ratios, RatioFamily::Goe),
            ks_integrable: ks_distance(&ratios, RatioFamily::Integrable),
        });
    }
    manifest.record_output(&hist_csv.finish()?);
    let summary = SpectralSummary {
        dim,
        matrices,
        seed,
        families,
    };
    let json_path = write_json(&out_dir, "spectral_summary.json", &summary)?;
    manifest.record_output(&json_path);
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ── scaling ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct ScalingArgs {
    pub alpha_list: Option<Vec<f64>>,
    pub n_list: Option<Vec<usize>>,
    pub realizations: Option<usize>,
    pub t_max: Option<f64>,
    pub samples: Option<usize>,
    pub window: Option<(f64, f64)>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

/// Long-time overlap average against environment size for several band
/// exponents.
pub fn cmd_scaling(args: &ScalingArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let alpha_list = cfg.resolve(
        args.alpha_list.clone(),
        "alpha-list",
        vec![0.0, 0.5, 1.0, 2.0, 4.0],
        |s| parse_f64_list(s),
    )?;
    let n_list = cfg.resolve(args.n_list.clone(), "n-list", vec![1, 3, 5, 7], |s| {
        parse_usize_list(s)
    })?;
    let realizations = cfg.resolve(args.realizations, "realizations", 50, |s| {
        s.parse::<usize>()
    })?;
    let t_max = cfg.resolve(args.t_max, "t-max", 50.0, |s| s.parse::<f64>())?;
    let samples = cfg.resolve(args.samples, "samples", 512, |s| s.parse::<usize>())?;
    let window = cfg.resolve(args.window, "window", (2.0, 50.0), parse_window)?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("scaling", seed);
    record_params(
        &mut manifest,
        &[
            ("alpha-list", format!("{alpha_list:?}")),
            ("n-list", format!("{n_list:?}")),
            ("realizations", realizations.to_string()),
            ("t-max", t_max.to_string()),
            ("samples", samples.to_string()),
            ("window", format!("{},{}", window.0, window.1)),
        ],
    );

    let mut csv = CsvWriter::create(
        &out_dir,
        "scaling.csv",
        &["alpha", "n", "value", "stderr"],
    )?;
    for &alpha in &alpha_list {
        for &n in &n_list {
            let model = MonitoredModel {
                n_qubits: n,
                band_exponent: alpha,
                seed,
            };
            let series = overlap_experiment(&model, realizations, t_max, samples, window)?;
            let stats = ensemble_stats(&series.window_means);
            csv.row(&[
                CsvField::Float(alpha),
                CsvField::Int(n as u64),
                CsvField::Float(stats.mean),
                CsvField::Float(stats.stderr),
            ])?;
        }
    }
    manifest.record_output(&csv.finish()?);
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ── wigner ───────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct WignerArgs {
    pub theta: Option<String>,
    pub n_int: Option<usize>,
    pub n_ext: Option<usize>,
    pub g: Option<f64>,
    pub tau1: Option<f64>,
    pub t_end: Option<f64>,
    pub realizations: Option<usize>,
    pub samples: Option<usize>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Checkpoint {
    quantity: String,
    computed: f64,
    expected: f64,
    abs_delta: f64,
    tolerance: f64,
    within_tolerance: bool,
}

fn checkpoint(quantity: &str, computed: f64, expected: f64, tolerance: f64) -> Checkpoint {
    let abs_delta = (computed - expected).abs();
    Checkpoint {
        quantity: quantity.to_string(),
        computed,
        expected,
        abs_delta,
        tolerance,
        within_tolerance: abs_delta <= tolerance,
    }
}

#[derive(Debug, Serialize)]
struct WignerSummary {
    mode: String,
    theta: f64,
    n_int: usize,
    n_ext: usize,
    g: f64,
    tau1: f64,
    t_end: f64,
    realizations: usize,
    averaging_window: (f64, f64),
    max_norm_drift: f64,
    checkpoints: Vec<Checkpoint>,
}

/// Run the single-observer protocol over an ensemble of realizations; emit
/// the averaged coefficient series and the checkpoint summary.
pub fn cmd_wigner(args: &WignerArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let theta = match &args.theta {
        Some(t) => parse_angle(t)?,
        None => match cfg.get("theta") {
            Some(t) => parse_angle(t)?,
            None => std::f64::consts::FRAC_PI_8,
        },
    };
    let n_int = cfg.resolve(args.n_int, "n-int", 6, |s| s.parse::<usize>())?;
    let n_ext = cfg.resolve(args.n_ext, "n-ext", 6, |s| s.parse::<usize>())?;
    let g = cfg.resolve(args.g, "g", 100.0, |s| s.parse::<f64>())?;
    let tau1 = cfg.resolve(args.tau1, "tau1", 10.0, |s| s.parse::<f64>())?;
    let t_end = cfg.resolve(args.t_end, "t-end", 20.0, |s| s.parse::<f64>())?;
    let realizations = cfg.resolve(args.realizations, "realizations", 10, |s| {
        s.parse::<usize>()
    })?;
    let samples = cfg.resolve(args.samples, "samples", 512, |s| s.parse::<usize>())?;
    let mode: Mode = cfg
        .resolve(args.mode.clone(), "mode", "decoherent".to_string(), |s| {
            Ok::<String, WfError>(s.to_string())
        })?
        .parse()?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("wigner", seed);
    record_params(
        &mut manifest,
        &[
            ("theta", theta.to_string()),
            ("n-int", n_int.to_string()),
            ("n-ext", n_ext.to_string()),
            ("g", g.to_string()),
            ("tau1", tau1.to_string()),
            ("t-end", t_end.to_string()),
            ("realizations", realizations.to_string()),
            ("samples", samples.to_string()),
            ("mode", mode.name().to_string()),
        ],
    );

    let base = ProtocolConfig {
        theta,
        n_int,
        n_ext,
        g,
        tau1,
        t_end,
        mode,
        seed,
        realization: 0,
        samples_per_stage: samples,
        settle: 2.0,
    };
    let runs: Vec<StandardRun> = (0..realizations as u64)
        .into_par_iter()
        .map(|r| {
            let config = ProtocolConfig {
                realization: r,
                ..base.clone()
            };
            run_standard(&config)
        })
        .collect::<Result<_>>()?;

    let times = &runs[0].times;
    let mut csv = CsvWriter::create(
        &out_dir,
        "wigner_series.csv",
        &[
            "t",
            "c_hh",
            "c_hh_stderr",
            "c_vv",
            "c_vv_stderr",
            "c_nd_internal",
            "c_nd_internal_stderr",
            "c_aa",
            "c_aa_stderr",
            "c_bb",
            "c_bb_stderr",
            "c_nd_external",
            "c_nd_external_stderr",
        ],
    )?;
    let column = |pick: &dyn Fn(&StandardRun, usize) -> f64, j: usize| -> EnsembleStats {
        let values: Vec<f64> = runs.iter().map(|r| pick(r, j)).collect();
        ensemble_stats(&values)
    };
    for (j, t) in times.iter().enumerate() {
        let hh = column(&|r, j| r.internal.samples[j].c00.re, j);
        let vv = column(&|r, j| r.internal.samples[j].c11.re, j);
        let nd_i = column(&|r, j| r.internal.samples[j].c_nd(), j);
        let aa = column(&|r, j| r.external.samples[j].c00.re, j);
        let bb = column(&|r, j| r.external.samples[j].c11.re, j);
        let nd_e = column(&|r, j| r.external.samples[j].c_nd(), j);
        csv.row(&[
            CsvField::Float(*t),
            CsvField::Float(hh.mean),
            CsvField::Float(hh.stderr),
            CsvField::Float(vv.mean),
            CsvField::Float(vv.stderr),
            CsvField::Float(nd_i.mean),
            CsvField::Float(nd_i.stderr),
            CsvField::Float(aa.mean),
            CsvField::Float(aa.stderr),
            CsvField::Float(bb.mean),
            CsvField::Float(bb.stderr),
            CsvField::Float(nd_e.mean),
            CsvField::Float(nd_e.stderr),
        ])?;
    }
    manifest.record_output(&csv.finish()?);

    // final-window averages against the closed-form targets
    let window = (t_end - 0.2 * t_end, t_end);
    let window_mean = |pick: &dyn Fn(&StandardRun) -> Vec<f64>| -> Result<f64> {
        let per: Vec<f64> = runs
            .iter()
            .map(|r| long_time_average(&r.times, &pick(r), window))
            .collect::<Result<_>>()?;
        Ok(ensemble_stats(&per).mean)
    };
    let tol = 0.03;
    let checkpoints = vec![
        checkpoint(
            "c_hh_final",
            window_mean(&|r| r.internal.series(|s| s.c00.re))?,
            (2.0 - (4.0 * theta).sin()) / 4.0,
            tol,
        ),
        checkpoint(
            "c_vv_final",
            window_mean(&|r| r.internal.series(|s| s.c11.re))?,
            (2.0 + (4.0 * theta).sin()) / 4.0,
            tol,
        ),
        checkpoint(
            "c_aa_final",
            window_mean(&|r| r.external.series(|s| s.c00.re))?,
            (1.0 + (2.0 * theta).sin()) / 2.0,
            tol,
        ),
        checkpoint(
            "c_bb_final",
            window_mean(&|r| r.external.series(|s| s.c11.re))?,
            (1.0 - (2.0 * theta).sin()) / 2.0,
            tol,
        ),
    ];
    let summary = WignerSummary {
        mode: mode.name().to_string(),
        theta,
        n_int,
        n_ext,
        g,
        tau1,
        t_end,
        realizations,
        averaging_window: window,
        max_norm_drift: runs
            .iter()
            .map(|r| r.max_norm_drift)
            .fold(0.0f64, f64::max),
        checkpoints,
    };
    let json_path = write_json(&out_dir, "wigner_summary.json", &summary)?;
    manifest.record_output(&json_path);
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ── fr ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct FrArgs {
    pub mode: Option<String>,
    pub n: Option<usize>,
    pub g: Option<f64>,
    pub settle: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub realization: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FrSummary {
    mode: String,
    n_per_environment: usize,
    g: f64,
    settle: f64,
    quantities: Vec<Checkpoint>,
    records_definite: BTreeMap<String, bool>,
}

/// Run the certainty-chain protocol at all three checkpoints; emit the joint
/// memory tables and the headline probabilities.
pub fn cmd_fr(args: &FrArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let mode: Mode = cfg
        .resolve(args.mode.clone(), "mode", "ideal".to_string(), |s| {
            Ok::<String, WfError>(s.to_string())
        })?
        .parse()?;
    let n = cfg.resolve(args.n, "n", 3, |s| s.parse::<usize>())?;
    let g = cfg.resolve(args.g, "g", 100.0, |s| s.parse::<f64>())?;
    let settle = cfg.resolve(args.settle, "settle", 2.0, |s| s.parse::<f64>())?;
    let samples = cfg.resolve(args.samples, "samples", 16, |s| s.parse::<usize>())?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let realization = cfg.resolve(args.realization, "realization", 0, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("fr", seed);
    record_params(
        &mut manifest,
        &[
            ("mode", mode.name().to_string()),
            ("n", n.to_string()),
            ("g", g.to_string()),
            ("settle", settle.to_string()),
            ("samples", samples.to_string()),
            ("realization", realization.to_string()),
        ],
    );

    let config = ProtocolConfig {
        mode,
        n_int: n,
        n_ext: n,
        g,
        settle,
        samples_per_stage: samples,
        seed,
        realization,
        ..ProtocolConfig::default()
    };

    let mut csv = CsvWriter::create(
        &out_dir,
        "fr_tables.csv",
        &["checkpoint", "i_a", "i_b", "e_a", "e_b", "probability"],
    )?;
    let mut records_definite = BTreeMap::new();
    let mut tables = BTreeMap::new();
    for (name, tag) in [
        ("before_ea", FrTag::BeforeEa),
        ("after_ea", FrTag::AfterEa),
        ("final", FrTag::Final),
    ] {
        let table = run_fr(&config, tag)?;
        records_definite.insert(name.to_string(), table.definite);
        for (flat, p) in table.probabilities.iter().enumerate() {
            // decode the flat index into per-agent outcomes
            let mut digits = vec![0usize; table.agents.len()];
            let mut idx = flat;
            for ai in (0..table.agents.len()).rev() {
                digits[ai] = idx % table.outcomes[ai].len();
                idx /= table.outcomes[ai].len();
            }
            let outcome_of = |agent: &str| -> String {
                match table.agents.iter().position(|a| a == agent) {
                    Some(ai) => table.outcomes[ai][digits[ai]].clone(),
                    None => String::new(),
                }
            };
            csv.row(&[
                CsvField::Text(name.to_string()),
                CsvField::Text(outcome_of("I_A")),
                CsvField::Text(outcome_of("I_B")),
                CsvField::Text(outcome_of("E_A")),
                CsvField::Text(outcome_of("E_B")),
                CsvField::Float(*p),
            ])?;
        }
        tables.insert(name, table);
    }
    manifest.record_output(&csv.finish()?);

    let before = &tables["before_ea"];
    let after = &tables["after_ea"];
    let final_t = &tables["final"];
    let (exact_tol, cond_tol) = match mode {
        Mode::Ideal => (1e-9, 1e-9),
        Mode::Decoherent => (0.02, 0.03),
    };
    let quantities = vec![
        checkpoint(
            "p_ha_and_hb_before",
            before.probability(&[("I_A", "h"), ("I_B", "h")])?,
            0.0,
            if mode == Mode::Ideal { 1e-12 } else { exact_tol },
        ),
        checkpoint(
            "p_vb_given_ha_after",
            after.conditional(&[("I_B", "v")], &[("I_A", "h")])?,
            2.0 / 3.0,
            cond_tol,
        ),
        checkpoint(
            "p_va_given_hb_after",
            after.conditional(&[("I_A", "v")], &[("I_B", "h")])?,
            0.5,
            cond_tol,
        ),
        checkpoint(
            "p_minusA_minusB",
            final_t.probability(&[("E_A", "minus"), ("E_B", "minus")])?,
            1.0 / 12.0,
            exact_tol,
        ),
        checkpoint(
            "p_plusB_given_va",
            final_t.conditional(&[("E_B", "plus")], &[("I_A", "v")])?,
            5.0 / 6.0,
            cond_tol,
        ),
    ];
    let summary = FrSummary {
        mode: mode.name().to_string(),
        n_per_environment: n,
        g,
        settle,
        quantities,
        records_definite,
    };
    let json_path = write_json(&out_dir, "fr_summary.json", &summary)?;
    manifest.record_output(&json_path);
    manifest.write(&out_dir)?;
    Ok(manifest)
}

// ── brukner ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Default)]
pub struct BruknerArgs {
    pub mode: Option<String>,
    pub observables: Option<String>,
    pub stage: Option<String>,
    pub n: Option<usize>,
    pub g: Option<f64>,
    pub settle: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub realization: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BruknerSummary {
    mode: String,
    stage: String,
    observables: String,
    n_per_environment: usize,
    g: f64,
    correlator_a1b1: f64,
    correlator_a1b0: f64,
    correlator_a0b1: f64,
    correlator_a0b0: f64,
    s_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    abs_delta: Option<f64>,
    definitions: [String; 4],
}

/// Run the correlation-test variant to a stage and evaluate the CHSH
/// combination there.
pub fn cmd_brukner(args: &BruknerArgs) -> Result<RunManifest> {
    let cfg = load_config(&args.config_file)?;
    let mode: Mode = cfg
        .resolve(args.mode.clone(), "mode", "ideal".to_string(), |s| {
            Ok::<String, WfError>(s.to_string())
        })?
        .parse()?;
    let observables: ObservableSet = cfg
        .resolve(
            args.observables.clone(),
            "observables",
            "memories".to_string(),
            |s| Ok::<String, WfError>(s.to_string()),
        )?
        .parse()?;
    let stage_text = cfg.resolve(args.stage.clone(), "stage", "3".to_string(), |s| {
        Ok::<String, WfError>(s.to_string())
    })?;
    let stage: BruknerStage = stage_text.parse()?;
    let n = cfg.resolve(args.n, "n", 3, |s| s.parse::<usize>())?;
    let g = cfg.resolve(args.g, "g", 100.0, |s| s.parse::<f64>())?;
    let settle = cfg.resolve(args.settle, "settle", 2.0, |s| s.parse::<f64>())?;
    let samples = cfg.resolve(args.samples, "samples", 16, |s| s.parse::<usize>())?;
    let seed = cfg.resolve(args.seed, "seed", 7, |s| s.parse::<u64>())?;
    let realization = cfg.resolve(args.realization, "realization", 0, |s| s.parse::<u64>())?;
    let out_dir = resolve_out_dir(&args.out_dir)?;

    let mut manifest = RunManifest::new("brukner", seed);
    record_params(
        &mut manifest,
        &[
            ("mode", mode.name().to_string()),
            ("observables", format!("{observables:?}").to_lowercase()),
            ("stage", stage_text.clone()),
            ("n", n.to_string()),
            ("g", g.to_string()),
            ("settle", settle.to_string()),
            ("samples", samples.to_string()),
            ("realization", realization.to_string()),
        ],
    );

    let config = ProtocolConfig {
        mode,
        n_int: n,
        n_ext: n,
        g,
        settle,
        samples_per_stage: samples,
        seed,
        realization,
        ..ProtocolConfig::default()
    };
    let outcome = run_brukner(&config, stage)?;
    let report = chsh(&outcome, observables)?;

    let expected_s = match (observables, stage) {
        (ObservableSet::Memories, BruknerStage::Stage3) => {
            Some(std::f64::consts::FRAC_1_SQRT_2)
        }
        (ObservableSet::Laboratories, BruknerStage::Stage1) => Some(2.0 * 2f64.sqrt()),
        _ => None,
    };
    let mut csv = CsvWriter::create(&out_dir, "brukner_chsh.csv", &["setting_pair", "value"])?;
    for (name, value) in [
        ("a1b1", report.a1b1),
        ("a1b0", report.a1b0),
        ("a0b1", report.a0b1),
        ("a0b0", report.a0b0),
        ("s", report.s_value),
    ] {
        csv.row(&[CsvField::Text(name.to_string()), CsvField::Float(value)])?;
    }
    manifest.record_output(&csv.finish()?);

    let summary = BruknerSummary {
        mode: mode.name().to_string(),
        stage: stage_text,
        observables: match observables {
            ObservableSet::Memories => "memories".to_string(),
            ObservableSet::Laboratories => "laboratories".to_string(),
        },
        n_per_environment: n,
        g,
        correlator_a1b1: report.a1b1,
        correlator_a1b0: report.a1b0,
        correlator_a0b1: report.a0b1,
        correlator_a0b0: report.a0b0,
        s_value: report.s_value,
        expected_s,
        abs_delta: expected_s.map(|e| (report.s_value - e).abs()),
        definitions: report.definitions,
    };
    let json_path = write_json(&out_dir, "brukner_summary.json", &summary)?;
    manifest.record_output(&json_path);
    manifest.write(&out_dir)?;
    Ok(manifest)
}
