use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wfsim::cli::{
    cmd_brukner, cmd_correlation, cmd_fr, cmd_overlap, cmd_scaling, cmd_spectral, cmd_wigner,
    parse_f64_list, parse_usize_list, parse_window, BruknerArgs, CorrelationArgs, FrArgs,
    OverlapArgs, ScalingArgs, SpectralArgs, WignerArgs,
};
use wfsim::WfError;

/// Staged unitary simulations of monitored measurement chains: ensemble
/// panels, protocol runs, and their CSV/JSON outputs.
#[derive(Parser)]
#[command(name = "wfsim", version, about)]
struct Cli {
    /// Worker threads for realization-level parallelism (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// 64-bit unsigned seed for every random stream of the run
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory (default: $WFSIM_OUT_DIR, then `.`)
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Flat key = value configuration file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Branch-environment overlap decay curves and their size scaling
    Overlap {
        #[command(flatten)]
        common: CommonOpts,
        /// Environment sizes in qubits, e.g. 1,3,5,7,9
        #[arg(long)]
        n_list: Option<String>,
        /// Band exponent of the coupling ensemble
        #[arg(long)]
        alpha: Option<f64>,
        /// Independent coupling draws entering the averages
        #[arg(long)]
        realizations: Option<usize>,
        /// End of the sampled time span
        #[arg(long)]
        t_max: Option<f64>,
        /// Sampling intervals over [0, t_max]
        #[arg(long)]
        samples: Option<usize>,
        /// Long-time averaging window, e.g. 2,10
        #[arg(long)]
        window: Option<String>,
    },
    /// Environment autocorrelation C(tau) and its long-lag scaling
    Correlation {
        #[command(flatten)]
        common: CommonOpts,
        /// Environment sizes in qubits, e.g. 1,3,5,7,9
        #[arg(long)]
        n_list: Option<String>,
        /// Band exponent of the coupling ensemble
        #[arg(long)]
        alpha: Option<f64>,
        /// Independent coupling draws entering the averages
        #[arg(long)]
        realizations: Option<usize>,
        /// Grid spacing for stored environment states
        #[arg(long)]
        dt: Option<f64>,
        /// Span of base times entering the double average
        #[arg(long)]
        base_span: Option<f64>,
        /// Largest lag entering C(tau)
        #[arg(long)]
        tau_max: Option<f64>,
        /// Long-lag averaging window, e.g. 10,20
        #[arg(long)]
        window: Option<String>,
    },
    /// Spacing-ratio histograms against the analytic families
    Spectral {
        #[command(flatten)]
        common: CommonOpts,
        /// Band exponents, e.g. 0,0.5,1,2,4
        #[arg(long)]
        alpha_list: Option<String>,
        /// Coupling matrix dimension
        #[arg(long)]
        dim: Option<usize>,
        /// Ensemble draws pooled into the histogram
        #[arg(long)]
        matrices: Option<usize>,
    },
    /// Long-time overlap average against size for several band exponents
    Scaling {
        #[command(flatten)]
        common: CommonOpts,
        /// Band exponents, e.g. 0,0.5,1,2,4
        #[arg(long)]
        alpha_list: Option<String>,
        /// Environment sizes in qubits
        #[arg(long)]
        n_list: Option<String>,
        /// Independent coupling draws entering the averages
        #[arg(long)]
        realizations: Option<usize>,
        /// End of the sampled time span
        #[arg(long)]
        t_max: Option<f64>,
        /// Sampling intervals over [0, t-max]
        #[arg(long)]
        samples: Option<usize>,
        /// Long-time averaging window, e.g. 2,50
        #[arg(long)]
        window: Option<String>,
    },
    /// Single-observer protocol: staged interference measurement of a
    /// monitored laboratory
    Wigner {
        #[command(flatten)]
        common: CommonOpts,
        /// Interference-basis angle: decimal or pi-form like pi/8
        #[arg(long)]
        theta: Option<String>,
        /// Internal-environment qubits
        #[arg(long)]
        n_int: Option<usize>,
        /// External-environment qubits
        #[arg(long)]
        n_ext: Option<usize>,
        /// Pre-measurement coupling constant
        #[arg(long)]
        g: Option<f64>,
        /// End of the first monitoring stage
        #[arg(long)]
        tau1: Option<f64>,
        /// End of the sampled run
        #[arg(long)]
        t_end: Option<f64>,
        /// Independent realizations averaged in the outputs
        #[arg(long)]
        realizations: Option<usize>,
        /// Sampling intervals per stage
        #[arg(long)]
        samples: Option<usize>,
        /// ideal | decoherent
        #[arg(long)]
        mode: Option<String>,
    },
    /// Two-laboratory certainty-chain protocol with memory tables
    Fr {
        #[command(flatten)]
        common: CommonOpts,
        /// ideal | decoherent
        #[arg(long)]
        mode: Option<String>,
        /// Environment qubits per register in decoherent mode
        #[arg(long)]
        n: Option<usize>,
        /// Pre-measurement coupling constant
        #[arg(long)]
        g: Option<f64>,
        /// Monitor settling window after each pre-measurement
        #[arg(long)]
        settle: Option<f64>,
        /// Sampling intervals per stage
        #[arg(long)]
        samples: Option<usize>,
        /// Realization index selecting the coupling streams
        #[arg(long)]
        realization: Option<u64>,
    },
    /// Correlation-test variant with a CHSH evaluation
    Brukner {
        #[command(flatten)]
        common: CommonOpts,
        /// ideal | decoherent
        #[arg(long)]
        mode: Option<String>,
        /// memories | laboratories
        #[arg(long)]
        observables: Option<String>,
        /// 1 | 2a | 2b | 3
        #[arg(long)]
        stage: Option<String>,
        /// Environment qubits per register in decoherent mode
        #[arg(long)]
        n: Option<usize>,
        /// Pre-measurement coupling constant
        #[arg(long)]
        g: Option<f64>,
        /// Monitor settling window after each pre-measurement
        #[arg(long)]
        settle: Option<f64>,
        /// Sampling intervals per stage
        #[arg(long)]
        samples: Option<usize>,
        /// Realization index selecting the coupling streams
        #[arg(long)]
        realization: Option<u64>,
    },
}

fn opt_usize_list(s: Option<String>) -> wfsim::Result<Option<Vec<usize>>> {
    s.map(|t| parse_usize_list(&t)).transpose()
}

fn opt_f64_list(s: Option<String>) -> wfsim::Result<Option<Vec<f64>>> {
    s.map(|t| parse_f64_list(&t)).transpose()
}

fn opt_window(s: Option<String>) -> wfsim::Result<Option<(f64, f64)>> {
    s.map(|t| parse_window(&t)).transpose()
}

fn run(cli: Cli) -> wfsim::Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| WfError::Config(format!("thread pool: {e}")))?;
    }
    let manifest = match cli.command {
        Command::Overlap {
            common,
            n_list,
            alpha,
            realizations,
            t_max,
            samples,
            window,
        } => cmd_overlap(&OverlapArgs {
            n_list: opt_usize_list(n_list)?,
            alpha,
            realizations,
            t_max,
            samples,
            window: opt_window(window)?,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
        Command::Correlation {
            common,
            n_list,
            alpha,
            realizations,
            dt,
            base_span,
            tau_max,
            window,
        } => cmd_correlation(&CorrelationArgs {
            n_list: opt_usize_list(n_list)?,
            alpha,
            realizations,
            dt,
            base_span,
            tau_max,
            window: opt_window(window)?,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
        Command::Spectral {
            common,
            alpha_list,
            dim,
            matrices,
        } => cmd_spectral(&SpectralArgs {
            alpha_list: opt_f64_list(alpha_list)?,
            dim,
            matrices,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
        Command::Scaling {
            common,
            alpha_list,
            n_list,
            realizations,
            t_max,
            samples,
            window,
        } => cmd_scaling(&ScalingArgs {
            alpha_list: opt_f64_list(alpha_list)?,
            n_list: opt_usize_list(n_list)?,
            realizations,
            t_max,
            samples,
            window: opt_window(window)?,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
        Command::Wigner {
            common,
            theta,
            n_int,
            n_ext,
            g,
            tau1,
            t_end,
            realizations,
            samples,
            mode,
        } => cmd_wigner(&WignerArgs {
            theta,
            n_int,
            n_ext,
            g,
            tau1,
            t_end,
            realizations,
            samples,
            mode,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
        Command::Fr {
            common,
            mode,
            n,
            g,
            settle,
            samples,
            realization,
        } => cmd_fr(&FrArgs {
            mode,
            n,
            g,
            settle,
            samples,
            realization,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
        Command::Brukner {
            common,
            mode,
            observables,
            stage,
            n,
            g,
            settle,
            samples,
            realization,
        } => cmd_brukner(&BruknerArgs {
            mode,
            observables,
            stage,
            n,
            g,
            settle,
            samples,
            realization,
            seed: common.seed,
            out_dir: common.out_dir,
            config_file: common.config,
        })?,
    };
    for path in &manifest.outputs {
        println!("wrote {path}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(WfError::BlockTooLarge { dim, cap }) => {
            eprintln!(
                "error: propagator block spans dimension {dim}, above the cap {cap}; \
                 lower the environment qubit count"
            );
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
