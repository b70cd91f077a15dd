//! Executable drivers for the interference experiments: the single-observer
//! protocol with an external interference measurement, the two-laboratory
//! certainty-chain protocol, its correlation-test variant, and the
//! monitored-laboratory ensemble studies behind them.

mod brukner;
mod fr;
mod monitored;
mod standard;
mod twolab;

pub use brukner::{chsh, run_brukner, BruknerOutcome, BruknerStage, ChshReport, ObservableSet};
pub use fr::{fr_basis_ambiguity, run_fr, BasisAmbiguity, FrTag, OutcomeTable};
pub use monitored::{
    correlation_experiment, overlap_experiment, overlap_longtime_scaling, MonitoredModel,
    OverlapSeries,
};
pub use standard::{run_standard, StandardRun};

use crate::error::{Result, WfError};

/// Simulation regime: `Ideal` keeps every environment leg one-dimensional
/// (measurements are pure pre-measurement correlations); `Decoherent`
/// attaches a 2^N-dimensional monitoring environment to every apparatus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ideal,
    Decoherent,
}

impl std::str::FromStr for Mode {
    type Err = WfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Mode::Ideal),
            "decoherent" => Ok(Mode::Decoherent),
            other => Err(WfError::Config(format!(
                "mode must be `ideal` or `decoherent`, got `{other}`"
            ))),
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Ideal => "ideal",
            Mode::Decoherent => "decoherent",
        }
    }
}

/// Shared protocol parameters.
///
/// Defaults are the reference single-observer run: θ = π/8, six environment
/// qubits per register, g = 100, first stage ending at τ1 = 10 with an
/// interference pre-measurement of duration π/(2g), sampled to t_end = 20.
#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub theta: f64,
    pub n_int: usize,
    pub n_ext: usize,
    pub g: f64,
    pub tau1: f64,
    pub t_end: f64,
    pub mode: Mode,
    pub seed: u64,
    pub realization: u64,
    pub samples_per_stage: usize,
    /// Monitor settling window after each pre-measurement in the
    /// two-laboratory protocols.
    pub settle: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            theta: std::f64::consts::FRAC_PI_8,
            n_int: 6,
            n_ext: 6,
            g: 100.0,
            tau1: 10.0,
            t_end: 20.0,
            mode: Mode::Decoherent,
            seed: 7,
            realization: 0,
            samples_per_stage: 512,
            settle: 2.0,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == Mode::Decoherent && (self.n_int == 0 || self.n_ext == 0) {
            return Err(WfError::BadParameter(
                "decoherent mode requires at least one qubit per environment".into(),
            ));
        }
        if !(self.g > 0.0) {
            return Err(WfError::BadParameter("coupling g must be positive".into()));
        }
        if !(self.tau1 > 0.0) {
            return Err(WfError::BadParameter("tau1 must be positive".into()));
        }
        if self.samples_per_stage == 0 {
            return Err(WfError::BadParameter(
                "samples_per_stage must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Dimension of each internal-laboratory environment leg.
    pub fn int_env_dim(&self) -> usize {
        match self.mode {
            Mode::Ideal => 1,
            Mode::Decoherent => 1usize << self.n_int,
        }
    }

    /// Dimension of each external-observer environment leg.
    pub fn ext_env_dim(&self) -> usize {
        match self.mode {
            Mode::Ideal => 1,
            Mode::Decoherent => 1usize << self.n_ext,
        }
    }

    /// Duration of a pre-measurement stage: g·τ = π/2.
    pub fn premeasure_time(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 / self.g
    }
}

/// Stream allocation for coupling draws: every realization owns a block of
/// eight ChaCha streams, one per coupling role.
pub(crate) fn coupling_stream(realization: u64, role: u64) -> u64 {
    realization * 8 + role
}
