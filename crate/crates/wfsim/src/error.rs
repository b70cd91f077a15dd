use thiserror::Error;

/// Errors produced by state construction, operator embedding, propagation,
/// and the protocol drivers.
#[derive(Debug, Error)]
pub enum WfError {
    #[error("duplicate factor label `{0}`")]
    DuplicateLabel(String),

    #[error("factor `{0}` has zero dimension")]
    ZeroDim(String),

    #[error("unknown leg label `{0}`")]
    UnknownLeg(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("amplitude vector has length {got}, layout requires {want}")]
    BadAmplitudeCount { got: usize, want: usize },

    #[error("operator matrix is {got}x{got}, named legs span dimension {want}")]
    BadOperatorDim { got: usize, want: usize },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("partial trace keep set is empty")]
    EmptyKeep,

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("ensemble dimension must be at least 2 (got {0})")]
    EnsembleTooSmall(usize),

    #[error("spectrum needs at least 3 levels for spacing ratios (got {0})")]
    SpectrumTooShort(usize),

    #[error("negative ratio argument {0}")]
    NegativeRatio(f64),

    #[error("propagator block spans dimension {dim}, above the cap {cap}; re-partition the legs")]
    BlockTooLarge { dim: usize, cap: usize },

    #[error("schedule stage {0} has non-positive duration")]
    BadStageDuration(usize),

    #[error("sample window [{lo}, {hi}] lies outside the available span")]
    WindowOutOfRange { lo: f64, hi: f64 },

    #[error("basis pair is not orthonormal (residual {0:.3e})")]
    BasisNotOrthonormal(f64),

    #[error("branch weight below {floor:.0e}; environment state undefined for branch {branch}")]
    UndefinedBranch { branch: usize, floor: f64 },

    #[error("invalid protocol parameter: {0}")]
    BadParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, WfError>;
