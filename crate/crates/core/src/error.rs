use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis index (N={total}, 2mu={mu_twice}): {reason}")]
    InvalidIndex {
        total: u32,
        mu_twice: i32,
        reason: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A state, operator or POVM failed one of its structural invariants
    /// (normalization, hermiticity, positivity, completeness).
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("cutoff n_max={n_max} too small: discarded probability {tail:.3e} exceeds tolerance {tolerance:.3e}")]
    CutoffTooSmall {
        n_max: u32,
        tail: f64,
        tolerance: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Fisher matrix is singular (det={det:.3e}, trace={trace:.3e})")]
    SingularFisher { det: f64, trace: f64 },

    #[error("outcome {label} has vanishing probability but nonzero derivative at theta={theta}")]
    SingularOutcome { label: String, theta: f64 },

    #[error("state carries number coherences: {0}")]
    CoherentInput(String),

    #[error("sector decomposition requires a number-diagonal state or POVM")]
    DecompositionInvalid,

    #[error("empty outcome record")]
    EmptyOutcomes,

    #[error("unknown sector N={0}")]
    UnknownSector(u32),

    #[error("missing per-sector statistics")]
    MissingSectorData,

    #[error("expression error: {0}")]
    Expression(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::Invariant(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
