use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid truncation: n_max must be at least 1, got {0}")]
    InvalidTruncation(usize),

    #[error("invalid space shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("truncation inadequate: |alpha| = {alpha} requires n_max >= {required}, got {n_max}")]
    TruncationInadequate { alpha: f64, required: usize, n_max: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("step too large: dt * max rate = {product} exceeds {limit}")]
    StepTooLarge { product: f64, limit: f64 },

    #[error("integration unstable at step {step}: trace defect {defect}")]
    IntegrationUnstable { step: usize, defect: f64 },

    #[error("record undefined: channel efficiency is zero")]
    RecordUndefined,

    #[error("numerical underflow: {0}")]
    Underflow(String),

    #[error("amplifier above threshold: |lambda| = {lambda} >= kappa/2 = {half_kappa}")]
    AboveThreshold { lambda: f64, half_kappa: f64 },

    #[error("straddling resonance: U + Delta = 0")]
    StraddlingResonance,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operator is not Hermitian: {0}")]
    NonHermitian(String),

    #[error("feedback gain {0} outside [0, 2]")]
    GainOutOfRange(f64),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("empty grid")]
    EmptyGrid,

    #[error("misaligned time grids: {0}")]
    MisalignedGrids(String),

    #[error("trajectory {index}: {source}")]
    InTrajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            Error::IntegrationUnstable { defect, .. } => Error::IntegrationUnstable { step, defect },
            e @ Error::AtStep { .. } => e,
            other => Error::AtStep { step, source: Box::new(other) },
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
