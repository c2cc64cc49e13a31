use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("grid of {cells} cells exceeds budget of {budget}; reduce dx or scene size")]
    CellBudget { cells: u64, budget: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unknown grid `{0}`")]
    UnknownGrid(String),

    #[error("unstable: Courant number {courant} exceeds 1/sqrt(3)")]
    Unstable { courant: f64 },

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("memory estimate {bytes} bytes exceeds budget of {budget}")]
    MemoryBudget { bytes: u64, budget: u64 },

    #[error("placement: {0}")]
    Placement(String),

    #[error("no onset detected: {0}")]
    NoOnset(String),

    #[error("insufficient decay range: EDF reaches only {deepest_db:.1} dB, fit needs {needed_db:.1} dB")]
    DecayRange { deepest_db: f64, needed_db: f64 },

    #[error("zero energy: {0}")]
    ZeroEnergy(String),

    #[error("convention mismatch: {0}")]
    Convention(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Tagged {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with room / source / receiver context.
    pub fn tagged(self, context: impl Into<String>) -> Self {
        Error::Tagged {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable kind, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::CellBudget { .. } => "cell_budget",
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::UnknownGrid(_) => "unknown_grid",
            Error::Unstable { .. } => "unstable",
            Error::Diverged { .. } => "diverged",
            Error::MemoryBudget { .. } => "memory_budget",
            Error::Placement(_) => "placement",
            Error::NoOnset(_) => "no_onset",
            Error::DecayRange { .. } => "decay_range",
            Error::ZeroEnergy(_) => "zero_energy",
            Error::Convention(_) => "convention",
            Error::Config(_) => "config",
            Error::Tagged { source, .. } => source.kind(),
            Error::Wav(_) => "wav",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
