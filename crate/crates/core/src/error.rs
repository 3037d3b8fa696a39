use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian (max |m - m†| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("not a valid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("requested size {requested} exceeds the supported maximum {max}")]
    Size { requested: usize, max: usize },

    #[error("projection outcome has probability {probability:.3e}; the branch cannot be prepared")]
    BranchImpossible { probability: f64 },

    #[error(
        "numerical failure after evolution: trace drift {trace_drift:.3e}, minimum eigenvalue {min_eigenvalue:.3e}"
    )]
    Numerical { trace_drift: f64, min_eigenvalue: f64 },

    #[error("signal has an imaginary residue {residue:.3e}; the observable or state is not Hermitian")]
    ImaginarySignal { residue: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("signal grids do not match: {0}")]
    GridMismatch(String),

    #[error("calibration impossible: {0}")]
    Calibration(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}
