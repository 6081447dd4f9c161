use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {quantity}: {value} ({reason})")]
    InvalidValue {
        quantity: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("idler frequency 2*f_p - f_s = {0} Hz is not positive")]
    NonPositiveIdler(f64),

    #[error("TWPA path requires {0}")]
    MissingTwpa(&'static str),

    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("singular normal equations: all x values are equal")]
    SingularFit,

    #[error("effective-variance iteration did not converge after {0} iterations")]
    NoConvergence(usize),

    #[error("{0} evaluated at or above the dispersion cut-off ({1} Hz)")]
    AboveCutoff(&'static str, f64),

    #[error("integrator step size underflow at x = {0}")]
    StepUnderflow(f64),

    #[error("Fabry-Perot denominator |{0:e}| below 1e-12: cavity resonance singularity")]
    CavitySingularity(f64),

    #[error("bound {name} has the wrong sign: {value}")]
    BoundSign { name: &'static str, value: f64 },

    #[error("frequency mismatch: {0} Hz vs {1} Hz")]
    FrequencyMismatch(f64, f64),

    #[error("decay fit rejected: {0}")]
    DecayFit(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unsupported {what}: {detail}")]
    Unsupported { what: &'static str, detail: String },

    #[error("schema {found} is not readable by this version (expected major {expected})")]
    SchemaVersion { found: String, expected: u32 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidValue { .. } => "invalid_value",
            Error::InvalidInput(_) => "invalid_input",
            Error::NonPositiveIdler(_) => "non_positive_idler",
            Error::MissingTwpa(_) => "missing_twpa",
            Error::TooFewPoints { .. } => "too_few_points",
            Error::SingularFit => "singular_fit",
            Error::NoConvergence(_) => "no_convergence",
            Error::AboveCutoff(..) => "above_cutoff",
            Error::StepUnderflow(_) => "step_underflow",
            Error::CavitySingularity(_) => "cavity_singularity",
            Error::BoundSign { .. } => "bound_sign",
            Error::FrequencyMismatch(..) => "frequency_mismatch",
            Error::DecayFit(_) => "decay_fit",
            Error::Parse { .. } => "parse",
            Error::Unsupported { .. } => "unsupported",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
