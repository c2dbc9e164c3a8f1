use thiserror::Error;

/// Errors raised anywhere in the model-fitting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infinite quantile at p = {0}")]
    InfiniteQuantile(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular design matrix (rank-deficient columns)")]
    SingularDesign,

    #[error("GLM did not converge after {iterations} iterations: {reason}")]
    NonConvergence { iterations: usize, reason: String },

    #[error("value {value} is outside the support of the {family} family{}", location.as_deref().map(|l| format!(" ({l})")).unwrap_or_default())]
    Support {
        family: String,
        value: f64,
        location: Option<String>,
    },

    #[error("degenerate conditioning: {0}")]
    Conditioning(String),

    #[error("objective returned NaN at {point:?}")]
    NanObjective { point: Vec<f64> },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("operation requires scenario {expected}, model is {found}")]
    ScenarioMismatch { expected: String, found: String },

    #[error("mediator probability saturated at {0}")]
    DegenerateMediator(f64),

    #[error("outcome probability saturated at {0}")]
    SaturatedProbability(f64),

    #[error("{0} Monte Carlo draws requested; at least 1000 are required")]
    TooFewDraws(usize),

    #[error("{margin} margin: {source}")]
    Margin {
        margin: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn in_margin(self, margin: &'static str) -> Self {
        Error::Margin {
            margin,
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InfiniteQuantile(_) => "infinite_quantile",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::SingularDesign => "singular_design",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Support { .. } => "support",
            Error::Conditioning(_) => "conditioning",
            Error::NanObjective { .. } => "nan_objective",
            Error::Optimizer(_) => "optimizer",
            Error::ScenarioMismatch { .. } => "scenario_mismatch",
            Error::DegenerateMediator(_) => "degenerate_mediator",
            Error::SaturatedProbability(_) => "saturated_probability",
            Error::TooFewDraws(_) => "too_few_draws",
            Error::Margin { source, .. } => source.kind(),
            Error::Invalid(_) => "invalid_input",
            Error::MissingColumn(_) => "missing_column",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
