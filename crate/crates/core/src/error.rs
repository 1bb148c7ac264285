use thiserror::Error;

/// Errors raised by fitting, evaluation, simulation and file parsing.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown ion `{0}`")]
    UnknownIon(String),
    #[error("duplicate ion `{0}` in registry")]
    DuplicateIon(String),
    #[error("invalid ion `{symbol}`: {reason}")]
    InvalidIon { symbol: String, reason: String },

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),
    #[error("non-positive concentration {0}")]
    NonPositiveConcentration(f64),
    #[error("non-positive TDS {0} mg/L")]
    NonPositiveTds(f64),
    #[error("fitted mu is not positive ({value}) at TDS {tds} mg/L")]
    NonPositiveMu { tds: f64, value: f64 },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("observed values have zero variance")]
    ZeroVariance,

    #[error("measured concentration is zero for {ion} at step {step}")]
    ZeroMeasured { ion: String, step: usize },
    #[error("ion `{0}` missing from dataset")]
    MissingIon(String),
    #[error("theoretical concentration must be positive")]
    ZeroTheoretical,
    #[error("raw error is zero at step {0}")]
    ZeroRawError(usize),
    #[error("empty {0} partition")]
    EmptyPartition(&'static str),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("valence must be non-zero")]
    ZeroValence,
    #[error("logarithm argument is not positive ({0})")]
    EmptyBracket(f64),
    #[error("invalid electrode for {ion}: {reason}")]
    InvalidElectrode { ion: String, reason: String },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("parse error{}: {message}", .line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse { line: Option<u64>, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn parse(line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for malformed input (as opposed to a numerical or fit failure).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Io(_)
                | Error::UnknownIon(_)
                | Error::DuplicateIon(_)
                | Error::InvalidIon { .. }
                | Error::InvalidDataset(_)
                | Error::InvalidScenario(_)
                | Error::InvalidElectrode { .. }
                | Error::MissingIon(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line());
        Error::Parse {
            line,
            message: e.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
