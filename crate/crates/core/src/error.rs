use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain of the requested operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A row of an input file failed to parse or validate.
    #[error("row {row}: field `{field}`: {message}")]
    Row {
        row: usize,
        field: String,
        message: String,
    },

    #[error("unknown study id `{0}`")]
    UnknownId(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("variant `{0}` has zero gene-exposure association")]
    ZeroExposure(String),

    #[error("regression error: {0}")]
    Regression(String),

    #[error("root not bracketed in [{lo}, {hi}]: {context}")]
    NotBracketed { lo: f64, hi: f64, context: String },

    #[error("contract error: {0}")]
    Contract(String),

    #[error("invalid request: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Row { .. } => "row",
            Error::UnknownId(_) => "unknown_id",
            Error::DuplicateId(_) => "duplicate_id",
            Error::ZeroExposure(_) => "zero_exposure",
            Error::Regression(_) => "regression",
            Error::NotBracketed { .. } => "not_bracketed",
            Error::Contract(_) => "contract",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
        }
    }

    /// True for errors caused by bad input rather than by the engine itself.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::NotBracketed { .. } | Error::Contract(_))
    }
}
