use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter t = {t} outside domain [{lo}, {hi}]")]
    Domain { t: f64, lo: f64, hi: f64 },
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("singular point near t = {t}")]
    SingularPoint { t: f64 },
    #[error("invalid group diagram: {0}")]
    InvalidDiagram(String),
    #[error("bad input data: {0}")]
    Data(String),
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
