use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("validation: {0}")]
    Validation(String),
    #[error("singular design matrix: {0}")]
    SingularDesign(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("degenerate perfect fit: weighted residual sum of squares is zero")]
    PerfectFit,
}

pub type Result<T> = std::result::Result<T, Error>;
