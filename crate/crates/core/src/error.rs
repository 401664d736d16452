use thiserror::Error;

use crate::special_fns::BesselError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Bessel(#[from] BesselError),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("component {component} collapsed (n_g = {size:.3})")]
    ComponentCollapse { component: usize, size: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("fit failed: {0}")]
    FitFailed(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Bessel(_) => "bessel_range",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Dimension(_) => "dimension",
            Error::ComponentCollapse { .. } => "component_collapse",
            Error::Numerical(_) => "numerical",
            Error::FitFailed(_) => "fit_failed",
            Error::Parse { .. } => "parse",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Bessel(_)
                | Error::ComponentCollapse { .. }
                | Error::Numerical(_)
                | Error::FitFailed(_)
        )
    }
}
