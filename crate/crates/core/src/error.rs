use thiserror::Error;

/// Errors raised by the analysis library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("QR iteration did not converge (active row {row}, {bits}-bit arithmetic)")]
    EigenNoConvergence { row: usize, bits: usize },
    #[error("eigensolver failed at xi = {xi}: {source}")]
    EigenAt {
        xi: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("fit window {window} has {count} points, at least 8 are required")]
    FitWindowTooSmall { window: &'static str, count: usize },
    #[error("nonnegative abscissa {value} at xi = {xi} inside the {window} fit window")]
    NonnegativeAbscissa { window: &'static str, xi: f64, value: f64 },
    #[error("certification failed in stage {stage}: {detail} (worst xi = {worst_xi}, margin = {margin})")]
    Certification {
        stage: &'static str,
        detail: String,
        worst_xi: f64,
        margin: f64,
    },
    #[error("infeasible exponent vectors: {0} constraint(s) violated")]
    Infeasible(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
