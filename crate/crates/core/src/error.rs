use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid exponent {p} for dimension {dim}: 2N - p(N-2) = {denominator} is not positive")]
    InvalidExponent { p: f64, dim: usize, denominator: f64 },

    #[error("inversion of the antiderivative did not converge at t = {t} (residual {residual:e})")]
    TransformNotConverged { t: f64, residual: f64 },

    #[error("element {index} of batch: {source}")]
    BatchElement {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line search failed at iteration {iteration}: no Armijo step above {min_step:e} (phi = {phi})")]
    LineSearchFailure {
        iteration: usize,
        phi: f64,
        min_step: f64,
    },

    #[error("degenerate subspace at level {level}: A = {a:e} (bumps miss the support of k)")]
    DegenerateSubspace { level: usize, a: f64 },

    #[error("geometry violation at level {level}: sampled phi = {phi:e} is not negative")]
    GeometryViolation { level: usize, phi: f64 },

    #[error("coercivity violation along direction {direction}: {detail}")]
    CoercivityViolation { direction: usize, detail: String },

    #[error("property violation in {suite}/{property}: margin {margin:e} at witness {witness:?}")]
    PropertyViolation {
        suite: String,
        property: String,
        margin: f64,
        witness: Vec<f64>,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("configuration error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
