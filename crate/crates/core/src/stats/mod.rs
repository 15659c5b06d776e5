//! Paired significance testing and variance-based sensitivity analysis.

pub mod sobol;
pub mod wilcoxon;

use thiserror::Error;

pub use sobol::{sobol_matrix, sobol_total_order, Factor, SobolMatrix, SobolOptions, SobolReport};
pub use wilcoxon::{wilcoxon_signed_rank, Alternative, Method, WilcoxonResult};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("all paired differences are zero; the signed-rank test is undefined")]
    AllDifferencesZero,
    #[error("n_base must be a power of two and at least 64, got {0}")]
    BadBaseSize(usize),
    #[error("no factors given")]
    NoFactors,
    #[error("factor {0}: {1}")]
    BadFactor(String, String),
    #[error("output {0} has zero variance; total-order indices are undefined")]
    ZeroVariance(String),
    #[error("model returned {got} outputs, expected {expected}")]
    OutputArity { expected: usize, got: usize },
}
