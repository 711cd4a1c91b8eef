use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("mesh mismatch: expected h = {expected}, found h = {found}")]
    MeshMismatch { expected: f64, found: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported capability: {0}")]
    Unsupported(String),

    #[error("plus-factor vanishes at node xi = ({xi1}, {xi2})")]
    VanishingFactor { xi1: f64, xi2: f64 },

    #[error("system not uniquely solvable: condition estimate {condition:e} exceeds {threshold:e}")]
    NearSingular { condition: f64, threshold: f64 },

    #[error(
        "operator norm estimate did not converge after {iterations} iterations \
         (last estimate {estimate:e}, relative change {change:e})"
    )]
    NotConverged {
        iterations: usize,
        estimate: f64,
        change: f64,
    },

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_mesh(expected: f64, found: f64) -> Result<()> {
    if (expected - found).abs() <= 1e-14 * expected.abs().max(found.abs()) {
        Ok(())
    } else {
        Err(Error::MeshMismatch { expected, found })
    }
}
