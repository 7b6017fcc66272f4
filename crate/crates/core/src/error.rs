use thiserror::Error;

/// Errors surfaced by construction, validation and solver entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density must be strictly positive; offending cell (m={m}, f={f}) has value {value}")]
    NonPositiveDensity { m: f64, f: f64, value: f64 },

    #[error("distribution spec cannot be normalized: {0}")]
    Unnormalizable(String),

    #[error("grids are incompatible: {0}")]
    GridMismatch(String),

    #[error("score {score} is not attainable at quality {quality}")]
    InfeasibleScore { score: f64, quality: f64 },

    #[error("price-quality-ratio rule is undefined at quality 0")]
    PqrZeroQuality,

    #[error("custom scoring rule violates monotonicity: {0}")]
    MonotonicityViolation(String),

    #[error("perturbation makes the density non-positive; maximal admissible eps is {max_eps}")]
    PerturbationTooLarge { max_eps: f64 },

    #[error("pseudotype projection landed outside the extended range [{lo}, {hi}] (target score {score}); this indicates a bug")]
    ProjectionOutOfRange { lo: f64, hi: f64, score: f64 },

    #[error("rule family {0} has no closed-form classification; use the linearity test")]
    UnsupportedFamily(String),

    #[error("closed-form and numeric coarse-beliefs verdicts disagree: closed-form={closed_form}, numeric={numeric} (nonlinearity {score})")]
    VerdictInconsistency {
        closed_form: bool,
        numeric: bool,
        score: f64,
    },

    #[error("rule does not admit a coarse beliefs equilibrium; the order-invariant solver is not valid (use the best-response solver)")]
    NotInvariant,

    #[error("degenerate type: conditioning denominator is zero")]
    DegenerateType,

    #[error("solver did not converge after {iterations} iterations (sup change {sup_change})")]
    NoConvergence { iterations: usize, sup_change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
