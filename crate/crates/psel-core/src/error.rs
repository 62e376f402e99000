//! Error type shared by every module in the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong when building models, evaluating bounds, or
/// running estimators.
///
/// Solver *non-convergence* is deliberately not an error: iterative solvers
/// return their best iterate with `converged = false` so that Monte-Carlo
/// experiments can keep going. Only structural failures (bad inputs,
/// singular systems, data on which an estimator is undefined) surface here.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs whose shapes disagree (parameter length vs. populations, ragged
    /// observation matrices, weight vectors of the wrong length).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A parameter value outside the family's domain (non-finite entries,
    /// non-positive scale for exponential/uniform populations).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A model description that violates its own invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Observations that cannot have come from the declared model shape.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A configuration value that fails validation before any computation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The uniform family has no score/information function; operations that
    /// need regularity refuse to run instead of returning garbage.
    #[error("non-regular family: {0}")]
    NonRegularFamily(String),

    /// No analytic expression is implemented for this rule/family combination;
    /// use the Monte-Carlo path instead.
    #[error("no analytic form: {0}")]
    UnsupportedAnalytic(String),

    /// No closed-form information matrix or bound exists for this
    /// rule/family/sample-size combination; use a Monte-Carlo method.
    #[error("no closed form: {0}")]
    UnsupportedClosedForm(String),

    /// Post-selection information matrix too ill-conditioned to invert.
    #[error("singular post-selection information matrix (condition estimate {condition:.3e})")]
    SingularPsfim { condition: f64 },

    /// Newton system could not be solved at some iteration.
    #[error("singular Hessian at iteration {iteration}")]
    SingularHessian { iteration: usize },

    /// Maximization-by-parts iterate escaped: the information-dominance
    /// condition that guarantees contraction does not hold for these data.
    #[error(
        "information dominance violated: iterate norm {norm:.3e} exceeds limit {limit:.3e} at iteration {iteration}"
    )]
    InformationDominanceViolated {
        norm: f64,
        limit: f64,
        iteration: usize,
    },

    /// A simulated finite-difference frequency came out exactly zero, so the
    /// log-probability difference is undefined; increase replications or move
    /// the evaluation point.
    #[error("zero selection frequency in simulated gradient (component {component}, {side} side)")]
    ZeroFrequency { component: usize, side: &'static str },

    /// Data on which a closed-form estimator is undefined (a denominator
    /// vanishes exactly).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// The scalar fixed-point equation has no root in the open unit interval:
    /// the conditional likelihood attains its supremum on the boundary
    /// (near-tie data) and no post-selection maximum likelihood estimate
    /// exists.
    #[error("fixed point not bracketed: {0}")]
    FixedPointNotBracketed(String),

    /// A randomized selection rule needs a random draw.
    #[error("randomized selection requires an RNG")]
    RandomizedNeedsRng,

    /// Too many replications failed for one estimator inside an experiment.
    /// `rate` is the failed fraction of all replications.
    #[error(
        "estimator `{estimator}` failed on {failures}/{total} replications, first failure: {first}"
    )]
    ExcessiveFailures {
        estimator: String,
        failures: u64,
        total: u64,
        rate: f64,
        first: String,
    },

    /// An estimator identifier string that does not name any estimator.
    #[error("unknown estimator identifier `{0}`")]
    UnknownEstimator(String),

    /// A preset name that does not exist.
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}
