use thiserror::Error;

/// Errors produced by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Closed-form equivalent kernels exist only for orders 1..=4.
    #[error("unsupported penalty order m = {m}; closed-form kernels cover m in 1..=4")]
    UnsupportedOrder { m: usize },

    /// A penalty, design, or configuration failed validation.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two or more design abscissae coincide; pre-bin ties before fitting.
    #[error("duplicate design abscissae at t = {t} (rows {first} and {second}); pre-bin tied observations")]
    DuplicateAbscissae { t: f64, first: usize, second: usize },

    /// Evaluation outside the design domain `[0, 1]`.
    #[error("argument t = {t} lies outside [0, 1]; the estimator does not extrapolate")]
    OutOfDomain { t: f64 },

    /// Kernel derivative of an order that does not exist pointwise.
    #[error("derivative order {order} not defined for penalty order m = {m} (max 2m-1 = {max})")]
    DerivativeOrder { order: usize, m: usize, max: usize },

    /// The penalized system could not be factorized even after jitter.
    #[error("penalized system is numerically singular (minimum pivot {min_pivot:.3e}); check for near-duplicate abscissae or extreme penalty contrasts")]
    IllConditioned { min_pivot: f64 },

    /// A selection score is undefined for this fit, e.g. zero residual
    /// degrees of freedom.
    #[error("degenerate selection score: {0}")]
    Degenerate(String),

    /// A curve segment contains no grid points.
    #[error("segment {segment} ({lo:.6}..{hi:.6}) contains no curve grid points; use a finer curve grid")]
    GridTooCoarse { segment: usize, lo: f64, hi: f64 },

    /// Too many Monte Carlo replicates failed to fit.
    #[error("{failed} of {total} replicates failed (> 5%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },

    /// A multi-stage pipeline failed; names the stage for diagnosis.
    #[error("pipeline stage '{stage}' failed: {source}")]
    Pipeline {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Tags an error with the pipeline stage it came from.
    pub(crate) fn stage(stage: &'static str) -> impl Fn(Error) -> Error {
        move |source| Error::Pipeline {
            stage,
            source: Box::new(source),
        }
    }
}
