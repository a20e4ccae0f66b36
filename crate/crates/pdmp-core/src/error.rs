use thiserror::Error;

/// Errors produced by simulation, reweighting and estimator planning.
#[derive(Debug, Error)]
pub enum PdmpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The thinning construction evaluated the intensity above the dominating
    /// bound. The bound is part of the model contract, so this is a hard error
    /// rather than a clamp: clamping would silently bias the thinning law.
    #[error("rate bound violated: lambda({theta}, {nu}) = {lambda} > {bound} at t = {t}")]
    RateBoundViolation {
        theta: usize,
        nu: f64,
        t: f64,
        lambda: f64,
        bound: f64,
    },

    /// A corrective-weight factor hit zero or went non-finite, which signals
    /// violated positivity assumptions on the auxiliary characteristics.
    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    #[error("numerical failure at t = {t}: {detail}")]
    NumericalFailure { t: f64, detail: String },

    /// Multilevel planning produced fewer than two levels; the caller should
    /// fall back to a classical Monte Carlo plan.
    #[error("degenerate multilevel plan: {0}")]
    PlanDegenerate(String),
}

pub type Result<T> = std::result::Result<T, PdmpError>;

pub(crate) fn invalid(msg: impl Into<String>) -> PdmpError {
    PdmpError::InvalidArgument(msg.into())
}
