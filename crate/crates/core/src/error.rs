use thiserror::Error;

/// Errors produced by the analytic engines and the Monte Carlo oracle.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    /// A parameter fails its domain constraint (e.g. alpha outside (0,1)).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A period index lies outside the market horizon.
    #[error("period {t} is outside the market horizon 1..={horizon}")]
    PeriodOutOfRange { t: u32, horizon: u32 },

    /// The time-averaged fundamental value is zero, so relative deviation
    /// is undefined.
    #[error("time-averaged fundamental value is zero; relative deviation is undefined")]
    ZeroMeanFundamental,

    /// Prevailing prices cannot be formed (one-sided market, empty
    /// population, vanishing denominator).
    #[error("degenerate market: {0}")]
    DegenerateMarket(String),

    /// An operation was invoked outside the regime it is defined for.
    #[error("configuration violates assumption `{assumption}`: {detail}")]
    AssumptionViolated { assumption: String, detail: String },

    /// A real-valued input lies outside the formula's domain.
    #[error("domain error: {0}")]
    Domain(String),
}

impl EngineError {
    pub(crate) fn assumption(assumption: &str, detail: impl Into<String>) -> Self {
        EngineError::AssumptionViolated {
            assumption: assumption.to_string(),
            detail: detail.into(),
        }
    }
}
