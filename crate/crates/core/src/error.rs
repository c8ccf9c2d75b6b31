use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("schedule kind `{kind}` has no closed-form weak limit")]
    UnsupportedSchedule { kind: &'static str },

    /// The step minimizer is not unique; both branches are reported.
    #[error("bifurcation: two minimizers {lower} and {upper}")]
    Bifurcation { lower: f64, upper: f64 },

    /// A staircase parameter sits on one of the jump values.
    #[error("gamma = {gamma} is a bifurcation value (offending (i, j): {offending:?})")]
    BifurcationValue {
        gamma: f64,
        offending: Vec<(usize, i64)>,
    },

    #[error("objective is unbounded below near u = {near}")]
    Diverged { near: f64 },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no periodic cycle detected within {steps} steps")]
    NoCycle { steps: usize },

    #[error("motion is still pinned at T_max = {t_max}; increase T_max")]
    IncreaseTMax { t_max: f64 },

    #[error("T = {t} is too close to the singular value 1")]
    NearSingular { t: f64 },

    #[error("quadrature did not reach relative accuracy {target:e} (estimate {achieved:e})")]
    Quadrature { target: f64, achieved: f64 },

    #[error("minimization at step {step}, delta = {delta} failed: {reason}")]
    BalanceQuadrature {
        step: usize,
        delta: f64,
        reason: String,
    },

    /// Floor argument too close to an integer, or data sitting on a regime
    /// boundary.
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("candidate rectangles {first:?} and {second:?} tie")]
    RectangleTie {
        first: (i64, i64),
        second: (i64, i64),
    },

    #[error("event-driven integration exceeded {0} events")]
    Runaway(usize),

    #[error("ode integration failed: {0}")]
    Ode(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Errors caused by the data sitting on a bifurcation or degenerate
    /// set, as opposed to malformed input.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Error::Bifurcation { .. }
            | Error::BifurcationValue { .. }
            | Error::Degenerate(_)
            | Error::RectangleTie { .. }
            | Error::NearSingular { .. } => true,
            Error::Step { source, .. } => source.is_degenerate(),
            _ => false,
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput { .. } => "invalid_input",
            Error::UnsupportedSchedule { .. } => "unsupported_schedule",
            Error::Bifurcation { .. } => "bifurcation",
            Error::BifurcationValue { .. } => "bifurcation_value",
            Error::Diverged { .. } => "diverged",
            Error::Step { source, .. } => source.kind(),
            Error::NoCycle { .. } => "no_cycle",
            Error::IncreaseTMax { .. } => "increase_t_max",
            Error::NearSingular { .. } => "near_singular",
            Error::Quadrature { .. } => "quadrature",
            Error::BalanceQuadrature { .. } => "balance_quadrature",
            Error::Degenerate(_) => "degenerate",
            Error::RectangleTie { .. } => "rectangle_tie",
            Error::Runaway(_) => "runaway",
            Error::Ode(_) => "ode",
        }
    }
}
