use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Verification failures are not errors: they are reported through
/// `ViolationReport` and `TheoremChecklist`. Errors are reserved for broken
/// preconditions and malformed inputs.
#[derive(Debug, Error)]
pub enum Error {
    #[error("quasi-steady-state map empty at x = {x:?}")]
    EmptyQuasiSteadyState { x: Vec<f64> },

    #[error("{map} returned an empty selection bundle at {at:?}")]
    EmptyBundle { map: &'static str, at: Vec<f64> },

    #[error("jump map empty on jump set at {at:?}")]
    EmptyJumpMap { at: Vec<f64> },

    #[error("flow started outside flow set at {at:?}")]
    FlowStartOutside { at: Vec<f64> },

    #[error("event bracket invalid: predicate does not change over the bracket")]
    EventBracketInvalid,

    #[error("jump requested outside the jump set at {at:?}")]
    JumpOutsideJumpSet { at: Vec<f64> },

    #[error("no solution from initial condition {at:?}: outside C and D")]
    NoSolution { at: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("function not evaluable near {at:?}")]
    NotEvaluable { at: Vec<f64> },

    #[error("no valid initial conditions found after {attempts} attempts")]
    NoInitialConditions { attempts: usize },

    #[error("no points found on level set c = {level} after bounded search")]
    EmptyLevelSet { level: f64 },

    #[error("unknown example `{0}`")]
    UnknownExample(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
