use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("blow-up expected before r = {r_cap} but |zeta| never reached the cutoff")]
    BlowupUndetected { r_cap: f64 },

    #[error("step size underflow at r = {r} (h = {h:e})")]
    StepFailure { r: f64, h: f64 },

    #[error("zeta-form and epsilon-form disagree: {detail} (worst at r = {worst_r})")]
    CrossCheckFailure { worst_r: f64, detail: String },

    #[error("ordering violated at r = {r}: margin {margin:e}")]
    OrderingViolation { r: f64, margin: f64 },

    #[error("bracket failure: {0}")]
    BracketFailure(String),

    #[error("non-monotone boundary slope between c = {c_lo} and c = {c_hi}")]
    NonMonotone { c_lo: f64, c_hi: f64 },

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("incompatible initial data: {0}")]
    Compatibility(String),

    #[error("initial data satisfies none of the hypotheses (A)-(D)")]
    HypothesisNotMet,

    #[error("mean curvature lost its sign at t = {t}, r = {r} (H = {h:e})")]
    SignLoss { t: f64, r: f64, h: f64 },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

impl Error {
    /// Exit code used by the command-line front end:
    /// 1 numeric failure, 2 invalid input or regime, 3 degenerate parabolicity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_)
            | Error::Regime(_)
            | Error::InvalidInput(_)
            | Error::NotApplicable(_)
            | Error::Compatibility(_)
            | Error::HypothesisNotMet
            | Error::GridMismatch(_) => 2,
            Error::SignLoss { .. } => 3,
            _ => 1,
        }
    }

    /// Short machine-readable tag for the diagnostic stream.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Regime(_) => "regime",
            Error::InvalidInput(_) => "invalid_input",
            Error::NotApplicable(_) => "not_applicable",
            Error::BlowupUndetected { .. } => "blowup_undetected",
            Error::StepFailure { .. } => "step_failure",
            Error::CrossCheckFailure { .. } => "cross_check_failure",
            Error::OrderingViolation { .. } => "ordering_violation",
            Error::BracketFailure(_) => "bracket_failure",
            Error::NonMonotone { .. } => "non_monotone",
            Error::NoConvergence(_) => "no_convergence",
            Error::Compatibility(_) => "compatibility",
            Error::HypothesisNotMet => "hypothesis_not_met",
            Error::SignLoss { .. } => "sign_loss",
            Error::CflViolation { .. } => "cfl_violation",
            Error::NonFinite { .. } => "non_finite",
            Error::GridMismatch(_) => "grid_mismatch",
        }
    }
}
