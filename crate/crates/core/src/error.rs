use thiserror::Error;

/// Errors raised by the thin-film toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("truncation mismatch: left has N={left}, right has N={right}")]
    TruncationMismatch { left: usize, right: usize },

    #[error("coefficient vector has length {len}, expected 2N+1 = {expected}")]
    BadCoefficientLength { len: usize, expected: usize },

    #[error("Sobolev index k={k} exceeds resolution limit 2N={limit}")]
    SobolevIndexTooLarge { k: u32, limit: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("snapshot format error: {0}")]
    Snapshot(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("field is not in the neutral space E0 (off-E0 content {residual:e})")]
    NotInNeutralSpace { residual: f64 },

    #[error("mean of field is {actual}, expected {expected}")]
    MeanMismatch { expected: f64, actual: f64 },

    #[error("step size underflow at t={t}: dt={dt:e} below dt_min")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("positivity lost at t={t}: min h = {min_h:e}")]
    PositivityLost { t: f64, min_h: f64 },

    #[error("non-finite state encountered at t={t}")]
    NonFinite { t: f64 },

    #[error("no positive solution exists for J = {j}")]
    NoPositiveSolution { j: f64 },

    #[error("profile is not positive: |c2| = {c2} >= c1 = {c1}")]
    NotPositive { c1: f64, c2: f64 },

    #[error("singular Jacobian (smallest retained singular value {sigma:e})")]
    SingularJacobian { sigma: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("sampling too coarse to unwrap phase between t={t0} and t={t1}")]
    PhaseUnwrap { t0: f64, t1: f64 },

    #[error("ill-conditioned fit window: {0}")]
    FitWindow(String),

    #[error("nonpositive radius {radius} at theta={theta}")]
    NonPositiveRadius { theta: f64, radius: f64 },

    #[error("degenerate point set for circle fit: {0}")]
    DegenerateCircle(String),

    #[error("prediction requested too early: t={t} < {t_min}")]
    TooEarly { t: f64, t_min: f64 },

    #[error("operation requires the outer layer")]
    WrongLayer,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
