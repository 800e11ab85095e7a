use thiserror::Error;

/// Errors raised by the current-coupon library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouponError {
    /// An argument fell outside the domain of a function.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// Invalid model or Monte Carlo configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A bracketing root-finder was handed an interval without a sign change.
    #[error("bracket failure in {op}: residual({lo:.3e}) = {f_lo:.6e}, residual({hi:.3e}) = {f_hi:.6e}")]
    Bracket {
        op: &'static str,
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// A solver produced an unusable result (ill-conditioned ratio, non-finite value, ...).
    #[error("solver error in {op} at x = {x:.6}: {detail}")]
    Solver {
        op: &'static str,
        x: f64,
        detail: String,
    },
}

impl CouponError {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        CouponError::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn solver(op: &'static str, x: f64, detail: impl Into<String>) -> Self {
        CouponError::Solver {
            op,
            x,
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CouponError>;
