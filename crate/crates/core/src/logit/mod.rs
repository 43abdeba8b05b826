//! Binary logistic regression fitted from scratch by iteratively
//! reweighted least squares, with Wald inference statistics, odds ratios,
//! and p-value-driven stepwise variable selection.

mod design;
mod fit;
mod num;
mod stepwise;

pub use design::{build_design, ColumnSpec, DesignMatrix, Encoding};
pub use fit::{
    fit, intercept_only, LogitModel, OddsRatioRow, TermStats, DEFAULT_MAX_ITER, DEFAULT_TOL,
    DIVERGENCE_BOUND,
};
pub use num::{log_likelihood, normal_cdf, sigmoid, two_sided_p};
pub use stepwise::{stepwise_select, StepAction, StepRecord, StepwiseConfig, StepwiseResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogitError {
    #[error("feature `{0}` is not in the schema")]
    UnknownFeature(String),
    #[error("labels are single-class ({0} of {1} rows positive); cannot fit")]
    SingleClass(usize, usize),
    #[error("design matrix has no rows after dropping incomplete ones")]
    EmptyDesign,
    #[error(
        "quasi-complete separation detected: |coefficient| of `{feature}` exceeded {bound} \
         during iteration"
    )]
    Separation { feature: String, bound: f64 },
    #[error("information matrix is singular; check `{0}` for collinearity with other features")]
    Singular(String),
    #[error("event is missing required feature `{0}`")]
    MissingFeature(String),
    #[error("event value for `{variable}` is not {expected}")]
    WrongValueKind {
        variable: String,
        expected: &'static str,
    },
    #[error("classification threshold must lie strictly inside (0,1), got {0}")]
    BadThreshold(f64),
    #[error("stepwise config invalid: alpha_enter {enter} must be <= alpha_remove {remove}")]
    BadStepwiseConfig { enter: f64, remove: f64 },
    #[error("no candidate features given")]
    NoCandidates,
}
