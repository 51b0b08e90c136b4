//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("fixed-point iteration did not converge within {iterations} iterations (residual {residual:.3e}); the time step is too large for this state size")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("ad-series terms stopped decaying at k = {k} (last ratio {ratio:.3}); the CFL condition is violated")]
    NonDecayingSeries { k: usize, ratio: f64 },

    #[error("CFL condition violated: h = {h:.6e} exceeds the maximum admissible step {h_max:.6e}")]
    CflViolation { h: f64, h_max: f64 },

    #[error("remainder extraction fit is ill-conditioned (residual {residual:.3e} exceeds {tolerance:.3e}); adjust the epsilon stencil")]
    IllConditionedFit { residual: f64, tolerance: f64 },

    #[error("unsupported Z-field index pair (ell={ell}, j={j}); only (0,0), (1,0) and (1,1) are available")]
    UnsupportedZIndex { ell: usize, j: usize },

    #[error("reference integrator step size underflow (needed {needed} substeps)")]
    Stiffness { needed: usize },

    #[error("defect values reached the rounding floor (min defect {min_defect:.3e}); increase the initial state norm")]
    FloorReached { min_defect: f64 },

    #[error("study failed at step {step}: {source}")]
    StudyFailure {
        step: u64,
        #[source]
        source: Box<CoreError>,
    },
}
