//! Convergence diagnostics: the finite-dimensional extremal property of the
//! Bergman density, the peak-integral quadrature, curvature and Einstein
//! residuals on curves, and envelope fits.

mod curvature;
mod extremal;
mod lemma22;
mod rates;
mod series;

pub use curvature::{
    curvature_coefficient, curvature_coefficient_exact, curvature_of_potential, ddbar_fd, ddbar_richardson,
    einstein_residual, einstein_residual_of_metric, EinsteinSummary, FD_STEP,
};
pub use extremal::{bergman_extremal_gap, bergman_extremal_gap_at, ExtremalCheck};
pub use lemma22::{gauss_kronrod, lemma22_quadrature, peak_scale, Lemma22};
pub use rates::{chain_log_ratios, envelope_monotonicity, rate_fit, EnvelopeReport, RateFit};
pub use series::{convergence_series, ConvergenceRow, ConvergenceSeries};
